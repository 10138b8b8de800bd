"""Image/mask/feature loading, color conversion and the on-disk dataset layout.

Dataset layout::

    <root>/images/<id>.(jpg|png)     8-bit sRGB images
    <root>/masks/<id>.png            single-channel ground-truth masks
    <root>/features/<id>.csv         optional per-node saliency features
    <root>/seedmaps/<method>/<id>.png  optional external seed maps
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image, UnidentifiedImageError
from skimage.color import rgb2hsv, rgb2lab

from .errors import DecodeError, ParseError, ShapeMismatch

COLOR_SPACES = ("Lab", "RGB", "HSV")

MIN_SIDE = 8
MASK_THRESHOLD = 128  # 8-bit masks ship near-binary; midpoint split


@dataclass
class ImageSample:
    """One dataset entry: pixels plus (optionally) its binary ground truth."""

    id: str
    pixels: np.ndarray  # H x W x 3 uint8 sRGB
    gt_mask: Optional[np.ndarray] = None  # H x W uint8 in {0, 1}
    source_path: str = ""

    def validate(self) -> "ImageSample":
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ShapeMismatch(f"{self.id}: expected HxWx3 pixels, got {self.pixels.shape}")
        h, w = self.pixels.shape[:2]
        if h < MIN_SIDE or w < MIN_SIDE:
            raise ShapeMismatch(f"{self.id}: image {h}x{w} smaller than {MIN_SIDE}x{MIN_SIDE}")
        if self.gt_mask is not None:
            if self.gt_mask.shape != (h, w):
                raise ShapeMismatch(
                    f"{self.id}: mask {self.gt_mask.shape} != image {(h, w)}"
                )
            vals = np.unique(self.gt_mask)
            if not np.isin(vals, (0, 1)).all():
                raise ShapeMismatch(f"{self.id}: mask values {vals} not in {{0,1}}")
        return self

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[:2]


@dataclass
class FeatureBank:
    """External per-node saliency features, one column per feature, values in [0, 1]."""

    node_features: np.ndarray  # N x Z float
    names: list[str]

    @property
    def n_features(self) -> int:
        return self.node_features.shape[1]


def _open_image(path: str | Path) -> Image.Image:
    try:
        img = Image.open(path)
        img.load()
        return img
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DecodeError(f"cannot decode {path}: {exc}") from exc


def load_sample(image_path: str | Path, mask_path: str | Path | None = None) -> ImageSample:
    """Load an image (and optional mask) into a validated :class:`ImageSample`.

    The mask is binarized at pixel value >= 128 and must match the image size.
    """
    image_path = Path(image_path)
    pixels = np.asarray(_open_image(image_path).convert("RGB"), dtype=np.uint8)

    gt = None
    if mask_path is not None:
        mask_img = _open_image(mask_path)
        mask = np.asarray(mask_img.convert("L"))
        if mask.shape != pixels.shape[:2]:
            raise ShapeMismatch(
                f"mask {mask.shape} does not match image {pixels.shape[:2]} for {image_path}"
            )
        gt = (mask >= MASK_THRESHOLD).astype(np.uint8)

    return ImageSample(
        id=image_path.stem, pixels=pixels, gt_mask=gt, source_path=str(image_path)
    ).validate()


def convert_color(pixels: np.ndarray, space: str) -> np.ndarray:
    """Convert 8-bit sRGB pixels to the requested feature space.

    Lab uses the D65 reference white and keeps its native ranges
    (L in [0,100], a/b in roughly [-128,127]).  RGB is a float passthrough in
    [0,255].  HSV is rescaled per channel to [0,255] so that Euclidean edge
    distances are comparable across spaces.
    """
    if pixels.dtype != np.uint8:
        raise ShapeMismatch("convert_color expects 8-bit sRGB input")
    if space == "RGB":
        return pixels.astype(np.float64)
    if space == "Lab":
        return rgb2lab(pixels)
    if space == "HSV":
        return rgb2hsv(pixels) * 255.0
    raise ValueError(f"unknown color space {space!r} (expected one of {COLOR_SPACES})")


def rescale_unit(values: np.ndarray) -> np.ndarray:
    """Min-max rescale to [0,1]; a constant input maps to all-0.5."""
    values = np.asarray(values, dtype=np.float64)
    lo, hi = values.min(), values.max()
    if hi - lo == 0.0:
        return np.full_like(values, 0.5)
    return (values - lo) / (hi - lo)


def load_feature_bank(path: str | Path, segmentation) -> FeatureBank:
    """Load a per-node feature CSV and rescale every column to [0,1].

    The file must have a header row of feature names followed by exactly one
    row per superpixel node.  Constant columns map to all-0.5.
    """
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            rows = list(reader)
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    if len(rows) < 2:
        raise ParseError(f"{path}: expected a header row plus data rows")
    names = [name.strip() for name in rows[0]]
    try:
        data = np.array([[float(v) for v in row] for row in rows[1:]], dtype=np.float64)
    except ValueError as exc:
        raise ParseError(f"{path}: non-numeric feature value ({exc})") from exc
    if data.ndim != 2 or data.shape[1] != len(names):
        raise ParseError(f"{path}: ragged rows")
    if data.shape[0] != segmentation.n_nodes:
        raise ShapeMismatch(
            f"{path}: {data.shape[0]} rows but segmentation has {segmentation.n_nodes} nodes"
        )
    if not np.isfinite(data).all():
        raise ParseError(f"{path}: non-finite feature value")
    cols = np.column_stack([rescale_unit(data[:, z]) for z in range(data.shape[1])])
    return FeatureBank(node_features=cols, names=names)


def load_gray_map(path: str | Path, shape: tuple[int, int]) -> np.ndarray:
    """Load a grayscale map as floats in [0,1], validating its size."""
    arr = np.asarray(_open_image(path).convert("L"), dtype=np.float64)
    if arr.shape != tuple(shape):
        raise ShapeMismatch(f"map {arr.shape} does not match image {tuple(shape)} for {path}")
    return arr / 255.0


def save_gray_map(path: str | Path, values: np.ndarray) -> None:
    """Write a [0,1] float map as an 8-bit grayscale PNG (value = round(255*v))."""
    arr = np.rint(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)


# --- dataset layout ---------------------------------------------------------

IMAGE_EXTENSIONS = (".jpg", ".jpeg", ".png")


@dataclass
class DatasetIndex:
    """Resolved file paths for every image id under a dataset root."""

    root: Path
    ids: list[str]
    image_paths: dict[str, Path]
    mask_paths: dict[str, Path]
    feature_paths: dict[str, Path]

    def load(self, sample_id: str, with_mask: bool = True) -> ImageSample:
        mask = self.mask_paths.get(sample_id) if with_mask else None
        return load_sample(self.image_paths[sample_id], mask)

    def features_for(self, sample_id: str) -> Optional[Path]:
        return self.feature_paths.get(sample_id)

    def seedmap_path(self, method: str, sample_id: str) -> Path:
        return self.root / "seedmaps" / method / f"{sample_id}.png"


def index_dataset(root: str | Path) -> DatasetIndex:
    """Discover images/masks/features under ``root`` (sorted by id)."""
    root = Path(root)
    image_dir = root / "images"
    if not image_dir.is_dir():
        raise ParseError(f"{root}: no images/ directory")
    image_paths: dict[str, Path] = {}
    for path in sorted(image_dir.iterdir()):
        if path.suffix.lower() in IMAGE_EXTENSIONS:
            image_paths[path.stem] = path
    mask_paths = {}
    mask_dir = root / "masks"
    if mask_dir.is_dir():
        for sid in image_paths:
            p = mask_dir / f"{sid}.png"
            if p.exists():
                mask_paths[sid] = p
    feature_paths = {}
    feat_dir = root / "features"
    if feat_dir.is_dir():
        for sid in image_paths:
            p = feat_dir / f"{sid}.csv"
            if p.exists():
                feature_paths[sid] = p
    ids = sorted(image_paths)
    return DatasetIndex(
        root=root,
        ids=ids,
        image_paths=image_paths,
        mask_paths=mask_paths,
        feature_paths=feature_paths,
    )


def split_train_test(ids: list[str]) -> tuple[list[str], list[str]]:
    """Deterministic half/half split: even positions of the sorted ids train."""
    ordered = sorted(ids)
    return ordered[0::2], ordered[1::2]
