"""Seed vector construction: Gaussian center prior, absorbed-time border prior,
and wrapped external saliency maps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGraph, EmptySeed, ShapeMismatch
from .ingest import load_gray_map
from .refine import RefinedDiffusion
from .superpixel import SuperpixelSegmentation

DEFAULT_GAUSSIAN_VARIANCES = (0.5, 1.0, 2.0)


@dataclass
class SeedVector:
    """Nonnegative per-node seed saliency with its provenance."""

    values: np.ndarray  # N nonneg floats
    kind: str  # "gaussian(var)", "absorbed-time", "external(name)"

    def validate(self) -> "SeedVector":
        if self.values.min() < 0:
            raise EmptySeed(f"{self.kind}: negative seed value")
        if not np.any(self.values > 0):
            raise EmptySeed(f"{self.kind}: all-zero seed")
        return self


def gaussian_seed(seg: SuperpixelSegmentation, variance: float) -> SeedVector:
    """Center-prior seed: a Gaussian over centroid distance from the image center.

    Centroids are scaled to [-1,1] x [-1,1] so ``variance`` is unitless and
    aspect-ratio-aware; a node exactly at the center gets 1.
    """
    if variance <= 0:
        raise ValueError("variance must be positive")
    h, w = seg.shape
    ys = 2.0 * seg.centroids[:, 0] / (h - 1) - 1.0
    xs = 2.0 * seg.centroids[:, 1] / (w - 1) - 1.0
    dist2 = ys**2 + xs**2
    values = np.exp(-dist2 / (2.0 * variance))
    return SeedVector(values=values, kind=f"gaussian({variance:g})").validate()


def absorbed_time_seed(ref: RefinedDiffusion, is_border: np.ndarray) -> SeedVector:
    """Background-prior seed from expected random-walk time to the border set.

    Diffuses the non-border indicator through the refined matrix and min-max
    rescales; slow-to-absorb (interior, salient) nodes score high.
    """
    is_border = np.asarray(is_border, dtype=bool)
    if is_border.all():
        raise DegenerateGraph("all nodes are border nodes")
    if not is_border.any():
        raise DegenerateGraph("no border nodes to absorb at")
    z = (~is_border).astype(np.float64)
    raw = ref.apply(z)
    lo, hi = raw.min(), raw.max()
    values = np.full_like(raw, 0.5) if hi - lo == 0 else (raw - lo) / (hi - lo)
    return SeedVector(values=values, kind="absorbed-time").validate()


def external_seed(map_path, seg: SuperpixelSegmentation) -> SeedVector:
    """Wrap an external grayscale saliency map as a per-node seed.

    Node values are pixel means of the [0,1]-scaled map, then min-max
    rescaled; an (unusual) constant map is kept as-is.
    """
    gray = load_gray_map(map_path, seg.shape)
    return external_seed_from_array(gray, seg, name=str(map_path))


def external_seed_from_array(
    gray: np.ndarray, seg: SuperpixelSegmentation, name: str = "array"
) -> SeedVector:
    """Same as :func:`external_seed` for an in-memory [0,1] map."""
    gray = np.asarray(gray, dtype=np.float64)
    if gray.shape != seg.shape:
        raise ShapeMismatch(f"map {gray.shape} does not match segmentation {seg.shape}")
    sums = np.bincount(seg.labels.ravel(), weights=gray.ravel(), minlength=seg.n_nodes)
    means = sums / seg.pixel_count
    lo, hi = means.min(), means.max()
    values = means if hi - lo == 0 else (means - lo) / (hi - lo)
    return SeedVector(values=values, kind=f"external({name})").validate()
