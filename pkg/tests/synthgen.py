"""Procedural corpus generator for tests and the desk-scale acceptance run.

Images are textured background gradients with one or two contrasting blob
objects placed around (but not exactly at) the center, mimicking the
structure of salient-object benchmarks.  Feature CSVs carry noisy versions of
the per-node ground-truth coverage (a stand-in for an external feature
extractor); seed maps are blurred ground truth with salt noise.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from superdiff.ingest import ImageSample
from superdiff.superpixel import segment
from superdiff.train import node_ground_truth

BG_COLORS = [
    (np.array([70, 90, 110]), np.array([120, 140, 150])),
    (np.array([90, 110, 70]), np.array([140, 160, 120])),
    (np.array([110, 100, 90]), np.array([160, 150, 130])),
    (np.array([60, 70, 100]), np.array([100, 120, 160])),
]
FG_COLORS = [
    np.array([200, 60, 50]),
    np.array([220, 170, 40]),
    np.array([40, 170, 190]),
    np.array([180, 60, 170]),
    np.array([40, 160, 60]),
]


def _ellipse(yy, xx, cy, cx, ry, rx, theta) -> np.ndarray:
    dy, dx = yy - cy, xx - cx
    u = dy * np.cos(theta) - dx * np.sin(theta)
    v = dy * np.sin(theta) + dx * np.cos(theta)
    return (u / ry) ** 2 + (v / rx) ** 2 <= 1.0


def make_scene(seed: int, size: tuple[int, int] = (96, 96)) -> ImageSample:
    """One synthetic image with its binary mask.

    Backgrounds carry distractor patches of background-family colors so that
    raw color diffusion is noisy; objects have moderate contrast and are only
    loosely centered.
    """
    rng = np.random.default_rng(np.random.SeedSequence([20260809, seed]))
    h, w = size
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)

    lo, hi = BG_COLORS[int(rng.integers(len(BG_COLORS)))]
    angle = rng.uniform(0, 2 * np.pi)
    ramp = (np.cos(angle) * xx / w + np.sin(angle) * yy / h + 1.0) / 2.0
    img = lo[None, None, :] + ramp[:, :, None] * (hi - lo)[None, None, :]

    # background clutter: non-salient tinted patches in bg-family tones
    for _ in range(int(rng.integers(3, 8))):
        patch = _ellipse(
            yy,
            xx,
            rng.uniform(0, h),
            rng.uniform(0, w),
            rng.uniform(0.06 * h, 0.18 * h),
            rng.uniform(0.06 * w, 0.18 * w),
            rng.uniform(0, np.pi),
        )
        shade = rng.uniform(0.5, 1.6)
        tint = rng.normal(0, 14.0, 3)
        img[patch] = img[patch] * shade + tint[None, :]

    mask = np.zeros((h, w), dtype=bool)
    n_blobs = 1 if rng.random() < 0.75 else 2
    bg_mean = (lo + hi) / 2.0
    base = FG_COLORS[int(rng.integers(len(FG_COLORS)))].astype(np.float64)
    contrast = rng.uniform(0.45, 0.8)  # pull object toward the background tone
    color = contrast * base + (1 - contrast) * bg_mean + rng.normal(0, 8.0, 3)
    for _ in range(n_blobs):
        mask |= _ellipse(
            yy,
            xx,
            rng.uniform(0.28 * h, 0.72 * h),
            rng.uniform(0.28 * w, 0.72 * w),
            rng.uniform(0.10 * h, 0.2 * h),
            rng.uniform(0.10 * w, 0.2 * w),
            rng.uniform(0, np.pi),
        )
    img[mask] = color[None, :]
    img += rng.normal(0, 11.0, img.shape)

    pixels = np.clip(img, 0, 255).astype(np.uint8)
    return ImageSample(
        id=f"syn{seed:04d}", pixels=pixels, gt_mask=mask.astype(np.uint8)
    )


def noisy_seed_map(gt_mask: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Blurred ground truth plus 20% salt noise, in [0, 1]."""
    blurred = gaussian_filter(gt_mask.astype(np.float64), sigma=8.0)
    if blurred.max() > 0:
        blurred /= blurred.max()
    salt = rng.random(gt_mask.shape) < 0.20
    blurred[salt] = 1.0
    return blurred


def node_features_for(seg, gt_mask: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Three per-node features: two noisy coverage signals and one pure noise."""
    coverage = node_ground_truth(seg, gt_mask)
    hits = np.bincount(
        seg.labels.ravel(), weights=gt_mask.ravel().astype(float), minlength=seg.n_nodes
    )
    frac = hits / seg.pixel_count
    f1 = np.clip(frac + rng.normal(0, 0.15, seg.n_nodes), 0, 1)
    f2 = np.clip(0.8 * coverage + rng.normal(0, 0.2, seg.n_nodes), 0, 1)
    f3 = rng.random(seg.n_nodes)
    return np.column_stack([f1, f2, f3])


def write_corpus(
    root: Path,
    n_images: int,
    size: tuple[int, int] = (96, 96),
    n_superpixels: int = 120,
    compactness: float = 10.0,
    with_features: bool = True,
    with_seedmaps: bool = True,
    seed: int = 0,
) -> list[str]:
    """Write a dataset-layout corpus under ``root``; returns the sorted ids."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(exist_ok=True)
    if with_features:
        (root / "features").mkdir(exist_ok=True)
    if with_seedmaps:
        (root / "seedmaps" / "noisy").mkdir(parents=True, exist_ok=True)

    ids = []
    for i in range(n_images):
        sample = make_scene(seed * 100003 + i, size)
        ids.append(sample.id)
        Image.fromarray(sample.pixels).save(root / "images" / f"{sample.id}.png")
        Image.fromarray((sample.gt_mask * 255).astype(np.uint8), mode="L").save(
            root / "masks" / f"{sample.id}.png"
        )
        rng = np.random.default_rng(np.random.SeedSequence([7, seed, i]))
        if with_features:
            seg = segment(sample, n_superpixels, compactness)
            feats = node_features_for(seg, sample.gt_mask, rng)
            lines = ["coverage_a,coverage_b,noise"]
            lines += [",".join(f"{v:.6f}" for v in row) for row in feats]
            (root / "features" / f"{sample.id}.csv").write_text("\n".join(lines) + "\n")
        if with_seedmaps:
            noisy = noisy_seed_map(sample.gt_mask, rng)
            Image.fromarray(np.rint(noisy * 255).astype(np.uint8), mode="L").save(
                root / "seedmaps" / "noisy" / f"{sample.id}.png"
            )
    return sorted(ids)
