"""Scikit-learn style front end: fit on ground-truth images, predict saliency maps."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .errors import FeatureMissing, InsufficientData
from .ingest import FeatureBank, ImageSample, load_sample
from .superpixel import (
    DEFAULT_COMPACTNESS,
    DEFAULT_N_SUPERPIXELS,
    SuperpixelSegmentation,
    segment,
)
from .train import (
    DEFAULT_COLOR_SPACES,
    DEFAULT_SIGMA2_VALUES,
    ColumnBank,
    GridSettings,
    WeightVector,
    build_column_bank,
    fit_weights,
    infer,
    node_ground_truth,
    training_loss,
)
from .refine import DEFAULT_L_MAX, DEFAULT_VAR_THRESHOLD
from .seeds import DEFAULT_GAUSSIAN_VARIANCES


@dataclass
class PreparedImage:
    """Everything the integration stage needs from one image."""

    sample: ImageSample
    seg: SuperpixelSegmentation
    bank: ColumnBank
    gt_nodes: Optional[np.ndarray] = None


def as_sample(item) -> ImageSample:
    """Input validation: accept ImageSample objects or image paths."""
    if isinstance(item, ImageSample):
        return item.validate()
    if isinstance(item, (str, Path)):
        return load_sample(item)
    raise TypeError(f"expected ImageSample or path, got {type(item).__name__}")


def prepare_image(
    sample: ImageSample,
    grid: GridSettings,
    n_superpixels: int = DEFAULT_N_SUPERPIXELS,
    compactness: float = DEFAULT_COMPACTNESS,
    feature_bank: Optional[FeatureBank] = None,
    with_gt: bool = False,
) -> PreparedImage:
    """Segment one image and assemble its column bank (Alg. steps per image)."""
    seg = segment(sample, n_superpixels, compactness)
    bank = build_column_bank(sample, seg, grid, feature_bank)
    gt_nodes = None
    if with_gt:
        if sample.gt_mask is None:
            raise InsufficientData(f"{sample.id}: no ground-truth mask")
        gt_nodes = node_ground_truth(seg, sample.gt_mask)
    return PreparedImage(sample=sample, seg=seg, bank=bank, gt_nodes=gt_nodes)


def prepare_images(
    samples: Sequence[ImageSample],
    grid: GridSettings,
    n_superpixels: int = DEFAULT_N_SUPERPIXELS,
    compactness: float = DEFAULT_COMPACTNESS,
    feature_banks: Optional[Sequence[Optional[FeatureBank]]] = None,
    with_gt: bool = False,
    n_jobs: int = 1,
) -> list[PreparedImage]:
    """Prepare a batch of images, optionally across a worker pool."""
    if feature_banks is None:
        feature_banks = [None] * len(samples)
    if len(feature_banks) != len(samples):
        raise FeatureMissing(
            f"{len(feature_banks)} feature banks for {len(samples)} samples"
        )
    if n_jobs == 1:
        return [
            prepare_image(s, grid, n_superpixels, compactness, fb, with_gt)
            for s, fb in zip(samples, feature_banks)
        ]
    return Parallel(n_jobs=n_jobs)(
        delayed(prepare_image)(s, grid, n_superpixels, compactness, fb, with_gt)
        for s, fb in zip(samples, feature_banks)
    )


class SuperDiffusion(BaseEstimator):
    """Salient-object detector integrating many refined graph diffusions.

    ``fit`` learns a global weight vector over all matrix-seed combinations in
    closed form from ground-truth masks; ``predict`` returns per-image float
    saliency maps in [0, 1].

    Parameters mirror the experiment grid: three color spaces, scale
    parameters ``sigma2_values``, Gaussian seed variances, and the spectral
    refinement knobs (eigengap search bound, variance threshold).
    """

    def __init__(
        self,
        n_superpixels: int = DEFAULT_N_SUPERPIXELS,
        compactness: float = DEFAULT_COMPACTNESS,
        color_spaces: tuple = DEFAULT_COLOR_SPACES,
        sigma2_values: tuple = DEFAULT_SIGMA2_VALUES,
        gaussian_variances: tuple = DEFAULT_GAUSSIAN_VARIANCES,
        var_threshold: float = DEFAULT_VAR_THRESHOLD,
        variance_mode: str = "unit",
        l_max: int = DEFAULT_L_MAX,
        squared_affinity: bool = False,
        eigvec_norm: str = "euclidean",
        use_features: bool = False,
        n_jobs: int = 1,
    ):
        self.n_superpixels = n_superpixels
        self.compactness = compactness
        self.color_spaces = color_spaces
        self.sigma2_values = sigma2_values
        self.gaussian_variances = gaussian_variances
        self.var_threshold = var_threshold
        self.variance_mode = variance_mode
        self.l_max = l_max
        self.squared_affinity = squared_affinity
        self.eigvec_norm = eigvec_norm
        self.use_features = use_features
        self.n_jobs = n_jobs

    def grid_settings(self) -> GridSettings:
        return GridSettings(
            color_spaces=tuple(self.color_spaces),
            sigma2_values=tuple(float(v) for v in self.sigma2_values),
            gaussian_variances=tuple(float(v) for v in self.gaussian_variances),
            var_threshold=self.var_threshold,
            variance_mode=self.variance_mode,
            l_max=self.l_max,
            squared_affinity=self.squared_affinity,
            eigvec_norm=self.eigvec_norm,
        )

    def _feature_banks(self, feature_banks, n: int):
        if not self.use_features:
            return [None] * n
        if feature_banks is None:
            raise FeatureMissing("use_features=True but no feature banks supplied")
        return list(feature_banks)

    def fit(self, X, y=None, feature_banks=None):
        """Learn integration weights from images with ground-truth masks.

        ``X`` is a sequence of :class:`ImageSample` or image paths; ``y`` may
        supply binary masks for samples that do not carry one.
        """
        samples = [as_sample(item) for item in X]
        if y is not None:
            for sample, mask in zip(samples, y):
                if mask is not None:
                    sample.gt_mask = np.asarray(mask, dtype=np.uint8)
                    sample.validate()
        if not samples:
            raise InsufficientData("fit needs at least one sample")
        prepared = prepare_images(
            samples,
            self.grid_settings(),
            self.n_superpixels,
            self.compactness,
            self._feature_banks(feature_banks, len(samples)),
            with_gt=True,
            n_jobs=self.n_jobs,
        )
        banks = [p.bank for p in prepared]
        gts = [p.gt_nodes for p in prepared]
        self.weights_ = fit_weights(banks, gts)
        self.training_loss_ = training_loss(banks, gts, self.weights_)
        self.n_columns_ = self.weights_.w.size
        return self

    def predict(self, X, feature_banks=None) -> list[np.ndarray]:
        """Per-image float saliency maps in [0, 1]."""
        check_is_fitted(self, "weights_")
        samples = [as_sample(item) for item in X]
        prepared = prepare_images(
            samples,
            self.grid_settings(),
            self.n_superpixels,
            self.compactness,
            self._feature_banks(feature_banks, len(samples)),
            n_jobs=self.n_jobs,
        )
        return [infer(p.bank, self.weights_, p.seg) for p in prepared]

    def set_weights(self, weights: WeightVector) -> "SuperDiffusion":
        """Install pretrained weights (e.g. loaded from a weight file)."""
        self.weights_ = weights
        self.n_columns_ = weights.w.size
        return self
