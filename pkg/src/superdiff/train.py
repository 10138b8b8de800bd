"""Per-image column banks, closed-form weight learning, and inference.

Every matrix-seed combination of the configured grid contributes one
normalized saliency column; a single global weight vector over these columns
is learned in closed form (ridge-stabilized normal equations) and applied at
inference as ``y = H w``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import (
    InsufficientData,
    LayoutMismatch,
    NumericalFailure,
    SingularEigenvalue,
)
from .graph import build_graph, laplacians
from .ingest import FeatureBank, ImageSample
from .refine import (
    DEFAULT_L_MAX,
    DEFAULT_VAR_THRESHOLD,
    RefinedDiffusion,
    normalize_for_seed,
    refine_matrix,
)
from .seeds import DEFAULT_GAUSSIAN_VARIANCES, SeedVector, absorbed_time_seed, gaussian_seed
from .spectral import decompose
from .superpixel import SuperpixelSegmentation

logger = logging.getLogger("superdiff")

RIDGE_FACTOR = 1e-8  # epsilon = RIDGE_FACTOR * trace(G) / C
NODE_GT_THRESHOLD = 0.5  # majority of a node's pixels decides its label

DEFAULT_COLOR_SPACES = ("Lab", "RGB", "HSV")
DEFAULT_SIGMA2_VALUES = tuple(float(v) for v in range(10, 21))


@dataclass(frozen=True)
class GridSettings:
    """The matrix/seed grid plus refinement knobs shared by train and test."""

    color_spaces: tuple[str, ...] = DEFAULT_COLOR_SPACES
    sigma2_values: tuple[float, ...] = DEFAULT_SIGMA2_VALUES
    gaussian_variances: tuple[float, ...] = DEFAULT_GAUSSIAN_VARIANCES
    var_threshold: float = DEFAULT_VAR_THRESHOLD
    variance_mode: str = "unit"
    l_max: int = DEFAULT_L_MAX
    squared_affinity: bool = False
    eigvec_norm: str = "euclidean"

    @property
    def n_matrices(self) -> int:
        return len(self.color_spaces) * len(self.sigma2_values)

    @property
    def n_seeds(self) -> int:
        return len(self.gaussian_variances) + 1  # Gaussians plus absorbed-time

    def cells(self) -> list[tuple[int, str, float]]:
        """(matrix_id, space, sigma2) in the fixed lexicographic order."""
        out = []
        mid = 0
        for space in self.color_spaces:
            for sigma2 in self.sigma2_values:
                out.append((mid, space, sigma2))
                mid += 1
        return out

    def column_labels(self, with_features: bool) -> list[tuple[int, int]]:
        """(matrix_id, seed_id) pairs; the feature block is matrix_id = M."""
        n_mat = self.n_matrices + (1 if with_features else 0)
        return [(m, s) for m in range(n_mat) for s in range(self.n_seeds)]


@dataclass
class ColumnBank:
    """Per-image matrix of normalized single-diffusion saliency columns."""

    columns: np.ndarray  # N x C
    column_labels: list[tuple[int, int]]

    @property
    def n_columns(self) -> int:
        return self.columns.shape[1]


@dataclass
class WeightVector:
    """Learned integration weights, tied to the column layout they came from."""

    w: np.ndarray
    column_labels: list[tuple[int, int]]
    training_meta: dict = field(default_factory=dict)


def refine_cell(
    seg: SuperpixelSegmentation, space: str, sigma2: float, grid: GridSettings
) -> RefinedDiffusion:
    """Graph -> damped row-normalized Laplacian -> refined spectrum for one cell."""
    g = build_graph(seg, space, sigma2, squared=grid.squared_affinity)
    _, _, _, lap_rw_damped = laplacians(g)
    dec = decompose(lap_rw_damped, g.degree, eigvec_norm=grid.eigvec_norm)
    return refine_matrix(
        dec,
        var_threshold=grid.var_threshold,
        l_max=grid.l_max,
        variance_mode=grid.variance_mode,
        source=(space, sigma2),
    )


def build_column_bank(
    sample: ImageSample,
    seg: SuperpixelSegmentation,
    grid: GridSettings,
    feature_bank: Optional[FeatureBank] = None,
) -> ColumnBank:
    """Assemble the N x C bank of normalized diffusion columns for one image.

    A cell whose eigensolve fails contributes an all-0.5 column (training must
    not die on one bad decomposition); the failure is logged.
    """
    from .features import feature_diffusion, feature_diffusion_apply

    n = seg.n_nodes
    gaussians = [gaussian_seed(seg, v) for v in grid.gaussian_variances]
    labels = grid.column_labels(with_features=feature_bank is not None)
    columns = np.full((n, len(labels)), 0.5)

    first_absorbed: Optional[SeedVector] = None
    col = 0
    for mid, space, sigma2 in grid.cells():
        try:
            ref = refine_cell(seg, space, sigma2, grid)
            cell_seeds = gaussians + [absorbed_time_seed(ref, seg.is_border)]
            if mid == 0:
                first_absorbed = cell_seeds[-1]
            for sid, seed in enumerate(cell_seeds):
                _, y_hat = normalize_for_seed(ref, seed.values, seed_id=sid)
                columns[:, col + sid] = y_hat
        except (NumericalFailure, SingularEigenvalue) as exc:
            logger.warning(
                "%s: cell (%s, sigma2=%g) failed (%s); using neutral column",
                sample.id,
                space,
                sigma2,
                exc,
            )
        col += grid.n_seeds

    if feature_bank is not None:
        fd = feature_diffusion(feature_bank)
        if first_absorbed is None:
            # every spectral cell failed; fall back to the flattest Gaussian
            first_absorbed = gaussians[-1]
        cell_seeds = gaussians + [first_absorbed]
        for sid, seed in enumerate(cell_seeds):
            columns[:, col + sid] = feature_diffusion_apply(fd, seed.values)
        col += grid.n_seeds

    return ColumnBank(columns=columns, column_labels=labels)


def node_ground_truth(seg: SuperpixelSegmentation, gt_mask: np.ndarray) -> np.ndarray:
    """Node-level binary ground truth: 1 iff >= 50% of the node's pixels are salient."""
    hits = np.bincount(
        seg.labels.ravel(), weights=gt_mask.ravel().astype(np.float64), minlength=seg.n_nodes
    )
    coverage = hits / seg.pixel_count
    return (coverage >= NODE_GT_THRESHOLD).astype(np.float64)


def _check_layout(labels_a, labels_b) -> None:
    if list(labels_a) != list(labels_b):
        raise LayoutMismatch("column layouts differ")


def fit_weights(
    banks: Sequence[ColumnBank],
    gts: Sequence[np.ndarray],
    training_meta: Optional[dict] = None,
) -> WeightVector:
    """Closed-form least squares over all samples, with a tiny ridge for rank safety.

    Solves ``(sum_i H_i^T H_i + eps I) w = sum_i H_i^T y_i`` with
    ``eps = 1e-8 * trace / C``.
    """
    if len(banks) == 0:
        raise InsufficientData("fit_weights needs at least one sample")
    if len(banks) != len(gts):
        raise LayoutMismatch(f"{len(banks)} banks but {len(gts)} ground truths")
    labels = banks[0].column_labels
    c = banks[0].n_columns
    gram = np.zeros((c, c))
    rhs = np.zeros(c)
    for bank, gt in zip(banks, gts):
        _check_layout(bank.column_labels, labels)
        h = bank.columns
        gram += h.T @ h
        rhs += h.T @ np.asarray(gt, dtype=np.float64)
    eps = RIDGE_FACTOR * np.trace(gram) / c
    try:
        w = scipy.linalg.solve(gram + eps * np.eye(c), rhs, assume_a="pos")
    except scipy.linalg.LinAlgError as exc:
        raise NumericalFailure(f"normal equations failed: {exc}") from exc
    meta = dict(training_meta or {})
    meta.update({"n_training_samples": len(banks), "n_columns": c})
    return WeightVector(w=w, column_labels=list(labels), training_meta=meta)


def training_loss(
    banks: Sequence[ColumnBank], gts: Sequence[np.ndarray], weights: WeightVector
) -> float:
    """Sum of squared residuals of the integrated prediction over all samples."""
    total = 0.0
    for bank, gt in zip(banks, gts):
        _check_layout(bank.column_labels, weights.column_labels)
        resid = bank.columns @ weights.w - np.asarray(gt, dtype=np.float64)
        total += float(resid @ resid)
    return total


def infer(
    bank: ColumnBank, weights: WeightVector, seg: SuperpixelSegmentation
) -> np.ndarray:
    """Integrated saliency map: node values H w clamped to [0,1], painted per pixel."""
    _check_layout(bank.column_labels, weights.column_labels)
    node_values = np.clip(bank.columns @ weights.w, 0.0, 1.0)
    return node_values[seg.labels]


def save_weights(path: str | Path, weights: WeightVector) -> None:
    payload = {
        "column_labels": [list(pair) for pair in weights.column_labels],
        "weights": [float(v) for v in weights.w],
        **weights.training_meta,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_weights(path: str | Path) -> WeightVector:
    payload = json.loads(Path(path).read_text())
    labels = [tuple(pair) for pair in payload.pop("column_labels")]
    w = np.asarray(payload.pop("weights"), dtype=np.float64)
    if w.size != len(labels):
        raise LayoutMismatch(f"{path}: {w.size} weights for {len(labels)} columns")
    return WeightVector(w=w, column_labels=labels, training_meta=payload)
