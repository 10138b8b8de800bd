"""Evaluation protocols and experiments.

PR curves, adaptive-threshold F-measure, AUC, mean overlap rate; the
visual-saliency promotion experiment; constrained-optimal-seed-efficiency
curves built on an adapted orthogonal matching pursuit; and the staged
ablation of the pipeline's building blocks.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import scipy.optimize

from .errors import EmptyForeground, EmptyGroundTruth, FeatureMissing
from .graph import build_graph, laplacians
from .ingest import rescale_unit
from .refine import RefinedDiffusion, refine_matrix
from .seeds import external_seed_from_array, gaussian_seed
from .spectral import decompose, diffusion_apply
from .train import ColumnBank, GridSettings, fit_weights, infer, training_loss

logger = logging.getLogger("superdiff")

BETA2 = 0.3  # weight of precision in the F-measure, per the standard protocol
N_LEVELS = 256

MATRIX_CHOICES = ("refined", "laplacian", "random-walk")

STAGE_NAMES = ("S0", "S1", "S2", "S3", "S4", "S5", "S6", "S7")
STAGE_DESCRIPTIONS = {
    "S0": "single diffusion, full spectrum",
    "S1": "drop constant eigenvector",
    "S2": "eigengap truncation",
    "S3": "variance filter",
    "S4": "multi color space",
    "S5": "multi scale",
    "S6": "multi seed",
    "S7": "external features",
}

_CSV_HEADERS = {"PR": ("recall", "precision"), "ROC": ("fpr", "tpr"), "COSE": ("seed_pct", "accuracy")}


@dataclass
class CurveSeries:
    """A curve of (x, y) points sorted by x."""

    points: list[tuple[float, float]]
    kind: str  # "PR" | "ROC" | "COSE"
    n_samples_averaged: int = 1

    def y_at(self, x: float) -> float:
        xs = np.array([p[0] for p in self.points])
        ys = np.array([p[1] for p in self.points])
        return float(np.interp(x, xs, ys))

    def write_csv(self, path) -> None:
        xh, yh = _CSV_HEADERS[self.kind]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([xh, yh])
            for x, y in self.points:
                writer.writerow([repr(float(x)), repr(float(y))])


@dataclass
class MetricReport:
    precision: float
    recall: float
    f_measure: float
    auc: float
    mor: float

    def as_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f_measure": self.f_measure,
            "auc": self.auc,
            "mor": self.mor,
        }


def _quantize(saliency: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(np.asarray(saliency, dtype=np.float64), 0.0, 1.0) * 255.0).astype(
        np.int64
    )


def _threshold_counts(map8: np.ndarray, gt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Counts of predicted and true-positive pixels at every threshold 0..255.

    Entry t holds the counts for the binarization ``map8 >= t``.
    """
    hist_all = np.bincount(map8.ravel(), minlength=N_LEVELS)
    hist_fg = np.bincount(map8.ravel()[gt.ravel() > 0], minlength=N_LEVELS)
    pred = np.cumsum(hist_all[::-1])[::-1]
    tp = np.cumsum(hist_fg[::-1])[::-1]
    return pred, tp


def pr_curve(maps: Sequence[np.ndarray], gts: Sequence[np.ndarray]) -> CurveSeries:
    """Dataset PR curve over the 256 binarization thresholds.

    Precision and recall are averaged across images at each threshold; an
    empty prediction contributes precision 1 (at recall 0) by convention.
    Images with empty ground truth are skipped with a warning.
    """
    sum_p = np.zeros(N_LEVELS)
    sum_r = np.zeros(N_LEVELS)
    used = 0
    for saliency, gt in zip(maps, gts):
        n_fg = int(np.count_nonzero(gt))
        if n_fg == 0:
            logger.warning("pr_curve: skipping image with empty ground truth")
            continue
        pred, tp = _threshold_counts(_quantize(saliency), gt)
        precision = np.where(pred > 0, tp / np.maximum(pred, 1), 1.0)
        recall = tp / n_fg
        sum_p += precision
        sum_r += recall
        used += 1
    if used == 0:
        raise EmptyGroundTruth("no image had a nonempty ground truth")
    # threshold descending => recall ascending
    points = [
        (float(sum_r[t] / used), float(sum_p[t] / used)) for t in range(N_LEVELS - 1, -1, -1)
    ]
    return CurveSeries(points=points, kind="PR", n_samples_averaged=used)


def adaptive_threshold(map8: np.ndarray) -> int:
    """Twice the mean saliency, clamped to the 8-bit range."""
    return int(min(round(2.0 * map8.mean()), 255))


def f_measure(
    saliency: np.ndarray, gt: np.ndarray, beta2: float = BETA2
) -> tuple[float, float, float]:
    """(precision, recall, F) at the adaptive threshold 2*mean."""
    if not np.count_nonzero(gt):
        raise EmptyGroundTruth("ground truth has no salient pixels")
    map8 = _quantize(saliency)
    binary = map8 >= adaptive_threshold(map8)
    tp = int(np.count_nonzero(binary & (gt > 0)))
    n_pred = int(np.count_nonzero(binary))
    n_fg = int(np.count_nonzero(gt))
    precision = tp / n_pred if n_pred else 1.0
    recall = tp / n_fg
    if precision + recall == 0:
        return precision, recall, 0.0
    f = (1 + beta2) * precision * recall / (beta2 * precision + recall)
    return precision, recall, f


def auc(saliency: np.ndarray, gt: np.ndarray) -> float:
    """Area under the ROC curve over all 256 thresholds (trapezoidal)."""
    n_fg = int(np.count_nonzero(gt))
    n_bg = gt.size - n_fg
    if n_fg == 0 or n_bg == 0:
        raise EmptyGroundTruth("ROC needs both salient and background pixels")
    pred, tp = _threshold_counts(_quantize(saliency), gt)
    # append the empty binarization (threshold 256) for the (0, 0) endpoint
    pred = np.append(pred, 0)
    tp = np.append(tp, 0)
    tpr = tp / n_fg
    fpr = (pred - tp) / n_bg
    order = np.argsort(fpr, kind="stable")
    return float(np.trapezoid(tpr[order], fpr[order]))


def mor(saliency: np.ndarray, gt: np.ndarray) -> float:
    """Overlap (intersection over union) at the adaptive threshold."""
    if not np.count_nonzero(gt):
        raise EmptyGroundTruth("ground truth has no salient pixels")
    map8 = _quantize(saliency)
    binary = map8 >= adaptive_threshold(map8)
    inter = int(np.count_nonzero(binary & (gt > 0)))
    union = int(np.count_nonzero(binary | (gt > 0)))
    return inter / union


def evaluate_dataset(maps: Sequence[np.ndarray], gts: Sequence[np.ndarray]) -> MetricReport:
    """Mean precision/recall/F/AUC/MOR over a dataset."""
    rows = []
    for saliency, gt in zip(maps, gts):
        try:
            p, r, f = f_measure(saliency, gt)
            rows.append((p, r, f, auc(saliency, gt), mor(saliency, gt)))
        except EmptyGroundTruth:
            logger.warning("evaluate_dataset: skipping degenerate ground truth")
    if not rows:
        raise EmptyGroundTruth("no evaluable image")
    mean = np.mean(np.array(rows), axis=0)
    return MetricReport(*[float(v) for v in mean])


# --- adapted orthogonal matching pursuit and COSE ---------------------------


def binarize_relative(values: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Threshold at ``threshold`` after min-max normalization; constant input -> 0."""
    values = np.asarray(values, dtype=np.float64)
    lo, hi = values.min(), values.max()
    if hi - lo == 0.0:
        return np.zeros_like(values)
    return ((values - lo) / (hi - lo) >= threshold).astype(np.float64)


def adapted_omp(
    a_inv: np.ndarray,
    gt_nodes: np.ndarray,
    stop_c: float = 0.0,
    max_iter: int = 100,
    bin_threshold: float = 0.5,
) -> tuple[np.ndarray, list[tuple[float, float]]]:
    """Greedy sparse seed recovery restricted to foreground nodes.

    Each iteration picks the foreground column most correlated with the
    current (binarized) residual, refits all selected seed values by
    nonnegative least squares, and records the pair (selected-seed percentage,
    detection accuracy).  Stops when the residual norm falls below ``stop_c``,
    the foreground is exhausted, or ``max_iter`` iterations have run.
    """
    gt = np.asarray(gt_nodes, dtype=np.float64)
    n = gt.size
    remaining = [int(i) for i in np.flatnonzero(gt == 1)]
    if not remaining:
        raise EmptyForeground("ground truth has no foreground nodes")
    n_fg = len(remaining)
    gt_norm = float(np.linalg.norm(gt))

    res = gt.copy()
    inds: list[int] = []
    s = np.zeros(n)
    trace: list[tuple[float, float]] = [(0.0, 0.0)]
    while remaining and len(inds) < max_iter:
        corr = np.abs(a_inv[:, remaining].T @ res)
        pick = int(np.argmax(corr))
        inds.append(remaining.pop(pick))
        coef = scipy.optimize.nnls(a_inv[:, inds], gt)[0]
        s = np.zeros(n)
        s[inds] = coef
        res = gt - binarize_relative(a_inv @ s, bin_threshold)
        res_norm = float(np.linalg.norm(res))
        trace.append((100.0 * len(inds) / n_fg, (gt_norm - res_norm) / gt_norm))
        if res_norm < stop_c:
            break
    return s, trace


def average_traces(traces: Sequence[Sequence[tuple[float, float]]]) -> CurveSeries:
    """Interpolate per-image traces onto the 1..100% grid and average.

    Traces that end early extend flat at their final accuracy.
    """
    grid = np.arange(1, 101, dtype=np.float64)
    rows = []
    for trace in traces:
        rs = np.array([r for r, _ in trace])
        accs = np.array([a for _, a in trace])
        rows.append(np.interp(grid, rs, accs))
    mean = np.mean(np.array(rows), axis=0)
    points = [(float(x), float(y)) for x, y in zip(grid, mean)]
    return CurveSeries(points=points, kind="COSE", n_samples_averaged=len(traces))


def diffusion_matrix(
    seg,
    matrix_choice: str,
    grid: GridSettings,
    space: Optional[str] = None,
    sigma2: Optional[float] = None,
) -> np.ndarray:
    """Dense diffusion matrix for one of the comparison choices.

    ``refined`` re-synthesizes from the kept eigenvectors; ``laplacian`` and
    ``random-walk`` use the full spectrum of the damped (row-normalized)
    Laplacian.  Defaults to the first color space and scale of the grid.
    """
    space = space if space is not None else grid.color_spaces[0]
    sigma2 = sigma2 if sigma2 is not None else grid.sigma2_values[0]
    g = build_graph(seg, space, sigma2, squared=grid.squared_affinity)
    _, _, lap_damped, lap_rw_damped = laplacians(g)
    if matrix_choice == "refined":
        dec = decompose(lap_rw_damped, g.degree, eigvec_norm=grid.eigvec_norm)
        ref = refine_matrix(dec, grid.var_threshold, grid.l_max, grid.variance_mode)
        return ref.matrix()
    if matrix_choice == "laplacian":
        dec = decompose(lap_damped)
    elif matrix_choice == "random-walk":
        dec = decompose(lap_rw_damped, g.degree, eigvec_norm=grid.eigvec_norm)
    else:
        raise ValueError(f"matrix_choice must be one of {MATRIX_CHOICES}")
    return (dec.eigenvectors / dec.eigenvalues) @ dec.eigenvectors.T


def cose_curve(
    dataset: Iterable[tuple],
    diffusion_builder: Callable[..., np.ndarray],
    stop_c: float = 0.0,
    max_iter: int = 100,
    bin_threshold: float = 0.5,
) -> CurveSeries:
    """Average constrained-optimal-seed-efficiency curve over a dataset.

    ``dataset`` yields (segmentation, node ground truth) pairs;
    ``diffusion_builder`` maps a segmentation to the dictionary matrix.
    """
    traces = []
    for seg, gt_nodes in dataset:
        a_inv = diffusion_builder(seg)
        _, trace = adapted_omp(a_inv, gt_nodes, stop_c, max_iter, bin_threshold)
        traces.append(trace)
    if not traces:
        raise EmptyGroundTruth("cose_curve got an empty dataset")
    return average_traces(traces)


# --- visual-saliency promotion ----------------------------------------------


def promote_maps(
    items: Iterable[tuple], matrix_choice: str, grid: GridSettings
) -> Iterable[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Yield (before, after, gt) pixel maps for each (sample, seg, seed_map) item.

    ``before`` is the raw external map; ``after`` diffuses its node seed with
    the chosen matrix and min-max rescales to [0, 1].
    """
    for sample, seg, seed_map in items:
        seed = external_seed_from_array(seed_map, seg)
        a_inv = diffusion_matrix(seg, matrix_choice, grid)
        node_values = rescale_unit(a_inv @ seed.values)
        yield seed_map, node_values[seg.labels], sample.gt_mask


def promote(
    items: Iterable[tuple], matrix_choice: str, grid: GridSettings
) -> tuple[CurveSeries, CurveSeries]:
    """PR curves of external saliency maps before and after diffusion."""
    befores, afters, gts = [], [], []
    for before, after, gt in promote_maps(items, matrix_choice, grid):
        befores.append(before)
        afters.append(after)
        gts.append(gt)
    return pr_curve(befores, gts), pr_curve(afters, gts)


# --- staged ablation ---------------------------------------------------------


@dataclass
class AblationResult:
    curves: dict[str, CurveSeries]
    mean_f: dict[str, float]
    training_loss: dict[str, float]


def _single_seed_id(grid: GridSettings) -> int:
    variances = grid.gaussian_variances
    return variances.index(1.0) if 1.0 in variances else len(variances) // 2


def stage_column_indices(stage: str, grid: GridSettings, with_features: bool) -> list[int]:
    """Column indices of the trained stages (nested: S4 in S5 in S6 in S7)."""
    labels = grid.column_labels(with_features)
    single = _single_seed_id(grid)
    first_sigma_mids = {
        mid for mid, _, sigma2 in grid.cells() if sigma2 == grid.sigma2_values[0]
    }
    spectral_mids = {mid for mid, _, _ in grid.cells()}
    if stage == "S4":
        keep = lambda m, s: m in first_sigma_mids and s == single
    elif stage == "S5":
        keep = lambda m, s: m in spectral_mids and s == single
    elif stage == "S6":
        keep = lambda m, s: m in spectral_mids
    elif stage == "S7":
        keep = lambda m, s: True
    else:
        raise ValueError(f"{stage} is not a trained stage")
    return [i for i, (m, s) in enumerate(labels) if keep(m, s)]


def _sub_bank(bank: ColumnBank, indices: list[int]) -> ColumnBank:
    return ColumnBank(
        columns=bank.columns[:, indices],
        column_labels=[bank.column_labels[i] for i in indices],
    )


def _single_cell_stage_maps(prepared, grid: GridSettings) -> dict[str, np.ndarray]:
    """S0..S3 maps for one image from the first grid cell's spectrum."""
    seg = prepared.seg
    space, sigma2 = grid.color_spaces[0], grid.sigma2_values[0]
    g = build_graph(seg, space, sigma2, squared=grid.squared_affinity)
    _, _, _, lap_rw_damped = laplacians(g)
    dec = decompose(lap_rw_damped, g.degree, eigvec_norm=grid.eigvec_norm)
    seed = gaussian_seed(seg, grid.gaussian_variances[_single_seed_id(grid)]).values

    non_constant = [i for i in range(dec.n) if i != dec.constant_index]
    drop_const = RefinedDiffusion(
        kept_indices=non_constant,
        u_bar=dec.eigenvectors[:, non_constant],
        lambda_bar=dec.eigenvalues[non_constant],
    )
    stage_nodes = {
        "S0": diffusion_apply(dec, seed),
        "S1": drop_const.apply(seed),
        "S2": refine_matrix(dec, 0.0, grid.l_max, grid.variance_mode).apply(seed),
        "S3": refine_matrix(
            dec, grid.var_threshold, grid.l_max, grid.variance_mode
        ).apply(seed),
    }
    return {name: rescale_unit(values)[seg.labels] for name, values in stage_nodes.items()}


def ablate(
    prepared_train: Sequence,
    prepared_test: Sequence,
    grid: GridSettings,
    with_features: bool = False,
) -> AblationResult:
    """Run the eight-stage ablation.

    S0-S3 are single-cell diffusions with progressively more refinement; S4-S7
    retrain the integration weights on progressively larger column layouts.
    Requires prepared images whose banks carry the full layout.
    """
    if with_features and any(
        len(p.bank.column_labels) == grid.n_matrices * grid.n_seeds for p in prepared_train
    ):
        logger.warning("ablate: feature columns missing; skipping stage S7")
        with_features = False

    curves: dict[str, CurveSeries] = {}
    mean_f: dict[str, float] = {}
    losses: dict[str, float] = {}
    gts = [p.sample.gt_mask for p in prepared_test]

    per_stage_maps: dict[str, list[np.ndarray]] = {s: [] for s in ("S0", "S1", "S2", "S3")}
    for prepared in prepared_test:
        for name, saliency in _single_cell_stage_maps(prepared, grid).items():
            per_stage_maps[name].append(saliency)

    trained_stages = ["S4", "S5", "S6"] + (["S7"] if with_features else [])
    for stage in trained_stages:
        indices = stage_column_indices(stage, grid, with_features)
        train_banks = [_sub_bank(p.bank, indices) for p in prepared_train]
        train_gts = [p.gt_nodes for p in prepared_train]
        weights = fit_weights(train_banks, train_gts, {"stage": stage})
        losses[stage] = training_loss(train_banks, train_gts, weights)
        per_stage_maps[stage] = [
            infer(_sub_bank(p.bank, indices), weights, p.seg) for p in prepared_test
        ]

    for stage, maps in per_stage_maps.items():
        curves[stage] = pr_curve(maps, gts)
        fs = []
        for saliency, gt in zip(maps, gts):
            try:
                fs.append(f_measure(saliency, gt)[2])
            except EmptyGroundTruth:
                continue
        mean_f[stage] = float(np.mean(fs))
    return AblationResult(curves=curves, mean_f=mean_f, training_loss=losses)
