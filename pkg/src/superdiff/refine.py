"""Local refinement of a diffusion operator.

Drops the constant eigenvector, truncates the spectrum at the eigengap,
filters low-discriminability eigenvectors, and re-synthesizes with a per-seed
affine normalization that re-adds the constant direction with an adjusted
eigenvalue so the output ranges exactly over [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EmptySeed
from .spectral import SpectralDecomposition

DEFAULT_VAR_THRESHOLD = 0.05  # on disc(u) = N*var(u) for unit-norm u, in (0, 1]
DEFAULT_L_MAX = 30
PAPER_VAR_THRESHOLD = 300.0  # applies to eigenvectors rescaled to [0, 255]
VARIANCE_MODES = ("unit", "paper")


@dataclass
class RefinedDiffusion:
    """Truncated eigensystem of a diffusion operator.

    ``kept_indices`` never contains the constant eigenvector; all kept
    eigenvalues sit strictly before the eigengap position (1-based ``r``).
    """

    kept_indices: list[int]
    u_bar: np.ndarray  # N x k
    lambda_bar: np.ndarray  # k positive floats
    source: tuple = ()
    eigengap_position: int = 0

    @property
    def n(self) -> int:
        return self.u_bar.shape[0]

    def apply(self, seed: np.ndarray) -> np.ndarray:
        """Raw (unnormalized) diffusion through the kept eigenvectors."""
        return self.u_bar @ ((self.u_bar.T @ np.asarray(seed, dtype=np.float64)) / self.lambda_bar)

    def matrix(self) -> np.ndarray:
        """Dense re-synthesized diffusion matrix (used as an OMP dictionary)."""
        return (self.u_bar / self.lambda_bar) @ self.u_bar.T


@dataclass
class NormalizedDiffusion:
    """Per-seed normalization terms: the adjusted constant eigenvalue and scale."""

    refined: RefinedDiffusion
    lambda1_prime: float
    a_hat: float
    seed_id: int = -1


def find_eigengap(eigenvalues: np.ndarray, l_max: int = DEFAULT_L_MAX) -> int:
    """Locate the eigengap: 1-based position r of the largest ascending gap.

    The search covers l in [2, min(l_max, N)], ties break toward smaller l.
    An initial r = 2 (which would keep nothing once the constant eigenvector
    is also dropped) falls back to the second-largest gap; a fully degenerate
    spectrum (zero gap at the fallback too) keeps everything in range.
    """
    eigenvalues = np.asarray(eigenvalues, dtype=np.float64)
    n = eigenvalues.size
    if n < 3:
        raise ValueError("eigengap needs at least 3 eigenvalues")
    last = min(l_max, n)
    positions = np.arange(2, last + 1)  # 1-based l
    gaps = eigenvalues[positions - 1] - eigenvalues[positions - 2]
    order = np.argsort(-gaps, kind="stable")  # descending, ties toward smaller l
    r = int(positions[order[0]])
    if r != 2:
        return r
    if order.size > 1 and gaps[order[1]] > 0:
        return int(positions[order[1]])
    return last + 1  # keep-all rule for degenerate spectra


def discriminability(u: np.ndarray, mode: str = "unit") -> float:
    """Variance-based discriminability of an eigenvector.

    ``unit``: N*var(u) for unit-Euclidean-norm u, i.e. 1 minus the squared
    projection onto the constant direction (in (0, 1]).  ``paper``: variance
    of u rescaled to [0, 255], comparable against the threshold 300.
    """
    u = np.asarray(u, dtype=np.float64)
    if mode == "unit":
        return float(u.size * np.var(u))
    if mode == "paper":
        lo, hi = u.min(), u.max()
        if hi - lo == 0.0:
            return 0.0
        return float(np.var((u - lo) / (hi - lo) * 255.0))
    raise ValueError(f"variance mode must be one of {VARIANCE_MODES}")


def refine_matrix(
    dec: SpectralDecomposition,
    var_threshold: float = DEFAULT_VAR_THRESHOLD,
    l_max: int = DEFAULT_L_MAX,
    variance_mode: str = "unit",
    source: tuple = (),
) -> RefinedDiffusion:
    """Keep the discriminative eigenvectors before the eigengap.

    Candidates are positions l in [2, r) (1-based), never the constant
    eigenvector.  Candidates whose discriminability falls below the threshold
    are dropped; if that empties the set, the single highest-variance
    candidate is retained.
    """
    r = find_eigengap(dec.eigenvalues, l_max)
    candidates = [i for i in range(1, r - 1) if i != dec.constant_index]
    disc = np.array(
        [discriminability(dec.eigenvectors[:, i], variance_mode) for i in candidates]
    )
    kept = [i for i, d in zip(candidates, disc) if d >= var_threshold]
    if not kept:
        kept = [candidates[int(np.argmax(disc))]]
    return RefinedDiffusion(
        kept_indices=kept,
        u_bar=dec.eigenvectors[:, kept],
        lambda_bar=dec.eigenvalues[kept],
        source=source,
        eigengap_position=r,
    )


def affine_unit_normalize(y_bar: np.ndarray, seed: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Map a raw diffusion output affinely onto [0, 1].

    Returns ``(y_hat, a_hat, lambda1_prime)`` where the same result is
    reproduced in matrix form by re-adding the unit-norm constant eigenvector
    with eigenvalue ``lambda1_prime`` and scaling the kept spectrum by
    ``1/a_hat``.  Degenerate constant output maps to all-0.5; a zero minimum
    zeroes the constant term instead of dividing by zero.
    """
    y_bar = np.asarray(y_bar, dtype=np.float64)
    p, q = float(y_bar.min()), float(y_bar.max())
    if q - p == 0.0:
        return np.full_like(y_bar, 0.5), 0.0, np.inf
    a_hat = q - p
    b = p / (p - q)
    if p == 0.0:
        lambda1_prime = np.inf
    else:
        # unit-norm constant vector: u1 u1^T s = mean(s) * 1
        lambda1_prime = float(np.mean(seed)) * (p - q) / p
    return b + y_bar / a_hat, a_hat, lambda1_prime


def normalize_for_seed(
    ref: RefinedDiffusion, seed: np.ndarray, seed_id: int = -1
) -> tuple[NormalizedDiffusion, np.ndarray]:
    """Diffuse a seed through the refined spectrum and normalize onto [0, 1]."""
    seed = np.asarray(seed, dtype=np.float64)
    if seed.min() < 0:
        raise EmptySeed("seed values must be nonnegative")
    if not np.any(seed > 0):
        raise EmptySeed("seed vector is all zero")
    y_bar = ref.apply(seed)
    y_hat, a_hat, lambda1_prime = affine_unit_normalize(y_bar, seed)
    norm = NormalizedDiffusion(
        refined=ref, lambda1_prime=lambda1_prime, a_hat=a_hat, seed_id=seed_id
    )
    return norm, y_hat


def normalized_matrix(norm: NormalizedDiffusion) -> np.ndarray:
    """Dense final diffusion matrix: constant direction plus scaled kept spectrum.

    Provided for verification; the pipeline itself applies the vector form.
    """
    ref = norm.refined
    n = ref.n
    const = np.full(n, 1.0 / np.sqrt(n))
    inv_l1 = 0.0 if np.isinf(norm.lambda1_prime) else 1.0 / norm.lambda1_prime
    if norm.a_hat == 0.0:
        raise ValueError("degenerate normalization has no matrix form")
    return inv_l1 * np.outer(const, const) + ref.matrix() / norm.a_hat
