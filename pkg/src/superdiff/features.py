"""External saliency features wrapped as a pseudo-diffusion block.

Feature columns act directly as diffusion-map coordinates (all eigenvalues 1,
plus a reserved constant column); no spectral refinement applies, only the
per-seed affine normalization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptySeed
from .ingest import FeatureBank
from .refine import affine_unit_normalize


@dataclass
class FeatureDiffusion:
    """Pseudo-diffusion basis ``[1, g_1, ..., g_Z]`` with a unit spectrum."""

    u_matrix: np.ndarray  # N x (Z+1); first column all ones
    lam: np.ndarray  # Z+1 ones

    @property
    def n(self) -> int:
        return self.u_matrix.shape[0]


def feature_diffusion(bank: FeatureBank) -> FeatureDiffusion:
    n = bank.node_features.shape[0]
    u = np.column_stack([np.ones(n), bank.node_features])
    return FeatureDiffusion(u_matrix=u, lam=np.ones(u.shape[1]))


def feature_diffusion_apply(fd: FeatureDiffusion, seed: np.ndarray) -> np.ndarray:
    """Diffuse a seed through the feature columns and normalize onto [0, 1].

    The constant column is reserved for the normalization term; the raw output
    is ``sum_z g_z (g_z . s)`` over the feature columns alone.
    """
    seed = np.asarray(seed, dtype=np.float64)
    if seed.min() < 0:
        raise EmptySeed("seed values must be nonnegative")
    if not np.any(seed > 0):
        raise EmptySeed("seed vector is all zero")
    g = fd.u_matrix[:, 1:]
    y_bar = g @ (g.T @ seed)
    y_hat, _, _ = affine_unit_normalize(y_bar, seed)
    return y_hat
