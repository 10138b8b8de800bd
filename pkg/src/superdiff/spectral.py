"""Eigendecomposition of diffusion operators and diffusion-map synthesis.

The canonical diffusion used throughout is the re-synthesized form
``y = U diag(1/lambda) U^T s``: for symmetric operators it coincides with
direct inversion; for the row-normalized family it is adopted as-is (with
Euclidean-normalized eigenvectors by default).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NumericalFailure, SingularEigenvalue
from .graph import DAMPING, SaliencyGraph

DEGENERACY_TOL = 1e-10  # eigenvalues closer than this share an eigenspace
EIGVEC_NORMS = ("euclidean", "d-orthonormal")


@dataclass
class SpectralDecomposition:
    """Eigenvalues (ascending) and column eigenvectors of a diffusion operator."""

    eigenvalues: np.ndarray  # N floats, ascending
    eigenvectors: np.ndarray  # N x N, column l = u_l
    constant_index: int  # index of the (near-)constant eigenvector, expected 0

    @property
    def n(self) -> int:
        return self.eigenvalues.size


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of each column positive (deterministic)."""
    idx = np.abs(vectors).argmax(axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _orthonormalize_degenerate(values: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """QR-orthonormalize columns within each near-degenerate eigenvalue group.

    If the constant vector lies in a group's span it becomes the group's first
    basis vector, which pins the constant eigenvector even on disconnected
    graphs.
    """
    n = values.size
    vectors = vectors.copy()
    start = 0
    while start < n:
        stop = start + 1
        while stop < n and values[stop] - values[stop - 1] < DEGENERACY_TOL:
            stop += 1
        if stop - start > 1:
            block = vectors[:, start:stop]
            q = np.linalg.qr(block, mode="reduced")[0]
            const = np.full(n, 1.0 / np.sqrt(n))
            proj = q @ (q.T @ const)
            if np.linalg.norm(proj - const) < 1e-6:
                seeded = np.column_stack([const, q])
                q = np.linalg.qr(seeded, mode="reduced")[0][:, : stop - start]
                # QR may flip the seeded direction; keep it exactly constant
                q[:, 0] = const
            vectors[:, start:stop] = q
        start = stop
    return vectors


def decompose(
    a_matrix: np.ndarray,
    degree: np.ndarray | None = None,
    eigvec_norm: str = "euclidean",
) -> SpectralDecomposition:
    """Eigendecompose a diffusion operator.

    With ``degree`` given, ``a_matrix`` is treated as the row-normalized
    operator ``D^-1 (D - cW)`` and solved through the equivalent symmetric
    problem via D^{+-1/2} conjugation; eigenvectors come back as
    ``D^{-1/2} q`` and are re-normalized to unit Euclidean norm (or left
    D-orthonormal under ``eigvec_norm="d-orthonormal"``).  Without ``degree``
    the matrix must be symmetric.
    """
    if eigvec_norm not in EIGVEC_NORMS:
        raise ValueError(f"eigvec_norm must be one of {EIGVEC_NORMS}")
    a_matrix = np.asarray(a_matrix, dtype=np.float64)
    try:
        if degree is None:
            values, vectors = scipy.linalg.eigh(a_matrix)
            vectors = _orthonormalize_degenerate(values, vectors)
        else:
            degree = np.asarray(degree, dtype=np.float64)
            root = np.sqrt(degree)
            sym = root[:, None] * a_matrix * (1.0 / root)[None, :]
            sym = (sym + sym.T) / 2.0
            values, q = scipy.linalg.eigh(sym)
            vectors = (1.0 / root)[:, None] * q
            if eigvec_norm == "euclidean":
                vectors = vectors / np.linalg.norm(vectors, axis=0, keepdims=True)
                vectors = _orthonormalize_degenerate(values, vectors)
            # d-orthonormal columns are already mutually D-orthogonal
    except scipy.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigendecomposition failed: {exc}") from exc

    vectors = _fix_signs(vectors)
    constant_index = int(np.argmin(np.var(vectors, axis=0)))
    return SpectralDecomposition(
        eigenvalues=values, eigenvectors=vectors, constant_index=constant_index
    )


def diffusion_apply(dec: SpectralDecomposition, seed: np.ndarray) -> np.ndarray:
    """Diffuse a seed: ``y = U diag(1/lambda) U^T s``."""
    if np.any(dec.eigenvalues <= 1e-12):
        raise SingularEigenvalue(
            f"spectrum contains eigenvalue {dec.eigenvalues.min():.3e} <= 1e-12"
        )
    u = dec.eigenvectors
    return u @ ((u.T @ np.asarray(seed, dtype=np.float64)) / dec.eigenvalues)


def diffusion_map(dec: SpectralDecomposition) -> np.ndarray:
    """Per-node diffusion-map coordinates, row i = lambda^{-1/2}-weighted u(i)."""
    if np.any(dec.eigenvalues <= 1e-12):
        raise SingularEigenvalue("diffusion map needs a strictly positive spectrum")
    return dec.eigenvectors * dec.eigenvalues ** (-0.5)


def neumann_check(g: SaliencyGraph, x: np.ndarray, n_terms: int) -> np.ndarray:
    """Truncated Neumann series ``sum_{k<n_terms} (0.99 D^-1 W)^k x``.

    Test oracle for the absorbing-chain identity: the full series equals
    ``(I - 0.99 D^-1 W)^-1 x``.
    """
    p = DAMPING * (g.w_matrix / g.degree[:, None])
    acc = np.asarray(x, dtype=np.float64).copy()
    term = acc.copy()
    for _ in range(n_terms - 1):
        term = p @ term
        acc += term
    return acc
