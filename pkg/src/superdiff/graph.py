"""Close-loop 2-hop superpixel graph: affinity, degree and Laplacian matrices."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .superpixel import SuperpixelSegmentation

DAMPING = 0.99  # keeps the row-normalized Laplacian invertible


@dataclass
class SaliencyGraph:
    """Symmetric weighted graph over superpixel nodes.

    Adjacency is the union of spatial 1-hop neighbors, spatial 2-hop
    neighbors, and all pairs of border nodes (close-loop).  Weights follow
    ``w_ij = exp(-||v_i - v_j|| / sigma2)`` on connected pairs, with
    ``w_ii = 1``.
    """

    n: int
    edges: set = field(repr=False)
    w_matrix: np.ndarray = field(repr=False)  # N x N symmetric nonneg
    degree: np.ndarray = field(repr=False)  # N positive floats
    space: str = "Lab"
    sigma2: float = 10.0


def spatial_adjacency(labels: np.ndarray, n: int) -> np.ndarray:
    """Boolean 1-hop region adjacency from 4-adjacent pixel pairs."""
    adj = np.zeros((n, n), dtype=bool)
    for axis in (0, 1):
        a = labels.take(range(labels.shape[axis] - 1), axis=axis).ravel()
        b = labels.take(range(1, labels.shape[axis]), axis=axis).ravel()
        diff = a != b
        adj[a[diff], b[diff]] = True
    adj |= adj.T
    np.fill_diagonal(adj, False)
    return adj


def build_graph(
    seg: SuperpixelSegmentation,
    space: str = "Lab",
    sigma2: float = 10.0,
    squared: bool = False,
) -> SaliencyGraph:
    """Build the close-loop 2-hop graph in the given feature space.

    ``squared=True`` switches the affinity to ``exp(-||.||^2 / sigma2)``; the
    default follows the unsquared form.
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    n = seg.n_nodes
    one_hop = spatial_adjacency(seg.labels, n)
    two_hop = (one_hop @ one_hop) > 0
    connected = one_hop | two_hop
    border = seg.is_border
    connected |= np.outer(border, border)
    np.fill_diagonal(connected, False)

    feats = seg.mean_feature[space]
    diff = feats[:, None, :] - feats[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    if squared:
        dist = dist**2
    w = np.where(connected, np.exp(-dist / sigma2), 0.0)
    np.fill_diagonal(w, 1.0)

    ii, jj = np.nonzero(np.triu(connected, k=1))
    edges = {(int(i), int(j)) for i, j in zip(ii, jj)}
    return SaliencyGraph(
        n=n,
        edges=edges,
        w_matrix=w,
        degree=w.sum(axis=1),
        space=space,
        sigma2=sigma2,
    )


def laplacians(g: SaliencyGraph) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Return (L, L_rw, L_damped, L_rw_damped).

    L = D - W; L_rw = D^-1 (D - W); the damped variants replace W with
    0.99 W so the operators stay invertible.
    """
    w = g.w_matrix
    d = g.degree
    lap = np.diag(d) - w
    lap_damped = np.diag(d) - DAMPING * w
    inv_d = 1.0 / d
    lap_rw = inv_d[:, None] * lap
    lap_rw_damped = inv_d[:, None] * lap_damped
    return lap, lap_rw, lap_damped, lap_rw_damped
