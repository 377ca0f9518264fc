"""Curator-side feature reconstruction.

Each node's features are replaced by the posterior-weighted mean of the
noisy features of its potential neighbours (pairs with posterior >= 0.5),
the node itself included at weight 1.  The pass may be repeated; every pass
reuses the same weights.  :func:`kprop_aggregate` is the unweighted K-hop
alternative used for ablations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .topology import LinkPosteriorSet, SyntheticTopology

NEIGHBOR_THRESHOLD = 0.5
SELF_WEIGHT = 1.0


@dataclass(frozen=True, eq=False)
class PotentialNeighborIndex:
    """Symmetric weight matrix in CSR form; row ``i`` lists ``V_i`` with weights.

    The diagonal carries ``SELF_WEIGHT``.
    """

    weights: sp.csr_matrix

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def neighbors(self, i: int) -> dict[int, float]:
        w = self.weights
        lo, hi = w.indptr[i], w.indptr[i + 1]
        return {int(j): float(v) for j, v in zip(w.indices[lo:hi], w.data[lo:hi])}


@dataclass(frozen=True, eq=False)
class ReconstructedFeatures:
    matrix: np.ndarray
    iterations_applied: int


def build_neighbor_index(posteriors: LinkPosteriorSet) -> PotentialNeighborIndex:
    n = posteriors.n
    rows, cols, w = posteriors.at_least(NEIGHBOR_THRESHOLD)
    diag = np.arange(n)
    r = np.concatenate([rows, cols, diag])
    c = np.concatenate([cols, rows, diag])
    v = np.concatenate([w, w, np.full(n, SELF_WEIGHT)])
    weights = sp.csr_matrix((v, (r, c)), shape=(n, n))
    weights.sort_indices()
    return PotentialNeighborIndex(weights)


def weighted_aggregate(index: PotentialNeighborIndex, features) -> np.ndarray:
    """One pass of posterior-weighted neighbour averaging."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] != index.n:
        raise ValueError(f"features have {features.shape[0]} rows, index has {index.n} nodes")
    w = index.weights
    totals = np.asarray(w.sum(axis=1)).ravel()
    out = np.asarray(w @ features) / totals[:, None]
    # Convex combination: keep rounding from stepping outside the input range.
    if features.size:
        np.clip(out, features.min(), features.max(), out=out)
    return out


def reconstruct_features(posteriors: LinkPosteriorSet, noisy_features, l: int) -> ReconstructedFeatures:
    if l < 0:
        raise ValueError(f"iteration count must be non-negative, got {l}")
    x = np.asarray(noisy_features, dtype=np.float64)
    if l == 0:
        return ReconstructedFeatures(x.copy(), 0)
    index = build_neighbor_index(posteriors)
    for _ in range(l):
        x = weighted_aggregate(index, x)
    return ReconstructedFeatures(x, l)


def mean_operator(topology: SyntheticTopology) -> sp.csr_matrix:
    """Row-stochastic ``D^-1 (A + I)`` for an undirected edge list."""
    n = topology.n
    i, j = topology.edges[:, 0], topology.edges[:, 1]
    diag = np.arange(n)
    a = sp.csr_matrix(
        (np.ones(2 * i.size + n), (np.r_[i, j, diag], np.r_[j, i, diag])), shape=(n, n)
    )
    deg = np.asarray(a.sum(axis=1)).ravel()
    return sp.diags(1.0 / deg) @ a


def kprop_aggregate(topology: SyntheticTopology, noisy_features, k: int) -> np.ndarray:
    """``k`` passes of unweighted one-hop mean aggregation, self included."""
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    m = mean_operator(topology)
    x = np.asarray(noisy_features, dtype=np.float64)
    for _ in range(k):
        x = m @ x
    return np.asarray(x)
