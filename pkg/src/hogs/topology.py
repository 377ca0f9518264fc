"""Curator-side topology reconstruction.

For every unordered pair ``i < j`` the curator combines

* a homophily prior: the cosine similarity of the two noisy feature
  vectors, clamped to ``[PRIOR_FLOOR, 1 - PRIOR_FLOOR]``;
* the likelihood of the observed bit pair ``(A~_ij, A~_ji)`` under "edge"
  and "no edge";

into a Bayes posterior, and keeps the pair as an edge when the posterior is
at least ``tau``.  Priors are computed from a blocked Gram matrix, one row
block at a time, and only posteriors at or above ``min(0.5, tau)`` are kept.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .collection import CollectionRound
from .errors import ConfigError, NumericError, ProtocolError
from .ldp import flip_probability

PRIOR_FLOOR = 1e-9
PRIOR_CEIL = 1.0 - 1e-9
DEFAULT_BLOCK_ROWS = 256

_POSTERIOR_MAGIC = b"HGPS"
_POSTERIOR_HEADER = struct.Struct("<4sHddQQ")
_TRIPLET = np.dtype([("i", "<u4"), ("j", "<u4"), ("posterior", "<f8")])


def cosine_prior(xi, xj) -> float:
    """Clamped cosine similarity of two feature vectors.

    An all-zero vector has no direction; the prior is then the clamp floor.
    """
    xi = np.asarray(xi, dtype=np.float64)
    xj = np.asarray(xj, dtype=np.float64)
    if xi.shape != xj.shape:
        raise ValueError(f"dimension mismatch: {xi.shape} vs {xj.shape}")
    ni, nj = float(xi @ xi), float(xj @ xj)
    if ni == 0.0 or nj == 0.0:
        return PRIOR_FLOOR
    s = float(xi @ xj) / (math.sqrt(ni) * math.sqrt(nj))
    return min(max(s, PRIOR_FLOOR), PRIOR_CEIL)


def likelihood_table(p1: float) -> tuple[np.ndarray, np.ndarray]:
    """Likelihoods indexed by the number of observed ones (0, 1 or 2).

    Returns ``(l, l_prime)``: probability of the observation given the edge
    exists, and given it does not.
    """
    q = 1.0 - p1
    l = np.array([p1 * p1, p1 * q, q * q])
    return l, l[::-1].copy()


def pair_likelihoods(obs, p1: float) -> tuple[float, float]:
    a, b = obs
    if a not in (0, 1) or b not in (0, 1):
        raise ValueError(f"observation must be a pair of bits, got {obs!r}")
    l, lp = likelihood_table(p1)
    k = a + b
    return float(l[k]), float(lp[k])


def link_posterior(prior: float, l: float, l_prime: float) -> float:
    num = l * prior
    den = num + l_prime * (1.0 - prior)
    if den == 0.0:
        raise NumericError("posterior denominator is zero")
    return num / den


@dataclass(frozen=True, eq=False)
class LinkPosteriorSet:
    """Pairs ``i < j`` whose posterior reached ``storage_floor``.

    Arrays are parallel and sorted by ``(i, j)``.  Pairs not listed have a
    posterior below the floor.
    """

    n: int
    rows: np.ndarray
    cols: np.ndarray
    priors: np.ndarray
    posteriors: np.ndarray
    tau: float
    storage_floor: float

    def __len__(self):
        return int(self.rows.size)

    def as_dict(self) -> dict[tuple[int, int], float]:
        return {(int(i), int(j)): float(p) for i, j, p in zip(self.rows, self.cols, self.posteriors)}

    def at_least(self, threshold: float):
        """``(rows, cols, posteriors)`` restricted to posterior >= threshold."""
        if threshold < self.storage_floor:
            raise ValueError(f"threshold {threshold} is below the storage floor {self.storage_floor}")
        keep = self.posteriors >= threshold
        return self.rows[keep], self.cols[keep], self.posteriors[keep]

    def write(self, path) -> None:
        """Binary triplets ``(u32 i, u32 j, f64 posterior)`` after a small header."""
        triplets = np.empty(len(self), dtype=_TRIPLET)
        triplets["i"], triplets["j"], triplets["posterior"] = self.rows, self.cols, self.posteriors
        with open(path, "wb") as fh:
            fh.write(_POSTERIOR_HEADER.pack(_POSTERIOR_MAGIC, 1, self.tau, self.storage_floor, self.n, len(self)))
            fh.write(triplets.tobytes())

    @classmethod
    def read(cls, path) -> LinkPosteriorSet:
        data = Path(path).read_bytes()
        magic, version, tau, floor, n, count = _POSTERIOR_HEADER.unpack_from(data)
        if magic != _POSTERIOR_MAGIC or version != 1:
            raise ProtocolError(f"{path}: not a posterior file")
        triplets = np.frombuffer(data, dtype=_TRIPLET, count=count, offset=_POSTERIOR_HEADER.size)
        # Priors are not serialized.
        nan = np.full(count, np.nan)
        return cls(int(n), triplets["i"].astype(np.int64), triplets["j"].astype(np.int64),
                   nan, triplets["posterior"].copy(), tau, floor)


@dataclass(frozen=True, eq=False)
class SyntheticTopology:
    """Undirected edge list, one ``(i, j)`` row per edge with ``i < j``."""

    n: int
    edges: np.ndarray

    @property
    def edge_count(self) -> int:
        return int(self.edges.shape[0])

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(i), int(j)) for i, j in self.edges}

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for i, j in self.edges:
                fh.write(f"{i}\t{j}\n")


def _block_priors(x, sq_norms, norms, start, stop):
    gram = x[start:stop] @ x.T
    with np.errstate(divide="ignore", invalid="ignore"):
        s = gram / (norms[start:stop, None] * norms[None, :])
    s[(sq_norms[start:stop] == 0.0)[:, None] | (sq_norms == 0.0)[None, :]] = PRIOR_FLOOR
    np.clip(s, PRIOR_FLOOR, PRIOR_CEIL, out=s)
    return s


def reconstruct_topology(rnd: CollectionRound, tau: float, *, features=None,
                         block_rows: int = DEFAULT_BLOCK_ROWS):
    """Posterior link estimation over all pairs, thresholded at ``tau``.

    Parameters
    ----------
    rnd : CollectionRound
        The noisy reports.  The flip probability comes from its budget.
    tau : float
        Inclusive retention threshold in ``[0, 1]``.
    features : array, optional
        Substitute feature matrix for the priors (public-feature mode).
        Defaults to the noisy feature bits in ``rnd``.
    block_rows : int
        Rows of the Gram matrix computed at a time.

    Returns
    -------
    (SyntheticTopology, LinkPosteriorSet)
    """
    if not 0.0 <= tau <= 1.0:
        raise ConfigError(f"tau must lie in [0, 1], got {tau}")
    if block_rows < 1:
        raise ConfigError("block_rows must be positive")
    n = rnd.n
    adj = rnd.noisy_adjacency_matrix()
    if adj.shape != (n, n):
        raise ProtocolError(f"noisy adjacency has shape {adj.shape}, expected ({n}, {n})")
    x = rnd.noisy_feature_matrix() if features is None else features
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != n:
        raise ProtocolError(f"feature matrix has {x.shape[0]} rows, expected {n}")

    p1 = flip_probability(rnd.budget.epsilon_adj)
    l_tab, lp_tab = likelihood_table(p1)
    floor = min(0.5, tau)

    sq_norms = np.einsum("ij,ij->i", x, x)
    norms = np.sqrt(sq_norms)
    cols_all = np.arange(n)
    rows_out, cols_out, priors_out, post_out = [], [], [], []
    for start in range(0, n, block_rows):
        stop = min(start + block_rows, n)
        s = _block_priors(x, sq_norms, norms, start, stop)
        k = adj[start:stop, :].astype(np.int8) + adj[:, start:stop].T
        l, lp = l_tab[k], lp_tab[k]
        num = l * s
        den = num + lp * (1.0 - s)
        with np.errstate(invalid="ignore"):
            # 0/0 only when p1 == 0 and the bits disagree; NaN never passes the floor.
            post = num / den
        upper = cols_all[None, :] > np.arange(start, stop)[:, None]
        bi, bj = np.nonzero(upper & (post >= floor))
        rows_out.append(bi + start)
        cols_out.append(bj)
        priors_out.append(s[bi, bj])
        post_out.append(post[bi, bj])

    rows = np.concatenate(rows_out) if rows_out else np.empty(0, dtype=np.int64)
    cols = np.concatenate(cols_out) if cols_out else np.empty(0, dtype=np.int64)
    priors = np.concatenate(priors_out) if priors_out else np.empty(0)
    posts = np.concatenate(post_out) if post_out else np.empty(0)
    posteriors = LinkPosteriorSet(n, rows.astype(np.int64), cols.astype(np.int64), priors, posts, float(tau), floor)
    keep = posts >= tau
    topo = SyntheticTopology(n, np.stack([rows[keep], cols[keep]], axis=1).astype(np.int64))
    return topo, posteriors


def raw_noisy_topology(rnd: CollectionRound) -> SyntheticTopology:
    """Undirected graph with ``{i, j}`` present when either client reported it."""
    adj = rnd.noisy_adjacency_matrix().astype(bool)
    sym = adj | adj.T
    rows, cols = np.nonzero(np.triu(sym, k=1))
    return SyntheticTopology(rnd.n, np.stack([rows, cols], axis=1).astype(np.int64))
