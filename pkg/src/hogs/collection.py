"""Simulated decentralized collection round.

Each client perturbs its own adjacency row with randomized response and its
feature vector with the 1-Bit mechanism, then hands a packed
:class:`NoisyReport` to the curator.  Clients share nothing: report ``i`` is
a function of ``(state_i, budget, master_seed, i)`` only.

Report stream layout (little-endian)::

    header  : b"HOGS" | u16 version | f64 epsilon | f64 delta | u64 master_seed
    record* : u32 length | u32 node_id | u32 n | u32 d
              | packed adjacency bits | packed feature bits

``length`` counts the bytes after itself.  Bits are packed LSB-first, so
bit ``k`` of a vector lives in byte ``k // 8`` at position ``k % 8``.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterator

import numpy as np

from .errors import ProtocolError, ValidationError
from .graph import GraphDataset, adjacency_row
from .ldp import (
    BudgetSplit,
    OneBitParams,
    PrivacyAccountant,
    RrParams,
    one_bit_perturb_vector,
    rr_perturb,
    split_budget,
)
from .rng import client_rng

MAGIC = b"HOGS"
VERSION = 1
_HEADER = struct.Struct("<4sHddQ")
_RECORD_HEAD = struct.Struct("<IIII")


def pack_bits(bits) -> np.ndarray:
    return np.packbits(np.asarray(bits, dtype=np.uint8), bitorder="little")


def unpack_bits(packed, length: int) -> np.ndarray:
    return np.unpackbits(np.asarray(packed, dtype=np.uint8), count=length, bitorder="little")


@dataclass(frozen=True, eq=False)
class PrivateNodeState:
    node_id: int
    adjacency: np.ndarray
    features: np.ndarray
    feature_lo: float = 0.0
    feature_hi: float = 1.0

    def __post_init__(self):
        if self.adjacency[self.node_id] != 0:
            raise ValidationError(f"node {self.node_id} lists itself as a neighbour")
        f = self.features
        if f.size and (f.min() < self.feature_lo or f.max() > self.feature_hi):
            raise ValidationError(f"node {self.node_id} has features outside its range")

    @classmethod
    def from_dataset(cls, ds: GraphDataset, i: int) -> PrivateNodeState:
        return cls(i, adjacency_row(ds, i), ds.features[i], ds.feature_lo, ds.feature_hi)


@dataclass(frozen=True, eq=False)
class NoisyReport:
    node_id: int
    n: int
    d: int
    adjacency_packed: np.ndarray
    features_packed: np.ndarray
    budget: BudgetSplit

    @property
    def noisy_adjacency(self) -> np.ndarray:
        return unpack_bits(self.adjacency_packed, self.n)

    @property
    def noisy_features(self) -> np.ndarray:
        return unpack_bits(self.features_packed, self.d)

    def same_payload(self, other: NoisyReport) -> bool:
        return (
            self.node_id == other.node_id
            and self.n == other.n
            and self.d == other.d
            and np.array_equal(self.adjacency_packed, other.adjacency_packed)
            and np.array_equal(self.features_packed, other.features_packed)
        )


@dataclass(frozen=True, eq=False)
class CollectionRound:
    reports: tuple
    master_seed: int
    budget: BudgetSplit

    def __post_init__(self):
        ids = [r.node_id for r in self.reports]
        if ids != list(range(len(ids))):
            raise ProtocolError("a round needs exactly one report per node id, ordered by id")
        for r in self.reports:
            if r.n != len(ids) or r.d != self.d:
                raise ProtocolError(f"report {r.node_id} has dimensions ({r.n}, {r.d})")
            if r.budget != self.budget:
                raise ProtocolError(f"report {r.node_id} was produced under a different budget")

    @property
    def n(self) -> int:
        return len(self.reports)

    @property
    def d(self) -> int:
        return self.reports[0].d if self.reports else 0

    def noisy_adjacency_matrix(self) -> np.ndarray:
        """Row ``i`` is client ``i``'s noisy adjacency list (not symmetric)."""
        packed = np.stack([r.adjacency_packed for r in self.reports])
        return np.unpackbits(packed, axis=1, count=self.n, bitorder="little")

    def noisy_feature_matrix(self) -> np.ndarray:
        packed = np.stack([r.features_packed for r in self.reports])
        return np.unpackbits(packed, axis=1, count=self.d, bitorder="little")


def perturb_node(state: PrivateNodeState, budget: BudgetSplit, rng: np.random.Generator,
                 expected_dims=None) -> NoisyReport:
    """Run one client's side of the protocol.

    Every adjacency bit, the diagonal included, goes through randomized
    response at ``epsilon_adj``; every feature entry goes through the 1-Bit
    mechanism at ``epsilon_feat``.  Adjacency noise is drawn before feature
    noise from the same client stream.
    """
    n, d = state.adjacency.size, state.features.size
    if expected_dims is not None and (n, d) != tuple(expected_dims):
        raise ProtocolError(f"node {state.node_id}: got dimensions ({n}, {d}), round expects {tuple(expected_dims)}")
    accountant = PrivacyAccountant(budget.epsilon_total)
    accountant.charge("adjacency", budget.epsilon_adj)
    accountant.charge("features", budget.epsilon_feat)

    noisy_adj = rr_perturb(state.adjacency, RrParams.from_epsilon(budget.epsilon_adj), rng)
    params = OneBitParams(budget.epsilon_feat, state.feature_lo, state.feature_hi)
    noisy_feat = one_bit_perturb_vector(state.features, params, rng)
    return NoisyReport(state.node_id, n, d, pack_bits(noisy_adj), pack_bits(noisy_feat), budget)


def collect_one(ds: GraphDataset, i: int, budget: BudgetSplit, master_seed: int) -> NoisyReport:
    state = PrivateNodeState.from_dataset(ds, i)
    return perturb_node(state, budget, client_rng(master_seed, i), (ds.node_count, ds.feature_dim))


def run_collection(ds: GraphDataset, budget: BudgetSplit, master_seed: int, order=None) -> CollectionRound:
    """Collect one report from every node.

    ``order`` optionally permutes the client execution order; the assembled
    round is keyed by node id and does not depend on it.
    """
    n = ds.node_count
    order = range(n) if order is None else order
    reports = [None] * n
    for i in order:
        reports[i] = collect_one(ds, int(i), budget, master_seed)
    return CollectionRound(tuple(reports), int(master_seed), budget)


def write_report_stream(rnd: CollectionRound, dest) -> None:
    """Serialize a round; ``dest`` is a path or a writable binary file."""
    if isinstance(dest, (str, Path)):
        with open(dest, "wb") as fh:
            return write_report_stream(rnd, fh)
    b = rnd.budget
    dest.write(_HEADER.pack(MAGIC, VERSION, b.epsilon_total, b.delta, rnd.master_seed))
    for r in rnd.reports:
        write_report(dest, r)


def write_report(fh: BinaryIO, r: NoisyReport) -> None:
    body = r.adjacency_packed.tobytes() + r.features_packed.tobytes()
    fh.write(_RECORD_HEAD.pack(12 + len(body), r.node_id, r.n, r.d))
    fh.write(body)


def _read_exact(fh, size):
    data = fh.read(size)
    if len(data) != size:
        raise ProtocolError(f"truncated report stream: wanted {size} bytes, got {len(data)}")
    return data


def read_stream_header(fh: BinaryIO) -> tuple[BudgetSplit, int]:
    magic, version, eps, delta, seed = _HEADER.unpack(_read_exact(fh, _HEADER.size))
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ProtocolError(f"unsupported stream version {version}")
    # Boundary-delta warnings were already issued when the round was produced.
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        budget = split_budget(eps, delta)
    return budget, seed


def iter_reports(fh: BinaryIO, budget: BudgetSplit, dims=None) -> Iterator[NoisyReport]:
    """Yield reports until EOF, checking each against ``dims = (n, d)`` if given."""
    while True:
        prefix = fh.read(4)
        if not prefix:
            return
        if len(prefix) != 4:
            raise ProtocolError("truncated record length")
        (length,) = struct.unpack("<I", prefix)
        body = _read_exact(fh, length)
        node_id, n, d = struct.unpack_from("<III", body)
        na, nf = (n + 7) // 8, (d + 7) // 8
        if length != 12 + na + nf:
            raise ProtocolError(f"record for node {node_id}: length {length} does not match n={n}, d={d}")
        if dims is not None and (n, d) != tuple(dims):
            raise ProtocolError(f"record for node {node_id} has dimensions ({n}, {d}), expected {tuple(dims)}")
        adj = np.frombuffer(body, dtype=np.uint8, count=na, offset=12).copy()
        feat = np.frombuffer(body, dtype=np.uint8, count=nf, offset=12 + na).copy()
        yield NoisyReport(node_id, n, d, adj, feat, budget)


def read_report_stream(src, dims=None) -> CollectionRound:
    """Parse a full round; reports may appear in any order in the stream."""
    if isinstance(src, (str, Path)):
        with open(src, "rb") as fh:
            return read_report_stream(fh, dims)
    budget, seed = read_stream_header(src)
    by_id = {}
    for r in iter_reports(src, budget, dims):
        if r.node_id in by_id:
            raise ProtocolError(f"duplicate report for node {r.node_id}")
        by_id[r.node_id] = r
    reports = tuple(by_id[i] for i in sorted(by_id))
    return CollectionRound(reports, seed, budget)
