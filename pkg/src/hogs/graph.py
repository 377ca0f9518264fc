"""Graph datasets: loading, validation, splitting and serialization.

File formats (all UTF-8, 0-based node ids):

* edges: one ``i<TAB>j`` pair per line; both orientations and duplicates
  collapse to a single undirected edge.
* features: dense CSV ``node_id,v1,...,vd`` or sparse triplets
  ``node_id<TAB>feat_idx<TAB>value``; the format is detected from the first
  data line (comma-delimited means dense).
* labels: ``node_id<TAB>class_idx``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, ParseError, ValidationError

log = logging.getLogger(__name__)

TRAIN, VALIDATION, TEST = 0, 1, 2
ROLE_NAMES = {"train": TRAIN, "validation": VALIDATION, "val": VALIDATION, "test": TEST}

EDGE_FILE = "edges.tsv"
FEATURE_FILE = "features.csv"
SPARSE_FEATURE_FILE = "features.tsv"
LABEL_FILE = "labels.tsv"
META_FILE = "meta.json"


def canonical_edges(pairs, n=None) -> np.ndarray:
    """Return unique ``(i, j)`` rows with ``i < j``, sorted lexicographically.

    Self-pairs are dropped.  ``pairs`` may list either orientation.
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    lo = np.minimum(pairs[:, 0], pairs[:, 1])
    hi = np.maximum(pairs[:, 0], pairs[:, 1])
    keep = lo != hi
    lo, hi = lo[keep], hi[keep]
    if lo.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    if n is None:
        n = int(hi.max()) + 1
    keys = np.unique(lo * n + hi)
    return np.stack([keys // n, keys % n], axis=1)


@dataclass(frozen=True, eq=False)
class GraphDataset:
    """An undirected attributed graph with one class label per node.

    ``edges`` holds each undirected edge once as a row ``(i, j)`` with
    ``i < j``.  Construct through :func:`make_dataset` or
    :func:`load_dataset` to get invariant checking and canonical edge order.
    """

    node_count: int
    feature_dim: int
    class_count: int
    edges: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    feature_lo: float
    feature_hi: float

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric 0/1 adjacency in CSR form."""
        n = self.node_count
        i, j = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * len(i), dtype=np.uint8)
        a = sp.coo_matrix((data, (np.r_[i, j], np.r_[j, i])), shape=(n, n))
        return a.tocsr()

    @property
    def edge_count(self) -> int:
        return int(self.edges.shape[0])

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(i), int(j)) for i, j in self.edges}

    def one_hot_labels(self) -> np.ndarray:
        y = np.zeros((self.node_count, self.class_count))
        y[np.arange(self.node_count), self.labels] = 1.0
        return y


def make_dataset(edges, features, labels, feature_range=None, class_count=None) -> GraphDataset:
    """Validate raw arrays and build a :class:`GraphDataset`.

    ``feature_range`` defaults to ``(min, max)`` over ``features``.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ValidationError("features must be a 2-d matrix")
    labels = np.asarray(labels, dtype=np.int64)
    n, d = features.shape
    if n == 0 or d == 0:
        raise ValidationError("dataset needs at least one node and one feature")
    if labels.shape != (n,):
        raise ValidationError(f"expected {n} labels, got shape {labels.shape}")
    if labels.min() < 0:
        raise ValidationError("negative class index")
    c = int(labels.max()) + 1 if class_count is None else int(class_count)
    if labels.max() >= c:
        raise ValidationError(f"class index {labels.max()} >= class_count {c}")
    if not np.all(np.isfinite(features)):
        raise ValidationError("non-finite feature value")

    raw = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if raw.size and (raw.min() < 0 or raw.max() >= n):
        bad = raw[(raw < 0).any(axis=1) | (raw >= n).any(axis=1)][0]
        raise ValidationError(f"edge ({bad[0]}, {bad[1]}) references a node outside [0, {n})")
    self_loops = int(np.count_nonzero(raw[:, 0] == raw[:, 1])) if raw.size else 0
    if self_loops:
        log.warning("dropping %d self-loop(s)", self_loops)
    edges = canonical_edges(raw, n)

    if feature_range is None:
        lo, hi = float(features.min()), float(features.max())
        if lo == hi:
            # Constant features: widen so that lo < hi still holds.
            hi = lo + 1.0
    else:
        lo, hi = map(float, feature_range)
    if not lo < hi:
        raise ValidationError(f"feature range requires lo < hi, got ({lo}, {hi})")
    if features.min() < lo or features.max() > hi:
        raise ValidationError(f"feature values fall outside [{lo}, {hi}]")

    return GraphDataset(n, d, c, edges, features, labels, lo, hi)


def _data_lines(path):
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if line and not line.startswith("#"):
                yield line_no, line


def _read_labels(path):
    labels = {}
    for line_no, line in _data_lines(path):
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(path, line_no, f"expected 'node_id<TAB>class_idx', got {line!r}")
        try:
            node, cls = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(path, line_no, f"non-integer field in {line!r}") from None
        if node in labels:
            raise ValidationError(f"{path}:{line_no}: duplicate label for node {node}")
        labels[node] = cls
    if not labels:
        raise ValidationError(f"{path}: no labels")
    n = max(labels) + 1
    missing = n - len(labels)
    if missing or min(labels) < 0:
        raise ValidationError(f"{path}: labels must cover nodes 0..{n - 1} exactly ({missing} missing)")
    return np.array([labels[i] for i in range(n)], dtype=np.int64)


def _read_edges(path):
    pairs = []
    for line_no, line in _data_lines(path):
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(path, line_no, f"expected 'i<TAB>j', got {line!r}")
        try:
            pairs.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise ParseError(path, line_no, f"non-integer node id in {line!r}") from None
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def _read_features(path, n, feature_dim=None):
    lines = _data_lines(path)
    first = next(lines, None)
    if first is None:
        raise ValidationError(f"{path}: no feature rows")

    def rows():
        yield first
        yield from lines

    if "," in first[1]:
        return _read_dense_features(path, rows(), n)
    return _read_sparse_features(path, rows(), n, feature_dim)


def _read_dense_features(path, rows, n):
    out = None
    seen = np.zeros(n, dtype=bool)
    for line_no, line in rows:
        parts = line.split(",")
        try:
            node = int(parts[0])
            values = np.array(parts[1:], dtype=np.float64)
        except ValueError:
            raise ParseError(path, line_no, "non-numeric field") from None
        if out is None:
            if values.size == 0:
                raise ParseError(path, line_no, "row has no feature columns")
            out = np.zeros((n, values.size))
        if values.size != out.shape[1]:
            raise ParseError(path, line_no, f"expected {out.shape[1]} values, got {values.size}")
        if not 0 <= node < n:
            raise ValidationError(f"{path}:{line_no}: node {node} outside [0, {n})")
        if seen[node]:
            raise ValidationError(f"{path}:{line_no}: duplicate feature row for node {node}")
        seen[node] = True
        out[node] = values
    return out


def _read_sparse_features(path, rows, n, feature_dim):
    nodes, cols, vals = [], [], []
    for line_no, line in rows:
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(path, line_no, f"expected 'node<TAB>feat_idx<TAB>value', got {line!r}")
        try:
            node, col, val = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise ParseError(path, line_no, f"bad field in {line!r}") from None
        if not 0 <= node < n:
            raise ValidationError(f"{path}:{line_no}: node {node} outside [0, {n})")
        if col < 0 or (feature_dim is not None and col >= feature_dim):
            raise ValidationError(f"{path}:{line_no}: feature index {col} out of range")
        nodes.append(node)
        cols.append(col)
        vals.append(val)
    d = feature_dim if feature_dim is not None else max(cols) + 1
    out = np.zeros((n, d))
    out[nodes, cols] = vals
    return out


def load_dataset(feature_path, edge_path, label_path, *, feature_range=None,
                 feature_dim=None, class_count=None) -> GraphDataset:
    """Read the three dataset files and return a validated dataset.

    ``n`` comes from the label file, which must list every node exactly once.
    ``d`` comes from the dense column count or the largest sparse feature
    index unless ``feature_dim`` is given.  Feature range defaults to the
    observed ``(min, max)``.

    Raises
    ------
    ParseError
        A malformed row; the message carries the file and line number.
    ValidationError
        Out-of-range node ids, duplicate labels or rows, empty files.
    """
    labels = _read_labels(label_path)
    n = labels.size
    features = _read_features(feature_path, n, feature_dim)
    edges = _read_edges(edge_path)
    return make_dataset(edges, features, labels, feature_range, class_count)


def save_dataset(ds: GraphDataset, directory, *, sparse=None, meta=None) -> Path:
    """Write ``ds`` as edge/feature/label files plus a JSON sidecar.

    ``sparse`` picks the triplet feature format; by default it is used when
    fewer than 10% of entries are nonzero.  Extra ``meta`` keys are merged into
    the sidecar.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if sparse is None:
        sparse = np.count_nonzero(ds.features) < 0.1 * ds.features.size

    with open(directory / EDGE_FILE, "w", encoding="utf-8") as fh:
        for i, j in ds.edges.tolist():
            fh.write(f"{i}\t{j}\n")
    with open(directory / LABEL_FILE, "w", encoding="utf-8") as fh:
        for i, y in enumerate(ds.labels.tolist()):
            fh.write(f"{i}\t{y}\n")

    stale = directory / (FEATURE_FILE if sparse else SPARSE_FEATURE_FILE)
    if stale.exists():
        stale.unlink()
    if sparse:
        rows, cols = np.nonzero(ds.features)
        with open(directory / SPARSE_FEATURE_FILE, "w", encoding="utf-8") as fh:
            for i, k, v in zip(rows.tolist(), cols.tolist(), ds.features[rows, cols].tolist()):
                fh.write(f"{i}\t{k}\t{v!r}\n")
    else:
        with open(directory / FEATURE_FILE, "w", encoding="utf-8") as fh:
            for i, row in enumerate(ds.features.tolist()):
                fh.write(f"{i}," + ",".join(map(repr, row)) + "\n")

    sidecar = {
        "n": ds.node_count,
        "d": ds.feature_dim,
        "c": ds.class_count,
        "feature_lo": ds.feature_lo,
        "feature_hi": ds.feature_hi,
        "edges": ds.edge_count,
    }
    sidecar.update(meta or {})
    (directory / META_FILE).write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")
    return directory


def dataset_paths(directory):
    """Return ``(feature_path, edge_path, label_path)`` inside ``directory``."""
    directory = Path(directory)
    features = directory / FEATURE_FILE
    if not features.exists():
        features = directory / SPARSE_FEATURE_FILE
    return features, directory / EDGE_FILE, directory / LABEL_FILE


def load_dataset_dir(directory) -> GraphDataset:
    """Load a directory written by :func:`save_dataset`, honouring its sidecar."""
    directory = Path(directory)
    meta = read_meta(directory)
    kwargs = {}
    if meta:
        kwargs = {
            "feature_range": (meta["feature_lo"], meta["feature_hi"]),
            "feature_dim": meta["d"],
            "class_count": meta["c"],
        }
    return load_dataset(*dataset_paths(directory), **kwargs)


def read_meta(directory) -> dict:
    path = Path(directory) / META_FILE
    if not path.exists():
        return {}
    return json.loads(path.read_text(encoding="utf-8"))


def adjacency_row(ds: GraphDataset, i: int) -> np.ndarray:
    """Bit vector of length ``n`` with ones at the neighbours of node ``i``."""
    if not 0 <= i < ds.node_count:
        raise IndexError(f"node index {i} outside [0, {ds.node_count})")
    a = ds.adjacency
    row = np.zeros(ds.node_count, dtype=np.uint8)
    row[a.indices[a.indptr[i]:a.indptr[i + 1]]] = 1
    return row


@dataclass(frozen=True, eq=False)
class SplitAssignment:
    """Role per node (``TRAIN``, ``VALIDATION`` or ``TEST``) plus the seed used."""

    roles: np.ndarray
    seed: int
    ratios: tuple = field(default=(0.5, 0.25, 0.25))

    def indices(self, role) -> np.ndarray:
        if isinstance(role, str):
            role = ROLE_NAMES[role]
        return np.flatnonzero(self.roles == role)

    @property
    def train(self):
        return self.indices(TRAIN)

    @property
    def validation(self):
        return self.indices(VALIDATION)

    @property
    def test(self):
        return self.indices(TEST)

    def counts(self) -> tuple[int, int, int]:
        return tuple(int(np.count_nonzero(self.roles == r)) for r in (TRAIN, VALIDATION, TEST))


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def split_nodes(ds, ratios=(0.5, 0.25, 0.25), seed=0) -> SplitAssignment:
    """Uniform random train/validation/test split.

    Validation and test get ``round(n * ratio)`` nodes; train takes the rest.
    ``ds`` may be a dataset or a plain node count.
    """
    n = ds if isinstance(ds, (int, np.integer)) else ds.node_count
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or min(ratios) <= 0:
        raise ConfigError(f"need three positive split ratios, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must sum to 1, got {sum(ratios)!r}")
    n_val = _round_half_up(n * ratios[1])
    n_test = _round_half_up(n * ratios[2])
    n_train = n - n_val - n_test
    if n_train < 0:
        raise ConfigError(f"cannot split {n} nodes with ratios {ratios}")
    order = np.random.default_rng(seed).permutation(n)
    roles = np.empty(n, dtype=np.int8)
    roles[order[:n_train]] = TRAIN
    roles[order[n_train:n_train + n_val]] = VALIDATION
    roles[order[n_train + n_val:]] = TEST
    return SplitAssignment(roles, int(seed), ratios)
