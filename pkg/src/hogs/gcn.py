"""Two-layer graph convolutional network in numpy.

``logits = A_hat @ dropout(relu(A_hat @ X @ W1)) @ W2`` with
``A_hat = D^-1/2 (A + I) D^-1/2``.  Gradients are written out by hand;
:func:`loss_and_grads` is what the finite-difference checks exercise.
Training uses Adam with decoupled weight decay and early stopping on
validation accuracy.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, NumericError, TrainingError
from .graph import SplitAssignment

DEFAULT_HIDDEN = 16
FEATURE_NORMS = ("none", "center", "row")


def preprocess_features(x, mode: str = "center") -> np.ndarray:
    """Input scaling applied before training.

    ``center`` subtracts column means.  Noisy feature bits share a large
    common component (every bit is 1 with probability near 1/2) which, left
    in, saturates the first layer identically for every node.  ``row``
    divides each row by its sum (rows summing to zero are left alone).
    """
    x = np.asarray(x, dtype=np.float64)
    if mode == "none":
        return x
    if mode == "center":
        return x - x.mean(axis=0)
    if mode == "row":
        s = x.sum(axis=1, keepdims=True)
        return x / np.where(s == 0.0, 1.0, s)
    raise ConfigError(f"unknown feature normalization {mode!r}")


def normalize_adjacency(topology, n: int | None = None) -> sp.csr_matrix:
    """Symmetric normalization of the adjacency with self-loops.

    ``topology`` may be anything with an ``edges`` array of ``(i, j)`` rows,
    or the array itself.
    """
    edges = np.asarray(getattr(topology, "edges", topology), dtype=np.int64).reshape(-1, 2)
    if n is None:
        n = getattr(topology, "n", None) or getattr(topology, "node_count")
    i, j = edges[:, 0], edges[:, 1]
    diag = np.arange(n)
    a = sp.csr_matrix((np.ones(2 * i.size + n), (np.r_[i, j, diag], np.r_[j, i, diag])), shape=(n, n))
    # Duplicate pairs would have summed above; collapse to 0/1.
    a.data[:] = 1.0
    deg = np.asarray(a.sum(axis=1)).ravel()
    d = sp.diags(1.0 / np.sqrt(deg))
    return (d @ a @ d).tocsr()


@dataclass
class TrainConfig:
    learning_rate: float = 1e-2
    weight_decay: float = 5e-4
    dropout: float = 0.5
    max_epochs: int = 300
    patience: int = 30
    seed: int = 0
    hidden: int = DEFAULT_HIDDEN
    feature_norm: str = "center"

    def __post_init__(self):
        if self.feature_norm not in FEATURE_NORMS:
            raise ConfigError(f"feature_norm must be one of {FEATURE_NORMS}, got {self.feature_norm!r}")
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ConfigError("learning rate and weight decay must be non-negative")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.max_epochs < 1 or self.patience < 1 or self.hidden < 1:
            raise ConfigError("max_epochs, patience and hidden must be positive")


@dataclass
class GcnModel:
    w1: np.ndarray
    w2: np.ndarray
    adj: sp.csr_matrix
    dropout: float = 0.5

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    def copy(self) -> GcnModel:
        return replace(self, w1=self.w1.copy(), w2=self.w2.copy())


def glorot(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_model(adj, n_features: int, n_classes: int, hidden: int = DEFAULT_HIDDEN,
               dropout: float = 0.5, seed: int = 0) -> GcnModel:
    rng = np.random.default_rng(seed)
    w1 = glorot(n_features, hidden, rng)
    w2 = glorot(hidden, n_classes, rng)
    return GcnModel(w1, w2, sp.csr_matrix(adj), dropout)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _dropout_mask(shape, rate, rng):
    if rate == 0.0:
        return None
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _forward(model, ax, mask):
    pre = ax @ model.w1
    hid = np.maximum(pre, 0.0)
    if mask is not None:
        hid = hid * mask
    a_hid = np.asarray(model.adj @ hid)
    logits = a_hid @ model.w2
    return logits, (pre, hid, a_hid)


def forward(model: GcnModel, features, train_mode: bool = False, rng=None, ax=None) -> np.ndarray:
    """Class logits for every node.

    ``ax`` may carry a precomputed ``A_hat @ features``.  Dropout is applied
    only when ``train_mode`` is set, using ``rng``.
    """
    if ax is None:
        features = np.asarray(features, dtype=np.float64)
        if not np.all(np.isfinite(features)):
            raise NumericError("non-finite feature value")
        ax = np.asarray(model.adj @ features)
    mask = None
    if train_mode:
        if rng is None:
            raise ValueError("train_mode needs a random generator for dropout")
        mask = _dropout_mask((ax.shape[0], model.hidden), model.dropout, rng)
    return _forward(model, ax, mask)[0]


def loss_and_grads(model: GcnModel, ax, labels, idx, weight_decay: float = 0.0, mask=None):
    """Mean cross-entropy over ``idx`` plus ``weight_decay / 2 * ||W||^2``.

    ``ax`` is ``A_hat @ X``; ``mask`` an optional fixed dropout mask.
    Returns ``(loss, grad_w1, grad_w2)``.
    """
    logits, (pre, hid, a_hid) = _forward(model, ax, mask)
    probs = softmax(logits[idx])
    y = labels[idx]
    m = len(idx)
    ce = -np.mean(np.log(probs[np.arange(m), y] + 1e-300))
    reg = 0.5 * weight_decay * (np.sum(model.w1 ** 2) + np.sum(model.w2 ** 2))

    d_logits = np.zeros_like(logits)
    d_sel = probs
    d_sel[np.arange(m), y] -= 1.0
    d_logits[idx] = d_sel / m

    g2 = a_hid.T @ d_logits
    d_a_hid = d_logits @ model.w2.T
    d_hid = np.asarray(model.adj.T @ d_a_hid)
    if mask is not None:
        d_hid = d_hid * mask
    d_pre = d_hid * (pre > 0)
    g1 = ax.T @ d_pre
    if weight_decay:
        g1 = g1 + weight_decay * model.w1
        g2 = g2 + weight_decay * model.w2
    return ce + reg, g1, g2


def accuracy(logits, labels, idx) -> float:
    idx = np.asarray(idx)
    if idx.size == 0:
        return float("nan")
    return float(np.mean(np.argmax(logits[idx], axis=1) == labels[idx]))


def evaluate(model: GcnModel, features, labels, split: SplitAssignment, role="test", ax=None) -> float:
    """Fraction of ``role`` nodes whose top logit matches the label."""
    logits = forward(model, features, ax=ax)
    return accuracy(logits, np.asarray(labels), split.indices(role))


@dataclass
class TrainMetrics:
    seed: int
    epochs_run: int
    best_val_acc: float
    test_acc: float
    wall_ms: float
    best_epoch: int = 0

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "epochs_run": self.epochs_run,
            "best_val_acc": self.best_val_acc,
            "test_acc": self.test_acc,
            "wall_ms": self.wall_ms,
        }


class AdamW:
    """Adam with bias correction and decoupled weight decay."""

    def __init__(self, params, lr, weight_decay, betas=(0.9, 0.999), eps=1e-8):
        self.lr, self.wd, self.betas, self.eps = lr, weight_decay, betas, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.betas
        c1, c2 = 1.0 - b1 ** self.t, 1.0 - b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * ((m / c1) / (np.sqrt(v / c2) + self.eps) + self.wd * p)


def train(model: GcnModel, features, labels, split: SplitAssignment, cfg: TrainConfig):
    """Fit ``model`` on the train nodes and return the best-validation checkpoint.

    Returns ``(model, TrainMetrics)``; the input model is not modified.
    """
    t0 = time.perf_counter()
    features = np.asarray(features, dtype=np.float64)
    if not np.all(np.isfinite(features)):
        raise NumericError("non-finite feature value")
    labels = np.asarray(labels)
    ax = np.asarray(model.adj @ features)
    train_idx, val_idx = split.train, split.validation
    rng = np.random.default_rng([cfg.seed, 1])  # dropout stream, distinct from init

    model = model.copy()
    model.dropout = cfg.dropout
    opt = AdamW([model.w1, model.w2], cfg.learning_rate, cfg.weight_decay)
    best = model.copy()
    best_val, best_epoch, since_best = -1.0, 0, 0
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        mask = _dropout_mask((ax.shape[0], model.hidden), cfg.dropout, rng)
        loss, g1, g2 = loss_and_grads(model, ax, labels, train_idx, 0.0, mask)
        if not np.isfinite(loss):
            raise TrainingError(epoch, f"loss became {loss}")
        opt.step([model.w1, model.w2], [g1, g2])
        if not (np.all(np.isfinite(model.w1)) and np.all(np.isfinite(model.w2))):
            raise TrainingError(epoch, "weights became non-finite")

        val = accuracy(forward(model, None, ax=ax), labels, val_idx)
        if val > best_val:
            best, best_val, best_epoch, since_best = model.copy(), val, epoch, 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break

    test = evaluate(best, None, labels, split, "test", ax=ax)
    wall = (time.perf_counter() - t0) * 1000.0
    return best, TrainMetrics(cfg.seed, epoch, best_val, test, wall, best_epoch)


def fit_and_score(edges_or_topology, features, labels, split, cfg: TrainConfig, n_classes=None):
    """Normalize the graph, initialise from ``cfg.seed``, train, and return ``(model, metrics)``."""
    features = preprocess_features(features, cfg.feature_norm)
    labels = np.asarray(labels)
    n = features.shape[0]
    adj = normalize_adjacency(edges_or_topology, n)
    c = int(labels.max()) + 1 if n_classes is None else n_classes
    model = init_model(adj, features.shape[1], c, cfg.hidden, cfg.dropout, cfg.seed)
    return train(model, features, labels, split, cfg)
