"""Bit-level local privacy mechanisms and budget bookkeeping.

Two mechanisms are provided:

* randomized response on a bit, flipping it with probability
  ``1 / (e^eps + 1)``;
* the 1-Bit mechanism on a bounded real ``x in [lo, hi]``, which releases 1
  with probability ``1/(e^eps+1) + (x-lo)/(hi-lo) * (e^eps-1)/(e^eps+1)``.

Both have scalar and vectorised forms.  The vectorised forms draw exactly
one uniform per input element, in order, so the scalar form applied
element-by-element to the same generator gives the same bits.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import BudgetExceededError, ConfigError, DomainError


class DegenerateBudgetWarning(UserWarning):
    """One of the two sub-budgets is zero, so that mechanism releases pure noise."""


def flip_probability(epsilon: float) -> float:
    """``1 / (e^eps + 1)``, computed without overflow for large ``eps``."""
    if epsilon < 0 or math.isnan(epsilon):
        raise ConfigError(f"epsilon must be non-negative, got {epsilon}")
    if math.isinf(epsilon):
        return 0.0
    t = math.exp(-epsilon)
    return t / (1.0 + t)


@dataclass(frozen=True)
class BudgetSplit:
    epsilon_total: float
    delta: float
    epsilon_adj: float
    epsilon_feat: float


def split_budget(epsilon: float, delta: float) -> BudgetSplit:
    """Divide ``epsilon`` between adjacency (``1 - delta``) and features (``delta``).

    ``delta`` of exactly 0 or 1 is allowed but warns: the mechanism that gets
    a zero budget outputs uniform noise.
    """
    if not epsilon > 0:
        raise ConfigError(f"epsilon must be positive, got {epsilon}")
    if not 0.0 <= delta <= 1.0:
        raise ConfigError(f"delta must lie in [0, 1], got {delta}")
    eps_feat = delta * epsilon
    eps_adj = epsilon - eps_feat
    if delta == 0.0:
        warnings.warn("delta=0: feature bits carry no information", DegenerateBudgetWarning, stacklevel=2)
    elif delta == 1.0:
        warnings.warn("delta=1: adjacency bits carry no information", DegenerateBudgetWarning, stacklevel=2)
    return BudgetSplit(float(epsilon), float(delta), eps_adj, eps_feat)


@dataclass(frozen=True)
class RrParams:
    flip_prob: float

    def __post_init__(self):
        if not 0.0 <= self.flip_prob <= 0.5:
            raise ConfigError(f"flip probability must lie in [0, 0.5], got {self.flip_prob}")

    @classmethod
    def from_epsilon(cls, epsilon: float) -> RrParams:
        return cls(flip_probability(epsilon))


@dataclass(frozen=True)
class OneBitParams:
    epsilon: float
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ConfigError(f"1-Bit range requires lo < hi, got ({self.lo}, {self.hi})")
        if self.epsilon < 0:
            raise ConfigError(f"epsilon must be non-negative, got {self.epsilon}")

    def prob_one(self, x):
        """Probability of releasing 1 for input ``x`` (scalar or array)."""
        p = flip_probability(self.epsilon)
        # (e^eps - 1)/(e^eps + 1) == 1 - 2p
        return p + (np.asarray(x, dtype=np.float64) - self.lo) / (self.hi - self.lo) * (1.0 - 2.0 * p)


def rr_perturb_bit(bit: int, params: RrParams, rng: np.random.Generator) -> int:
    if bit not in (0, 1):
        raise DomainError(f"randomized response expects a bit, got {bit!r}")
    return bit ^ int(rng.random() < params.flip_prob)


def rr_perturb(bits, params: RrParams, rng: np.random.Generator) -> np.ndarray:
    """Vectorised randomized response over a 0/1 array."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size and bits.max() > 1:
        raise DomainError("randomized response expects 0/1 input")
    flips = rng.random(bits.shape) < params.flip_prob
    return bits ^ flips.astype(np.uint8)


def one_bit_perturb(x: float, params: OneBitParams, rng: np.random.Generator) -> int:
    if not params.lo <= x <= params.hi:
        raise DomainError(f"input {x} outside [{params.lo}, {params.hi}]")
    return int(rng.random() < params.prob_one(x))


def one_bit_perturb_vector(x, params: OneBitParams, rng: np.random.Generator) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.size and (x.min() < params.lo or x.max() > params.hi):
        raise DomainError(f"input outside [{params.lo}, {params.hi}]")
    return (rng.random(x.shape) < params.prob_one(x)).astype(np.uint8)


def output_distribution(mechanism: str, epsilon: float, x, lo=0.0, hi=1.0) -> np.ndarray:
    """``[Pr[out=0 | x], Pr[out=1 | x]]`` for a single-bit mechanism."""
    if mechanism == "rr":
        p = flip_probability(epsilon)
        p1 = p if x == 0 else 1.0 - p
    elif mechanism == "one_bit":
        p1 = float(OneBitParams(epsilon, lo, hi).prob_one(x))
    else:
        raise ConfigError(f"unknown mechanism {mechanism!r}")
    return np.array([1.0 - p1, p1])


def max_likelihood_ratio(mechanism: str, epsilon: float, lo=0.0, hi=1.0) -> float:
    """Worst-case ``Pr[out | in] / Pr[out | in']`` over adjacent inputs.

    Adjacent inputs differ in one bit; for the 1-Bit mechanism these are the
    range endpoints, where its linear release probability is most extreme.
    The result equals ``e^epsilon``.
    """
    inputs = (0, 1) if mechanism == "rr" else (lo, hi)
    dists = [output_distribution(mechanism, epsilon, x, lo, hi) for x in inputs]
    worst = 0.0
    for a in dists:
        for b in dists:
            worst = max(worst, float(np.max(a / b)))
    return worst


class PrivacyAccountant:
    """Sequential-composition ledger for one client.

    Charges add up; a charge pushing the total past ``epsilon_budget`` (with a
    relative slack for float rounding) raises :class:`BudgetExceededError`.
    """

    def __init__(self, epsilon_budget: float, rel_tol: float = 1e-12):
        self.epsilon_budget = float(epsilon_budget)
        self.rel_tol = rel_tol
        self.charges: list[tuple[str, float]] = []

    @property
    def spent(self) -> float:
        return math.fsum(eps for _, eps in self.charges)

    @property
    def remaining(self) -> float:
        return self.epsilon_budget - self.spent

    def charge(self, name: str, epsilon: float) -> None:
        if epsilon < 0:
            raise ConfigError("cannot charge a negative epsilon")
        total = self.spent + epsilon
        if total > self.epsilon_budget * (1 + self.rel_tol):
            raise BudgetExceededError(
                f"{name}: charging {epsilon} brings the total to {total}, over budget {self.epsilon_budget}"
            )
        self.charges.append((name, float(epsilon)))
