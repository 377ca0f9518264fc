import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hogs.errors import BudgetExceededError, ConfigError, DomainError
from hogs.ldp import (
    DegenerateBudgetWarning,
    OneBitParams,
    PrivacyAccountant,
    RrParams,
    flip_probability,
    max_likelihood_ratio,
    one_bit_perturb,
    one_bit_perturb_vector,
    output_distribution,
    rr_perturb,
    rr_perturb_bit,
    split_budget,
)

import oracles

eps_st = st.floats(0.01, 30.0)


@given(eps_st)
def test_flip_probability_matches_closed_form(eps):
    assert math.isclose(flip_probability(eps), oracles.flip_prob(eps), rel_tol=1e-12)


def test_flip_probability_limits():
    assert flip_probability(0.0) == 0.5
    assert flip_probability(math.inf) == 0.0
    assert 0.0 < flip_probability(700.0) < 1e-300
    with pytest.raises(ConfigError):
        flip_probability(-1.0)


@given(eps=eps_st, x=st.floats(-3.0, 5.0))
def test_one_bit_probability(eps, x):
    lo, hi = -3.0, 5.0
    p = float(OneBitParams(eps, lo, hi).prob_one(x))
    assert math.isclose(p, oracles.one_bit_prob(x, eps, lo, hi), rel_tol=1e-9, abs_tol=1e-15)
    assert 0.0 <= p <= 1.0


@given(eps=st.floats(0.01, 50.0), delta=st.floats(0.0, 1.0))
def test_split_budget_sums(eps, delta):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateBudgetWarning)
        b = split_budget(eps, delta)
    assert b.epsilon_adj + b.epsilon_feat == pytest.approx(eps, rel=1e-12)
    assert b.epsilon_feat == pytest.approx(delta * eps)
    acc = PrivacyAccountant(eps)
    acc.charge("adjacency", b.epsilon_adj)
    acc.charge("features", b.epsilon_feat)
    assert acc.remaining == pytest.approx(0.0, abs=1e-9 * eps)


@pytest.mark.parametrize("delta", [0.0, 1.0])
def test_boundary_delta_warns(delta):
    with pytest.warns(DegenerateBudgetWarning):
        split_budget(4.0, delta)


@pytest.mark.parametrize("eps,delta", [(0.0, 0.5), (-1.0, 0.5), (4.0, 1.5), (4.0, -0.1)])
def test_split_budget_rejects(eps, delta):
    with pytest.raises(ConfigError):
        split_budget(eps, delta)


def test_accountant_overspend():
    acc = PrivacyAccountant(1.0)
    acc.charge("a", 0.6)
    with pytest.raises(BudgetExceededError):
        acc.charge("b", 0.5)
    assert acc.spent == pytest.approx(0.6)


def test_rr_params_validation():
    with pytest.raises(ConfigError):
        RrParams(0.6)


def test_scalar_and_vector_forms_agree():
    params = RrParams.from_epsilon(1.0)
    bits = np.random.default_rng(0).integers(0, 2, 200)
    vec = rr_perturb(bits, params, np.random.default_rng(5))
    rng = np.random.default_rng(5)
    scal = [rr_perturb_bit(int(b), params, rng) for b in bits]
    np.testing.assert_array_equal(vec, scal)

    ob = OneBitParams(1.0, 0.0, 2.0)
    x = np.linspace(0.0, 2.0, 50)
    vec = one_bit_perturb_vector(x, ob, np.random.default_rng(9))
    rng = np.random.default_rng(9)
    np.testing.assert_array_equal(vec, [one_bit_perturb(v, ob, rng) for v in x])


def test_domain_errors():
    rng = np.random.default_rng(0)
    with pytest.raises(DomainError):
        one_bit_perturb(1.5, OneBitParams(1.0), rng)
    with pytest.raises(DomainError):
        one_bit_perturb_vector([0.2, -0.1], OneBitParams(1.0), rng)
    with pytest.raises(DomainError):
        rr_perturb([0, 2], RrParams(0.1), rng)
    with pytest.raises(DomainError):
        rr_perturb_bit(3, RrParams(0.1), rng)


@given(eps=eps_st, x=st.floats(0.0, 1.0))
def test_output_distribution_is_a_distribution(eps, x):
    for mech, inp in (("rr", int(x > 0.5)), ("one_bit", x)):
        dist = output_distribution(mech, eps, inp)
        assert dist.sum() == pytest.approx(1.0)
        assert dist.min() >= 0.0


@given(eps=st.floats(0.01, 20.0), x=st.floats(0.0, 1.0), y=st.floats(0.0, 1.0))
def test_one_bit_ratio_never_exceeds_bound(eps, x, y):
    a = output_distribution("one_bit", eps, x)
    b = output_distribution("one_bit", eps, y)
    assert np.all(a / b <= math.exp(eps) * (1 + 1e-12))


def test_epsilon_zero_is_uniform():
    assert output_distribution("rr", 0.0, 1).tolist() == [0.5, 0.5]
    assert max_likelihood_ratio("one_bit", 0.0) == pytest.approx(1.0)


def test_no_noise_limit_is_identity():
    bits = np.random.default_rng(1).integers(0, 2, 1000)
    out = rr_perturb(bits, RrParams.from_epsilon(math.inf), np.random.default_rng(2))
    np.testing.assert_array_equal(out, bits)


def test_rr_at_ln3():
    assert flip_probability(math.log(3)) == pytest.approx(0.25, rel=1e-15)
    out = rr_perturb(np.zeros(10**6, dtype=np.uint8), RrParams.from_epsilon(math.log(3)), np.random.default_rng(3))
    assert abs(out.mean() - 0.25) <= 0.0013


def test_one_bit_endpoints_and_binary_degeneracy():
    for eps in (0.5, 2.0, 5.0):
        ob = OneBitParams(eps)
        assert ob.prob_one(1.0) == pytest.approx(math.exp(eps) / (math.exp(eps) + 1))
        assert ob.prob_one(0.0) == pytest.approx(1 / (math.exp(eps) + 1))
        for x in (0, 1):
            np.testing.assert_allclose(output_distribution("one_bit", eps, x), output_distribution("rr", eps, x))


@pytest.mark.parametrize("eps,delta,adj,feat", [(4, 0.5, 2, 2), (8, 0.3, 5.6, 2.4)])
def test_split_examples(eps, delta, adj, feat):
    b = split_budget(eps, delta)
    assert (b.epsilon_adj, b.epsilon_feat) == pytest.approx((adj, feat))


def test_delta_zero_makes_features_uniform():
    with pytest.warns(DegenerateBudgetWarning):
        b = split_budget(4.0, 0.0)
    assert (b.epsilon_adj, b.epsilon_feat) == (4.0, 0.0)
    assert OneBitParams(b.epsilon_feat).prob_one(0.9) == 0.5


def test_ratio_examples():
    assert max_likelihood_ratio("rr", math.log(3)) == pytest.approx(3.0, rel=1e-12)
    assert max_likelihood_ratio("one_bit", 2.0) == pytest.approx(math.exp(2.0), rel=1e-12)
    assert max_likelihood_ratio("rr", 1e-9) == pytest.approx(1.0)
