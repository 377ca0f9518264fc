"""Acceptance suite.  Each test prints one ``[PASS]``/``[FAIL]`` line.

The Cora criteria are slow (minutes each) and marked ``slow``; deselect
them with ``-m "not slow"``.  Per-epsilon pipeline settings below were
picked by validation-accuracy grid search on seeds disjoint from the ones
scored here, and are then frozen.
"""

import math
import time

import numpy as np
import pytest

from hogs.collection import CollectionRound, NoisyReport, pack_bits, run_collection
from hogs.features import build_neighbor_index, weighted_aggregate
from hogs.gcn import loss_and_grads
from hogs.graph import make_dataset
from hogs.ldp import (
    OneBitParams,
    RrParams,
    flip_probability,
    max_likelihood_ratio,
    one_bit_perturb_vector,
    rr_perturb,
    split_budget,
)
from hogs.pipeline import ExperimentConfig, run_pipeline, synthesize
from hogs.topology import reconstruct_topology

import oracles
from conftest import record_acceptance
from test_gcn import numeric_grad, random_instance, rel_err

EPS_GRID = (0.5, 1.0, 2.0, 4.0, 8.0)
SEEDS = 10

# Selected by `hogs grid` (mean validation accuracy, 3 repeats, master seed 1000).
SELECTED = {
    4.0: dict(delta=0.1, tau=0.7, l=1),
    6.0: dict(delta=0.1, tau=0.5, l=2),
    8.0: dict(delta=0.3, tau=0.5, l=2),
}
# Public-feature mode at eps=5, same procedure over tau x l.
PUBLIC_5 = dict(tau=0.7, l=0)


def verdict(n, ok, detail):
    record_acceptance(f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")
    assert ok, detail


_RUNS = {}


def cached_run(ds, **kw):
    """Run the pipeline once per distinct configuration within the session."""
    kw.setdefault("repeats", SEEDS)
    cfg = ExperimentConfig(**kw)
    key = repr(sorted(cfg.to_json().items()))
    if key not in _RUNS:
        t0 = time.perf_counter()
        rep = run_pipeline(cfg, ds)
        _RUNS[key] = (rep, time.perf_counter() - t0)
    return _RUNS[key]


def test_01_mechanism_fidelity():
    trials = 1_000_000
    rng = np.random.default_rng(20240601)
    t0 = time.perf_counter()
    worst, ok = 0.0, True
    for eps in EPS_GRID:
        p = oracles.flip_prob(eps)
        flips = rr_perturb(np.zeros(trials, dtype=np.uint8), RrParams.from_epsilon(eps), rng)
        z = abs(flips.mean() - p) / math.sqrt(p * (1 - p) / trials)
        worst, ok = max(worst, z), ok and z <= 4.0
        params = OneBitParams(eps, 0.0, 1.0)
        for x in (0.0, 0.5, 1.0):
            q = oracles.one_bit_prob(x, eps, 0.0, 1.0)
            out = one_bit_perturb_vector(np.full(trials, x), params, rng)
            z = abs(out.mean() - q) / math.sqrt(q * (1 - q) / trials)
            worst, ok = max(worst, z), ok and z <= 4.0
    elapsed = time.perf_counter() - t0
    verdict(1, ok and elapsed < 10.0, f"max |z| = {worst:.2f} (limit 4), {elapsed:.1f}s (limit 10s)")


def test_02_exact_ldp_bound():
    errs = []
    for eps in EPS_GRID:
        for mech in ("rr", "one_bit"):
            errs.append(abs(max_likelihood_ratio(mech, eps) - math.exp(eps)) / math.exp(eps))
        errs.append(abs(max_likelihood_ratio("one_bit", eps, -2.0, 3.0) - math.exp(eps)) / math.exp(eps))
    worst = max(errs)
    verdict(2, worst <= 1e-12, f"max relative error {worst:.2e} (limit 1e-12)")


def _random_round(rng):
    n = int(rng.integers(2, 7))
    d = int(rng.integers(1, 5))
    upper = np.triu(rng.random((n, n)) < 0.5, 1)
    feats = rng.integers(0, 2, size=(n, d)).astype(float)
    ds = make_dataset(np.argwhere(upper), feats, np.zeros(n, dtype=int), feature_range=(0.0, 1.0))
    eps = float(rng.uniform(0.2, 6.0))
    delta = float(rng.uniform(0.1, 0.9))
    return run_collection(ds, split_budget(eps, delta), int(rng.integers(0, 2**31)))


def test_03_bayesian_oracle_equivalence():
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    topo_ok, worst_feat, worst_post = True, 0.0, 0.0
    for _ in range(200):
        rnd = _random_round(rng)
        tau = float(rng.choice([0.3, 0.5, 0.7, 0.9]))
        adj = rnd.noisy_adjacency_matrix().tolist()
        x = rnd.noisy_feature_matrix().tolist()
        p = flip_probability(rnd.budget.epsilon_adj)
        want_edges, want_post = oracles.reconstruct(adj, x, p, tau)
        topo, post = reconstruct_topology(rnd, tau)
        topo_ok &= topo.edge_set() == want_edges
        got = post.as_dict()
        topo_ok &= set(got) == {k for k, v in want_post.items() if v >= min(0.5, tau)}
        worst_post = max([worst_post] + [abs(got[k] - want_post[k]) for k in got])

        feats = weighted_aggregate(build_neighbor_index(post), np.asarray(x, dtype=float))
        worst_feat = max(worst_feat, float(np.max(np.abs(feats - oracles.aggregate(want_post, x, 1)))))
    elapsed = time.perf_counter() - t0
    ok = topo_ok and worst_feat <= 1e-12 and elapsed < 5.0
    verdict(3, ok, f"topology identical={topo_ok}, posterior diff {worst_post:.1e}, "
                   f"feature diff {worst_feat:.1e} (limit 1e-12), {elapsed:.2f}s (limit 5s)")


def test_04_posterior_worked_value():
    # Two clients, both report the edge; cosine([1,1,1,1], [1,0,0,0]) = 0.5; eps_a = ln 3.
    budget = split_budget(2.0 * math.log(3.0), 0.5)
    adj = [np.array([0, 1], dtype=np.uint8), np.array([1, 0], dtype=np.uint8)]
    feats = [np.ones(4, dtype=np.uint8), np.array([1, 0, 0, 0], dtype=np.uint8)]
    reports = tuple(NoisyReport(i, 2, 4, pack_bits(adj[i]), pack_bits(feats[i]), budget) for i in range(2))
    _, post = reconstruct_topology(CollectionRound(reports, 0, budget), 0.5)
    value = post.as_dict()[(0, 1)]
    verdict(4, value == 0.9, f"posterior = {value!r} (expected 0.9)")


@pytest.mark.slow
def test_05_no_noise_limit(cora):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(epsilon=64.0, delta=0.5, tau=0.5, l=0, repeats=1)
    topo, _ = synthesize(cora, cfg, 0)
    same = topo.edge_set() == cora.edge_set()
    rep, _ = cached_run(cora, epsilon=64.0, delta=0.5, tau=0.5, l=0)
    base, _ = cached_run(cora, variant="nonprivate")
    gap = abs(rep.mean - base.mean)
    elapsed = time.perf_counter() - t0
    verdict(5, same and gap <= 0.02 and elapsed < 300,
            f"E_hat == E: {same}; accuracy {rep.mean:.4f} vs nonprivate {base.mean:.4f} "
            f"(gap {gap * 100:.2f} pts, limit 2); {elapsed:.0f}s (limit 300s)")


def test_06_gradient_correctness():
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(50):
        model, ax, y, idx, _, wd = random_instance(1000 + seed)

        def loss():
            return loss_and_grads(model, ax, y, idx, wd)[0]

        _, g1, g2 = loss_and_grads(model, ax, y, idx, wd)
        worst = max(worst, rel_err(g1, numeric_grad(loss, model.w1, 1e-5)),
                    rel_err(g2, numeric_grad(loss, model.w2, 1e-5)))
    elapsed = time.perf_counter() - t0
    verdict(6, worst <= 1e-4 and elapsed < 30, f"max relative error {worst:.2e} (limit 1e-4), {elapsed:.1f}s")


@pytest.mark.slow
def test_07_nonprivate_anchor(cora):
    rep, elapsed = cached_run(cora, variant="nonprivate")
    verdict(7, rep.mean >= 0.80 and elapsed < 600,
            f"mean test accuracy {rep.mean:.4f} +/- {rep.std:.4f} over {SEEDS} seeds (floor 0.80), {elapsed:.0f}s")


@pytest.mark.slow
def test_08_utility_ordering(cora):
    t0 = time.perf_counter()
    lines, ok = [], True
    hogs_stats = []
    for eps, sel in SELECTED.items():
        h, _ = cached_run(cora, epsilon=eps, variant="hogs", **sel)
        r, _ = cached_run(cora, epsilon=eps, variant="no_tr", **sel)
        f, _ = cached_run(cora, epsilon=eps, variant="no_fr", **sel)
        hogs_stats.append((eps, h.mean, h.std))
        ok &= h.mean >= r.mean + 0.05
        if eps >= 6:
            ok &= h.mean >= f.mean
        lines.append(f"eps={eps:g}: hogs {h.mean:.4f}+/-{h.std:.4f} no_tr {r.mean:.4f} no_fr {f.mean:.4f}")
    for (e0, m0, s0), (e1, m1, s1) in zip(hogs_stats, hogs_stats[1:]):
        # "non-decreasing up to 1 sigma", sigma = the smaller of the two sample stds
        ok &= m1 >= m0 - min(s0, s1)
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 3600
    verdict(8, ok, "; ".join(lines) + f"; {elapsed:.0f}s")


@pytest.mark.slow
def test_09_public_features_spot_check(cora):
    rep, elapsed = cached_run(cora, epsilon=5.0, delta=0.0, public_features=True, variant="hogs", **PUBLIC_5)
    target = 0.847
    verdict(9, abs(rep.mean - target) <= 0.05 and elapsed < 1800,
            f"mean test accuracy {rep.mean:.4f} +/- {rep.std:.4f} (target 0.847 +/- 0.05), {elapsed:.0f}s")


@pytest.mark.slow
def test_10_homophily_recovery(cora):
    t0 = time.perf_counter()
    sel = SELECTED[8.0]
    h, _ = cached_run(cora, epsilon=8.0, variant="hogs", **sel)
    r, _ = cached_run(cora, epsilon=8.0, variant="no_tr", **sel)
    hh = h.to_json()["graph_stats"]["homophily"]
    hr = r.to_json()["graph_stats"]["homophily"]
    elapsed = time.perf_counter() - t0
    verdict(10, hh - hr >= 0.2 and elapsed < 600,
            f"homophily hogs {hh:.4f} vs raw noisy {hr:.4f} (gain {hh - hr:.4f}, need 0.2)")


@pytest.mark.slow
def test_11_synthesis_time(cora):
    cfg = ExperimentConfig(epsilon=8.0, variant="hogs", repeats=1, **SELECTED[8.0])
    timings = {}
    t0 = time.perf_counter()
    synthesize(cora, cfg, 0, timings)
    elapsed = time.perf_counter() - t0
    parts = ", ".join(f"{k} {v / 1000:.2f}s" for k, v in timings.items())
    verdict(11, elapsed < 60.0, f"full Cora synthesis {elapsed:.1f}s (limit 60s): {parts}")
