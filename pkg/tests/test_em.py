import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import grid_argmax, random_params, random_problem

import rmoe.em as em
from rmoe.data import benchmark_simulation_spec, simulate
from rmoe.em import FitError, FitOptions, fit, initialize, q_experts, q_gating, run_em
from rmoe.experts import experts_beta_step
from rmoe.model import ContractError, Dataset, Hyperparams, MoEParams, NumericError, log_likelihood, responsibilities

seeds = st.integers(0, 2**32 - 1)


def test_q_gating_zero_weights():
    rng = np.random.default_rng(0)
    d, tau, _ = random_problem(rng, n=17, p=2, K=2)
    assert q_gating(np.zeros((1, 3)), tau, d, Hyperparams(gamma=3, rho=2, K=2)) == pytest.approx(-17 * math.log(2))


def test_q_gating_constant_tau_intercept_is_logit():
    rng = np.random.default_rng(1)
    d, _, _ = random_problem(rng, n=30, p=2, K=2)
    c = 0.3
    tau = np.column_stack([np.full(30, c), np.full(30, 1 - c)])
    hp = Hyperparams(K=2)

    def f(ws):
        return np.array([q_gating(np.array([[w, 0.0, 0.0]]), tau, d, hp) for w in ws])

    w_star = grid_argmax(f, -5, 5, points=201, levels=8)
    assert w_star == pytest.approx(math.log(c / (1 - c)), abs=1e-6)


@given(seeds, st.floats(0.01, 10))
def test_q_gating_penalty_sign(seed, gamma):
    rng = np.random.default_rng(seed)
    d, tau, W = random_problem(rng, n=10, p=2, K=3)
    base = q_gating(W, tau, d, Hyperparams(K=3))
    assert q_gating(W, tau, d, Hyperparams(gamma=gamma, K=3)) < base
    W0 = W.copy()
    W0[:, 1:] = 0
    assert q_gating(W0, tau, d, Hyperparams(gamma=gamma, K=3)) == q_gating(W0, tau, d, Hyperparams(K=3))


def test_q_experts_examples():
    rng = np.random.default_rng(2)
    d = Dataset(rng.standard_normal((12, 2)), rng.standard_normal(12))
    B = rng.standard_normal((1, 3))
    tau = np.ones((12, 1))
    r = d.y - B[0, 0] - d.X @ B[0, 1:]
    want = np.sum(-0.5 * np.log(2 * np.pi * 1.3 ** 2) - r ** 2 / (2 * 1.3 ** 2))
    assert q_experts(B, np.array([1.3]), tau, d, Hyperparams(K=1)) == pytest.approx(want, rel=1e-13)
    B0 = np.column_stack([rng.standard_normal(2), np.zeros((2, 2))])
    tau2 = rng.dirichlet([1, 1], size=12)
    assert q_experts(B0, np.array([1.0, 2.0]), tau2, d, Hyperparams(lam=9, K=2)) == \
        q_experts(B0, np.array([1.0, 2.0]), tau2, d, Hyperparams(K=2))
    with pytest.raises(ContractError):
        q_experts(B, np.array([1e-9]), tau, d, Hyperparams(K=1), sigma_floor=1e-6)


@given(seeds)
def test_q_experts_naive(seed):
    rng = np.random.default_rng(seed)
    K, n, p = 3, 9, 2
    d = Dataset(rng.standard_normal((n, p)), rng.standard_normal(n))
    B = rng.standard_normal((K, p + 1))
    sig = rng.uniform(0.5, 2, K)
    tau = rng.dirichlet(np.ones(K), size=n)
    lam = float(rng.uniform(0, 3))
    tot = 0.0
    for i in range(n):
        for k in range(K):
            r = d.y[i] - B[k, 0] - sum(d.X[i, j] * B[k, j + 1] for j in range(p))
            tot += tau[i, k] * (-0.5 * math.log(2 * math.pi) - math.log(sig[k]) - r * r / (2 * sig[k] ** 2))
    tot -= lam * np.abs(B[:, 1:]).sum()
    assert q_experts(B, sig, tau, d, Hyperparams(lam=lam, K=K)) == pytest.approx(tot, rel=1e-12)


def test_initialize_reproducible(bench_data):
    d, _ = bench_data
    for strat in ("random-responsibilities", "kmeans-seeded"):
        a = initialize(d, 2, strat, np.random.default_rng(7))
        b = initialize(d, 2, strat, np.random.default_rng(7))
        assert np.array_equal(a.expert_matrix(), b.expert_matrix())
        assert np.array_equal(a.sigmas, b.sigmas)
        assert np.all(a.gate_matrix() == 0.0)


def test_initialize_k1_strategies_agree(bench_data):
    d, _ = bench_data
    a = initialize(d, 1, "random-responsibilities", np.random.default_rng(0))
    b = initialize(d, 1, "kmeans-seeded", np.random.default_rng(1))
    assert np.allclose(a.expert_matrix(), b.expert_matrix(), atol=1e-12)
    assert np.allclose(a.sigmas, b.sigmas, atol=1e-12)


def test_initialize_kmeans_balanced(bench_data):
    d, _ = bench_data
    th = initialize(d, 2, "kmeans-seeded", np.random.default_rng(0))
    share = np.bincount(np.argmax(responsibilities(d, th), axis=1), minlength=2) / d.n
    assert share.min() >= 0.10


def test_initialize_degenerate_cluster_falls_back():
    rng = np.random.default_rng(3)
    d = Dataset(rng.standard_normal((6, 4)), rng.standard_normal(6))
    th = initialize(d, 3, "random-responsibilities", rng)
    assert np.all(np.isfinite(th.expert_matrix()))
    with pytest.raises(ContractError):
        initialize(d, 7, "random-responsibilities", rng)


def test_fit_k1_is_least_squares(bench_data):
    d, _ = bench_data
    res = fit(d, Hyperparams(K=1), FitOptions(n_starts=1, rel_tol=1e-14, max_em_iters=5000))
    beta, *_ = np.linalg.lstsq(d.design(), d.y, rcond=None)
    assert np.allclose(res.params.expert_matrix()[0], beta, atol=1e-8)
    r = d.y - d.design() @ beta
    assert res.params.sigmas[0] ** 2 == pytest.approx(np.mean(r * r), rel=1e-8)


def test_unpenalized_fit_beats_truth():
    rng = np.random.default_rng(11)
    truth = MoEParams([0.5], [[1.0, -1.0]], [0.0, 1.0], [[1.0, 0.5], [-1.0, 2.0]], [0.5, 0.5])
    from rmoe.data import SimulationSpec
    d, _ = simulate(SimulationSpec(20, truth, 0.0, int(rng.integers(1000))))
    res = fit(d, Hyperparams(K=2), FitOptions(n_starts=5))
    assert res.final_loglik >= log_likelihood(d, truth)
    assert res.final_objective == res.final_loglik


@pytest.mark.parametrize("solver", ["mm", "ca", "pn"])
def test_trace_monotone_and_exact_zeros(bench_data, solver):
    d, _ = bench_data
    hp = Hyperparams(lam=10, gamma=5, rho=0.1 * math.log(d.n), K=2, solver=solver)
    res = fit(d, hp, FitOptions(n_starts=2, rng_seed=3))
    tr = res.objective_trace
    assert np.all(np.diff(tr) >= -1e-8 * np.abs(tr[:-1]))
    assert tr[-1] == res.final_objective
    small = np.abs(res.params.gate_weights)
    assert not np.any((small > 0) & (small < 1e-12))
    assert not np.any((np.abs(res.params.expert_weights) > 0) & (np.abs(res.params.expert_weights) < 1e-12))
    assert res.df == (np.count_nonzero(res.params.gate_weights) + 1 +
                      np.count_nonzero(res.params.expert_weights) + 2 + 2)


def test_fit_picks_best_start(bench_data):
    d, _ = bench_data
    res = fit(d, Hyperparams(lam=3, gamma=3, rho=0.5, K=2), FitOptions(n_starts=4, rng_seed=5))
    objs = [s["objective"] for s in res.diagnostics["starts"]]
    assert res.final_objective == max(objs)
    assert res.diagnostics["starts"][res.diagnostics["start_index"]]["objective"] == res.final_objective


def test_fit_deterministic(bench_data):
    d, _ = bench_data
    hp = Hyperparams(lam=3, gamma=3, rho=0.5, K=2)
    a = fit(d, hp, FitOptions(n_starts=2, rng_seed=9))
    b = fit(d, hp, FitOptions(n_starts=2, rng_seed=9))
    assert np.array_equal(a.objective_trace, b.objective_trace)


def test_all_starts_failing_raises(bench_data, monkeypatch):
    d, _ = bench_data

    def boom(*a, **k):
        raise NumericError("forced")

    monkeypatch.setattr(em, "run_em", boom)
    with pytest.raises(FitError) as ei:
        fit(d, Hyperparams(K=2), FitOptions(n_starts=3))
    assert len(ei.value.diagnostics) == 3


def test_shared_sigma_mode(bench_data):
    d, _ = bench_data
    res = fit(d, Hyperparams(lam=5, gamma=5, rho=0.5, K=2), FitOptions(n_starts=1, sigma_mode="shared"))
    assert res.params.sigmas.shape == (1,)
    assert res.df == np.count_nonzero(res.params.gate_weights) + 1 + np.count_nonzero(res.params.expert_weights) + 2 + 1


def test_options_contract():
    with pytest.raises(ContractError):
        FitOptions(n_starts=0)
    with pytest.raises(ContractError):
        FitOptions(rel_tol=0)
    with pytest.raises(ValueError):
        FitOptions(init_strategy="nope")


@settings(max_examples=15)
@given(seeds, st.sampled_from(["mm", "ca", "pn"]))
def test_single_em_iteration_improves(seed, solver):
    rng = np.random.default_rng(seed)
    d, _ = simulate(benchmark_simulation_spec(60, int(rng.integers(1 << 30))))
    hp = Hyperparams(lam=float(rng.uniform(0, 8)), gamma=float(rng.uniform(0, 8)),
                     rho=float(rng.uniform(0, 1)), K=2, solver=solver)
    th0 = initialize(d, 2, "random-responsibilities", rng)
    _, trace, _, _ = run_em(d, hp, FitOptions(max_em_iters=3), th0)
    assert np.all(np.diff(trace) >= -1e-8 * np.abs(trace[:-1]))


@given(seeds)
def test_expert_step_improves_q_experts(seed):
    rng = np.random.default_rng(seed)
    d, tau, _ = random_problem(rng, n=30, p=3, K=2)
    th = random_params(rng, 2, 3)
    hp = Hyperparams(lam=float(rng.uniform(0, 20)), K=2)
    before = q_experts(th.expert_matrix(), th.sigmas, tau, d, hp)
    B, _ = experts_beta_step(th, tau, d, hp, sweeps=3)
    after = q_experts(B, th.sigmas, tau, d, hp)
    assert after >= before - 1e-10
