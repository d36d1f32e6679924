import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import naive_log_likelihood, naive_responsibilities, random_params

from rmoe.model import (
    ContractError,
    Dataset,
    Hyperparams,
    MoEParams,
    count_df,
    expert_log_density,
    gating_probs,
    hard_assign,
    log_likelihood,
    penalized_log_likelihood,
    predict,
    responsibilities,
)
from rmoe.data import benchmark_params

seeds = st.integers(0, 2**32 - 1)


def test_gating_zero_weights_uniform():
    th = MoEParams.zeros(2, 6)
    assert np.allclose(gating_probs(np.arange(6.0), th), [0.5, 0.5])
    th3 = MoEParams.zeros(3, 6)
    assert np.allclose(gating_probs(np.ones(6), th3), [1 / 3] * 3)


def test_gating_benchmark_gate_at_origin():
    pi = gating_probs(np.zeros(6), benchmark_params())
    e = math.e
    assert pi == pytest.approx([e / (1 + e), 1 / (1 + e)], abs=1e-12)
    assert pi[0] == pytest.approx(0.7311, abs=1e-4)


def test_gating_dimension_mismatch():
    with pytest.raises(ContractError):
        gating_probs(np.zeros(5), benchmark_params())


def test_gating_stable_for_huge_scores():
    th = MoEParams([800.0], [[0.0]], [0, 0], [[0], [0]], [1, 1])
    pi = gating_probs(np.array([0.0]), th)
    assert np.all(np.isfinite(pi)) and pi[0] == 1.0


def test_expert_log_density_examples():
    th = MoEParams.zeros(1, 1)
    assert expert_log_density(0.0, [0.0], 0, th) == pytest.approx(-0.5 * math.log(2 * math.pi))
    assert expert_log_density(1.0, [0.0], 0, th) == pytest.approx(-0.5 * math.log(2 * math.pi) - 0.5)
    th2 = MoEParams([], np.zeros((0, 2)), [0.0], [[1.0, 0.5]], [2.0])
    want = -0.5 * math.log(2 * math.pi * 4) - (2 - 1.5) ** 2 / 8
    assert expert_log_density(2.0, [1.0, 1.0], 0, th2) == pytest.approx(want, abs=1e-14)
    with pytest.raises(ContractError):
        expert_log_density(0.0, [0.0], 1, th)


def test_log_likelihood_single_component(rng):
    th = random_params(rng, 1, 2)
    d = Dataset(rng.standard_normal((10, 2)), rng.standard_normal(10))
    mu = th.expert_intercepts[0] + d.X @ th.expert_weights[0]
    s = th.sigmas[0]
    want = np.sum(-0.5 * np.log(2 * np.pi * s * s) - (d.y - mu) ** 2 / (2 * s * s))
    assert log_likelihood(d, th) == pytest.approx(want, rel=1e-13)


def test_log_likelihood_equal_experts_single_obs():
    th = MoEParams([0.3], [[1.0]], [0.5, 0.5], [[2.0], [2.0]], [1.5, 1.5])
    d = Dataset([[1.0]], [2.0])
    want = -0.5 * math.log(2 * math.pi * 1.5 ** 2) - (2 - 2.5) ** 2 / (2 * 1.5 ** 2)
    assert log_likelihood(d, th) == pytest.approx(want, abs=1e-13)


@given(seeds)
def test_log_likelihood_matches_naive(seed):
    rng = np.random.default_rng(seed)
    K = int(rng.integers(1, 4))
    th = random_params(rng, K, 2)
    d = Dataset(rng.standard_normal((5, 2)), rng.standard_normal(5))
    naive = naive_log_likelihood(d, th)
    assert np.isfinite(naive)
    assert log_likelihood(d, th) == pytest.approx(naive, rel=1e-9)


def test_penalized_examples(rng):
    th = MoEParams([0.2], [[0.0, 0.0]], [0, 0], [[1.0, -2.0], [0.0, 0.0]], [1, 1])
    d = Dataset(rng.standard_normal((6, 2)), rng.standard_normal(6))
    L = log_likelihood(d, th)
    assert penalized_log_likelihood(d, th, Hyperparams(lam=1.0, K=2)) == pytest.approx(L - 3.0, abs=1e-12)
    zero = MoEParams.zeros(2, 2)
    assert penalized_log_likelihood(d, zero, Hyperparams(lam=5, gamma=5, rho=5, K=2)) == log_likelihood(d, zero)


@given(seeds)
def test_unpenalized_equals_loglik(seed):
    rng = np.random.default_rng(seed)
    th = random_params(rng, 3, 2)
    d = Dataset(rng.standard_normal((8, 2)), rng.standard_normal(8))
    assert penalized_log_likelihood(d, th, Hyperparams(K=3)) == log_likelihood(d, th)


def test_penalty_ignores_intercepts_and_sigma(rng):
    d = Dataset(rng.standard_normal((6, 2)), rng.standard_normal(6))
    th = MoEParams([3.0], [[0, 0]], [5.0, -4.0], [[0, 0], [0, 0]], [2.0, 0.3])
    hp = Hyperparams(lam=7, gamma=7, rho=7, K=2)
    assert penalized_log_likelihood(d, th, hp) == log_likelihood(d, th)
    th2 = MoEParams([0.0], [[1.0, -2.0]], [0, 0], [[0, 0], [0, 0]], [1, 1])
    want = log_likelihood(d, th2) - 7 * 3 - 3.5 * 5
    assert penalized_log_likelihood(d, th2, hp) == pytest.approx(want, abs=1e-12)


def test_responsibilities_examples(rng):
    d = Dataset(rng.standard_normal((7, 2)), rng.standard_normal(7))
    assert np.all(responsibilities(d, random_params(rng, 1, 2)) == 1.0)
    th = MoEParams([0.0], [[0, 0]], [0.4, 0.4], [[1, 1], [1, 1]], [1, 1])
    assert np.allclose(responsibilities(d, th), 0.5, atol=1e-15)
    d3 = Dataset([[0.1], [-1.0], [2.0]], [0.5, -0.3, 1.7])
    th3 = random_params(rng, 2, 1)
    assert np.allclose(responsibilities(d3, th3), naive_responsibilities(d3, th3), atol=1e-14)


@given(seeds)
def test_responsibility_rows_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    K = int(rng.integers(1, 5))
    th = random_params(rng, K, 3, scale=3.0)
    d = Dataset(3 * rng.standard_normal((25, 3)), 3 * rng.standard_normal(25))
    tau = responsibilities(d, th)
    assert np.all((tau >= 0) & (tau <= 1))
    assert np.max(np.abs(tau.sum(axis=1) - 1)) <= 1e-12


@given(seeds)
def test_gating_probs_simplex(seed):
    rng = np.random.default_rng(seed)
    K = int(rng.integers(1, 5))
    th = random_params(rng, K, 3, scale=5.0)
    pi = gating_probs(rng.standard_normal((20, 3)) * 5, th)
    assert np.all(pi >= 0)
    assert np.max(np.abs(pi.sum(axis=1) - 1)) <= 1e-12


@given(seeds)
def test_k2_component_swap_negates_gate(seed):
    rng = np.random.default_rng(seed)
    th = random_params(rng, 2, 3)
    sw = MoEParams(-th.gate_intercepts, -th.gate_weights, th.expert_intercepts[::-1],
                   th.expert_weights[::-1], th.sigmas[::-1])
    X = rng.standard_normal((10, 3))
    assert np.allclose(gating_probs(X, th), gating_probs(X, sw)[:, ::-1], atol=1e-14)


def test_predict_examples(rng):
    th1 = random_params(rng, 1, 3)
    x = rng.standard_normal(3)
    assert predict(x, th1) == pytest.approx(th1.expert_intercepts[0] + x @ th1.expert_weights[0], abs=1e-14)
    th = MoEParams([0.0], [[0, 0, 0]], [2.0, 5.0], np.zeros((2, 3)), [1, 1])
    assert predict(x, th) == pytest.approx(3.5, abs=1e-14)
    th2 = random_params(rng, 3, 3)
    pi = gating_probs(x, th2)
    want = sum(pi[k] * (th2.expert_intercepts[k] + x @ th2.expert_weights[k]) for k in range(3))
    assert predict(x, th2) == pytest.approx(want, abs=1e-13)


@given(seeds, st.floats(-50, 50))
def test_predict_shift_equivariant(seed, c):
    rng = np.random.default_rng(seed)
    th = random_params(rng, 3, 2)
    X = rng.standard_normal((6, 2))
    sh = MoEParams(th.gate_intercepts, th.gate_weights, th.expert_intercepts + c, th.expert_weights, th.sigmas)
    assert np.allclose(predict(X, sh), predict(X, th) + c, atol=1e-11)


def test_hard_assign_examples():
    assert hard_assign(np.array([[0.9, 0.1]])).tolist() == [1]
    assert hard_assign(np.array([[0.5, 0.5]])).tolist() == [1]
    assert hard_assign(np.array([[0.2, 0.8], [0.7, 0.3]])).tolist() == [2, 1]


def test_params_contract():
    with pytest.raises(ContractError):
        MoEParams([0.0], [[0.0]], [0, 0], [[0], [0]], [1.0, -1.0])
    with pytest.raises(ContractError):
        MoEParams([0.0], [[np.nan]], [0, 0], [[0], [0]], [1.0, 1.0])
    with pytest.raises(ContractError):
        MoEParams([0.0], [[0.0]], [0, 0], [[0], [0]], [1.0, 1.0, 1.0])
    with pytest.raises(ContractError):
        Hyperparams(lam=-1)
    with pytest.raises(ContractError):
        Dataset(np.zeros((3, 2)), np.zeros(4))


def test_count_df_dense_and_sparse():
    th = benchmark_params()
    assert count_df(th) == 2 + 1 + 5 + 2 + 2
    dense = MoEParams([1.0], [[1.0] * 6], [1, 1], np.ones((2, 6)), [1, 1])
    assert count_df(dense) == (2 - 1) * 7 + 2 * 7 + 2
