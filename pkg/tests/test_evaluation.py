import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import pair_ari, random_params
from sklearn.metrics import adjusted_rand_score

from rmoe.data import benchmark_params
from rmoe.evaluation import (
    adjusted_rand_index,
    align_components,
    best_permutation,
    coefficient_errors,
    correct_classification_rate,
    permute_components,
    prediction_metrics,
    sensitivity_specificity,
)
from rmoe.model import ContractError, Dataset, MoEParams, log_likelihood

seeds = st.integers(0, 2**32 - 1)
labels = st.lists(st.integers(1, 4), min_size=2, max_size=40)


def _dyadic_params(rng, K, p):
    """Entries on a 1/8 grid so re-referencing differences are exact."""
    d = lambda *s: rng.integers(-16, 17, size=s) / 8.0
    return MoEParams(d(K - 1), d(K - 1, p), d(K), d(K, p), rng.integers(4, 17, size=K) / 8.0)


def _eq(a, b):
    return all(np.array_equal(x, y) for x, y in
               [(a.gate_matrix(), b.gate_matrix()), (a.expert_matrix(), b.expert_matrix()), (a.sigmas, b.sigmas)])


def test_align_identity():
    th = benchmark_params()
    assert best_permutation(th, th) == (0, 1)
    assert _eq(align_components(th, th), th)


def test_align_k2_swap_negates_gate():
    th = benchmark_params()
    sw = permute_components(th, [1, 0])
    assert np.array_equal(sw.gate_matrix(), -th.gate_matrix())
    back = align_components(sw, th)
    assert _eq(back, th)


@given(seeds, st.integers(2, 4))
def test_align_round_trip(seed, K):
    rng = np.random.default_rng(seed)
    th = _dyadic_params(rng, K, 3)
    if len({tuple(r) for r in th.expert_matrix()}) < K:
        return
    perm = rng.permutation(K)
    assert _eq(align_components(permute_components(th, perm), th), th)


@given(seeds, st.integers(2, 4))
def test_permutation_preserves_loglik(seed, K):
    rng = np.random.default_rng(seed)
    th = random_params(rng, K, 2)
    d = Dataset(rng.standard_normal((20, 2)), rng.standard_normal(20))
    for perm in itertools.permutations(range(K)):
        assert log_likelihood(d, permute_components(th, perm)) == pytest.approx(log_likelihood(d, th), rel=1e-12)


def test_align_errors():
    with pytest.raises(ContractError):
        align_components(MoEParams.zeros(2, 3), MoEParams.zeros(3, 3))
    with pytest.raises(ContractError):
        permute_components(MoEParams.zeros(2, 3), [0, 0])


def test_sparsity_examples():
    truth = benchmark_params()
    sc = sensitivity_specificity(truth, truth)
    assert all(v.sensitivity == 1.0 and v.specificity == 1.0 for v in sc.values())
    est = MoEParams(truth.gate_intercepts, truth.gate_weights, truth.expert_intercepts,
                    [[0, 1.4, 0.1, 0, 0, 0.9], truth.expert_weights[1]], truth.sigmas)
    s = sensitivity_specificity(est, truth)["expert1"]
    assert (s.sensitivity, s.specificity) == (0.75, 1.0)
    dense = MoEParams(truth.gate_intercepts, np.ones((1, 6)), truth.expert_intercepts, np.ones((2, 6)), truth.sigmas)
    for v in sensitivity_specificity(dense, truth).values():
        assert (v.sensitivity, v.specificity) == (0.0, 1.0)
    tiny = MoEParams(truth.gate_intercepts, truth.gate_weights + 1e-300 * (truth.gate_weights == 0),
                     truth.expert_intercepts, truth.expert_weights, truth.sigmas)
    assert sensitivity_specificity(tiny, truth)["gate1"].sensitivity == 0.0


def test_sparsity_not_applicable():
    truth = MoEParams([0.0], [[1.0, 2.0]], [0, 0], [[0.0, 0.0], [1.0, 1.0]], [1, 1])
    s = sensitivity_specificity(truth, truth)
    assert s["expert1"].specificity is None and s["expert2"].sensitivity is None


def test_crate_examples():
    assert correct_classification_rate([1, 2, 1, 2], [1, 2, 1, 2]) == 1.0
    assert correct_classification_rate([1, 2, 1, 2], [2, 1, 2, 1]) == 1.0
    assert correct_classification_rate([1, 1, 2, 2], [1, 2, 2, 2]) == 0.75


def test_ari_examples():
    assert adjusted_rand_index([1, 1, 2, 2], [1, 1, 2, 2]) == 1.0
    assert adjusted_rand_index([1, 1, 2, 2], [1, 2, 1, 2]) == -0.5
    assert adjusted_rand_index([1, 1, 1], [1, 1, 1]) == 1.0


@given(labels, st.data())
def test_ari_oracles_and_symmetry(a, data):
    b = data.draw(st.lists(st.integers(1, 4), min_size=len(a), max_size=len(a)))
    v = adjusted_rand_index(a, b)
    assert v == pytest.approx(adjusted_rand_score(a, b), abs=1e-12)
    assert v == pytest.approx(pair_ari(a, b), abs=1e-12)
    assert v == adjusted_rand_index(b, a)


@given(labels, st.data())
def test_relabel_invariance(a, data):
    b = data.draw(st.lists(st.integers(1, 4), min_size=len(a), max_size=len(a)))
    perm = data.draw(st.permutations([1, 2, 3, 4]))
    pa = [perm[x - 1] for x in a]
    assert adjusted_rand_index(pa, b) == pytest.approx(adjusted_rand_index(a, b), abs=1e-12)
    assert correct_classification_rate(pa, b) == correct_classification_rate(a, b)
    # brute-force oracle for the classification rate
    ua, ub = sorted(set(a)), sorted(set(b))
    best = 0
    for sel in itertools.permutations(ub + [None] * len(ua), len(ua)):
        m = dict(zip(ua, sel))
        best = max(best, sum(1 for x, y in zip(a, b) if m[x] == y))
    assert correct_classification_rate(a, b) == best / len(a)


def test_coefficient_errors_examples():
    truth = benchmark_params()
    ce = coefficient_errors([truth, truth.copy()], truth)
    assert np.all(ce.mse == 0) and np.all(ce.sd == 0)
    e = 0.25
    up = MoEParams(truth.gate_intercepts + e, truth.gate_weights + e, truth.expert_intercepts + e,
                   truth.expert_weights + e, truth.sigmas + e)
    dn = MoEParams(truth.gate_intercepts - e, truth.gate_weights - e, truth.expert_intercepts - e,
                   truth.expert_weights - e, truth.sigmas - e)
    ce = coefficient_errors([up, dn], truth)
    assert np.allclose(ce.mean, ce.truth, atol=1e-15)
    assert np.allclose(ce.mse, e * e, atol=1e-15)
    assert ce.names[0] == "beta1_0" and ce.names[-1] == "sigma2"


def test_prediction_metrics():
    rng = np.random.default_rng(0)
    y = rng.standard_normal(50)
    m = prediction_metrics(y, y)
    assert m.r2 == pytest.approx(1.0) and m.mse == 0.0
    assert prediction_metrics(y, np.full(50, y.mean())).r2 is None
    yh = y + rng.standard_normal(50)
    m = prediction_metrics(y, yh)
    yc, hc = y - y.mean(), yh - yh.mean()
    assert m.r2 == pytest.approx((yc @ hc) ** 2 / ((yc @ yc) * (hc @ hc)), rel=1e-12)
    assert m.mse == pytest.approx(np.mean((y - yh) ** 2))
    assert m.mse_sd == pytest.approx(np.std((y - yh) ** 2))
    with pytest.raises(ContractError):
        prediction_metrics(y, y[:-1])
