"""Label-switching alignment, sparsity recovery, clustering and prediction metrics."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import ContractError, MoEParams


def permute_components(params: MoEParams, perm: Sequence[int]) -> MoEParams:
    """Reorder components so new component k is old component perm[k].

    Gate rows are re-referenced to the new last component, which keeps the
    likelihood unchanged. The gate penalty is not invariant under
    re-referencing, so the penalized objective (and the zero pattern of the
    gates) can change when the reference component moves.
    """
    perm = np.asarray(perm, dtype=int)
    K = params.K
    if sorted(perm.tolist()) != list(range(K)):
        raise ContractError(f"{perm.tolist()} is not a permutation of 0..{K - 1}")
    G = np.vstack([params.gate_matrix(), np.zeros(params.p + 1)])[perm]
    ref = perm[-1]
    if ref != K - 1:
        G = G - G[-1]
    sig = params.sigmas if params.shared_sigma else params.sigmas[perm]
    return MoEParams(G[:-1, 0], G[:-1, 1:], params.expert_intercepts[perm],
                     params.expert_weights[perm], sig)


def best_permutation(est: MoEParams, ref: MoEParams) -> tuple[int, ...]:
    """Permutation minimizing the summed squared distance between expert coefficient rows."""
    if est.K != ref.K or est.p != ref.p:
        raise ContractError(f"cannot align K={est.K}, p={est.p} with K={ref.K}, p={ref.p}")
    E, R = est.expert_matrix(), ref.expert_matrix()
    best, best_cost = None, np.inf
    for perm in itertools.permutations(range(est.K)):
        cost = float(np.sum((E[list(perm)] - R) ** 2))
        if cost < best_cost:
            best, best_cost = perm, cost
    return best


def align_components(est: MoEParams, ref: MoEParams) -> MoEParams:
    perm = best_permutation(est, ref)
    if perm == tuple(range(est.K)):
        return est.copy()
    return permute_components(est, perm)


@dataclass
class SparsityScore:
    sensitivity: Optional[float]  # fraction of true zeros estimated as exactly zero
    specificity: Optional[float]  # fraction of true nonzeros estimated as nonzero


def _score(est: np.ndarray, truth: np.ndarray) -> SparsityScore:
    tz = truth == 0
    nz = ~tz
    s1 = float(np.mean(est[tz] == 0)) if tz.any() else None
    s2 = float(np.mean(est[nz] != 0)) if nz.any() else None
    return SparsityScore(s1, s2)


def sensitivity_specificity(est: MoEParams, truth: MoEParams) -> dict[str, SparsityScore]:
    """Per-block scores over penalized coefficients (no intercepts), keyed 'expert1', ..., 'gate1', ..."""
    if est.K != truth.K or est.p != truth.p:
        raise ContractError("parameter shapes differ")
    out = {}
    for k in range(est.K):
        out[f"expert{k + 1}"] = _score(est.expert_weights[k], truth.expert_weights[k])
    for k in range(est.K - 1):
        out[f"gate{k + 1}"] = _score(est.gate_weights[k], truth.gate_weights[k])
    return out


def _contingency(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ContractError("label vectors differ in length")
    ua, ia = np.unique(a, return_inverse=True)
    ub, ib = np.unique(b, return_inverse=True)
    M = np.zeros((ua.size, ub.size), dtype=np.int64)
    np.add.at(M, (ia, ib), 1)
    return M


def correct_classification_rate(est_labels, true_labels) -> float:
    """Best match fraction over one-to-one relabelings of the estimated clusters."""
    M = _contingency(est_labels, true_labels)
    r, c = linear_sum_assignment(-M)
    return float(M[r, c].sum() / M.sum())


def _comb2(counts) -> int:
    return sum(int(c) * (int(c) - 1) // 2 for c in np.ravel(counts))


def adjusted_rand_index(a, b) -> float:
    """Pair-counting ARI; integer arithmetic up to one final division."""
    M = _contingency(a, b)
    pairs = _comb2([M.sum()])
    sum_ij = _comb2(M)
    sum_a = _comb2(M.sum(axis=1))
    sum_b = _comb2(M.sum(axis=0))
    # (index - expected) / (max - expected), scaled through by 2 * pairs
    num = 2 * (sum_ij * pairs - sum_a * sum_b)
    den = (sum_a + sum_b) * pairs - 2 * sum_a * sum_b
    if den == 0:
        # both partitions trivial (one cluster, or all singletons)
        return 1.0 if 2 * sum_ij == sum_a + sum_b else 0.0
    return num / den


def flatten_params(params: MoEParams) -> tuple[np.ndarray, list[str]]:
    """Parameter vector in reporting order: experts (intercept first), gates, sigmas."""
    vals, names = [], []
    for k in range(params.K):
        vals.append(params.expert_matrix()[k])
        names += [f"beta{k + 1}_{j}" for j in range(params.p + 1)]
    for k in range(params.K - 1):
        vals.append(params.gate_matrix()[k])
        names += [f"w{k + 1}_{j}" for j in range(params.p + 1)]
    vals.append(params.sigmas)
    names += ["sigma"] if params.shared_sigma else [f"sigma{k + 1}" for k in range(params.K)]
    return np.concatenate(vals), names


@dataclass
class CoefficientErrors:
    names: list
    truth: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    mse: np.ndarray
    mse_sd: np.ndarray


def coefficient_errors(fits: Sequence[MoEParams], truth: MoEParams) -> CoefficientErrors:
    """Across-replicate mean and sd of each estimate, and the mean (and sd) of squared errors.

    ``fits`` should already be aligned to ``truth``. sd uses ddof=1 when there
    are at least two replicates.
    """
    t, names = flatten_params(truth)
    rows = []
    for f in fits:
        if f.shared_sigma and not truth.shared_sigma:
            f = MoEParams(f.gate_intercepts, f.gate_weights, f.expert_intercepts,
                          f.expert_weights, f.sigma_vector())
        rows.append(flatten_params(f)[0])
    E = np.array(rows)
    if E.ndim != 2 or E.shape[1] != t.shape[0]:
        raise ContractError("fits and truth use different parameter layouts")
    ddof = 1 if E.shape[0] > 1 else 0
    se = (E - t) ** 2
    return CoefficientErrors(names, t, E.mean(axis=0), E.std(axis=0, ddof=ddof),
                             se.mean(axis=0), se.std(axis=0, ddof=ddof))


@dataclass
class PredictionMetrics:
    r2: Optional[float]
    mse: float
    mse_sd: float


def prediction_metrics(y, yhat) -> PredictionMetrics:
    """Squared Pearson correlation between y and yhat, and mean/sd of squared residuals."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise ContractError("y and yhat differ in length")
    se = (y - yhat) ** 2
    r2 = None
    if np.std(y) > 0 and np.std(yhat) > 0:
        r2 = float(np.corrcoef(y, yhat)[0, 1] ** 2)
    return PredictionMetrics(r2, float(se.mean()), float(se.std()))
