"""MM solver for the gate subproblem.

At the expansion point ``w_s`` the log-normalizer is bounded below with the
tangent of ``-log(1 + t)`` and the arithmetic-geometric mean inequality, which
gives a surrogate that touches the gate objective at ``w_s``, lies below it
elsewhere and separates over coordinates. Each sweep maximizes that surrogate
exactly, one coordinate at a time.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as kern
from .model import Dataset, Hyperparams
from .objectives import q_gating


@dataclass
class MMState:
    W: np.ndarray  # expansion point, (K-1, p+1)
    C: np.ndarray  # 1 + sum_k exp(score_ik), (n,)
    pis: np.ndarray  # gate probabilities at W for k < K, (n, K-1)
    clamped: bool = False


def _x1t(data: Dataset) -> np.ndarray:
    return np.ascontiguousarray(np.vstack([np.ones(data.n), data.X.T]))


def _gamma_vec(hp: Hyperparams, K1: int) -> np.ndarray:
    return np.ascontiguousarray(np.broadcast_to(np.asarray(hp.gamma, float), (K1,)))


def build_state(W: np.ndarray, data: Dataset) -> MMState:
    W = np.atleast_2d(np.asarray(W, dtype=float))
    S = np.ascontiguousarray(W @ _x1t(data))
    logc = kern.gate_log_normalizer(S)
    pis = kern.mm_state(S).T
    return MMState(W.copy(), np.exp(logc), pis)


def mm_minorizer_value(W: np.ndarray, state: MMState, tau: np.ndarray, data: Dataset,
                       hp: Hyperparams) -> float:
    """Surrogate G(W | W_s), penalties included, for the state's expansion point."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    K1, P1 = W.shape
    X1 = np.column_stack([np.ones(data.n), data.X])
    D = W - state.W
    args = P1 * X1[:, None, :] * D[None, :, :]  # (n, K-1, p+1)
    clamped = bool(np.any(np.abs(args) > kern.EXP_CLAMP))
    state.clamped = state.clamped or clamped
    expo = np.exp(np.clip(args, -kern.EXP_CLAMP, kern.EXP_CLAMP)).sum(axis=2)
    lin = float(np.sum(tau[:, :K1] * (W[:, 0] + data.X @ W[:, 1:].T)))
    g1 = float(np.sum(-(state.pis / P1) * expo)
               + np.sum(-np.log(state.C) + 1.0 - 1.0 / state.C))
    w = W[:, 1:]
    gam = _gamma_vec(hp, K1)
    return lin + g1 - float(np.sum(gam * np.abs(w).sum(axis=1))) - 0.5 * hp.rho * float(np.sum(w * w))


def mm_update_intercept(k: int, state: MMState, tau: np.ndarray) -> float:
    """Closed-form surrogate maximizer for the intercept of gate k (0-based).

    Returns the current value unchanged when either mass is zero.
    """
    P1 = state.W.shape[1]
    st = float(np.sum(tau[:, k]))
    sp = float(np.sum(state.pis[:, k]))
    if st <= 0.0 or sp <= 0.0:
        return float(state.W[k, 0])
    return float(state.W[k, 0] + np.log(st / sp) / P1)


def mm_update_weight(k: int, j: int, state: MMState, tau: np.ndarray, data: Dataset,
                     hp: Hyperparams) -> float:
    """Surrogate maximizer for gate weight (k, j); j is 1-based over predictors.

    Returns exactly 0.0 when the value at zero beats both signed pieces.
    """
    P1 = state.W.shape[1]
    x = np.ascontiguousarray(data.X[:, j - 1])
    a = float(tau[:, k] @ x)
    gam = float(_gamma_vec(hp, state.W.shape[0])[k])
    empty = np.empty(0)
    w, _ = kern.coord_max(kern.MM_KIND, float(state.W[k, j]), gam, True, float(state.W[k, j]),
                          a, empty, empty, x, np.ascontiguousarray(state.pis[:, k]),
                          float(hp.rho), float(P1))
    return float(w)


def mm_gating_step(W: np.ndarray, tau: np.ndarray, data: Dataset, hp: Hyperparams,
                   sweeps: int = 10, tol: float = 1e-10) -> tuple[np.ndarray, dict]:
    """Run up to ``sweeps`` MM sweeps from W; the gate objective never decreases."""
    W = np.array(W, dtype=float, ndmin=2)
    info = {"sweeps": 0, "skipped_intercepts": 0, "nr_failures": 0, "clamps": 0, "rejected": 0}
    K1 = W.shape[0]
    if K1 == 0 or sweeps <= 0:
        return W, info
    X1T = _x1t(data)
    tauT = np.ascontiguousarray(tau.T)
    gam = _gamma_vec(hp, K1)
    q_cur = q_gating(W, tau, data, hp)
    for _ in range(sweeps):
        S = np.ascontiguousarray(W @ X1T)
        Wn, n_skip, n_fail, n_clamp = kern.mm_sweep(X1T, tauT, W, S, gam, float(hp.rho))
        info["sweeps"] += 1
        info["skipped_intercepts"] += n_skip
        info["nr_failures"] += n_fail
        info["clamps"] += n_clamp
        q_new = q_gating(Wn, tau, data, hp)
        if q_new < q_cur:
            # only reachable through clamped exponentials or rounding at a fixed point
            info["rejected"] += 1
            break
        delta = float(np.max(np.abs(Wn - W)))
        W, q_cur = Wn, q_new
        if delta <= tol:
            break
    return W, info
