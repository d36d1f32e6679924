"""M-step objectives: the gate and expert parts of the expected penalized complete-data log-likelihood."""
from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from .model import LOG_2PI, ContractError, Dataset, Hyperparams


def _gamma_vec(hp: Hyperparams, K1: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(hp.gamma, dtype=float), (K1,))


def gate_smooth_value(W: np.ndarray, tau: np.ndarray, X: np.ndarray) -> float:
    """sum_i sum_{k<K} tau_ik s_ik - sum_i log(1 + sum_{k<K} exp(s_ik)), s = W applied to (1, x)."""
    W = np.atleast_2d(W)
    K1 = W.shape[0]
    S = W[:, 0] + X @ W[:, 1:].T
    lse = logsumexp(np.column_stack([S, np.zeros(X.shape[0])]), axis=1)
    return float(np.sum(tau[:, :K1] * S) - np.sum(lse))


def gate_smooth_grad(W: np.ndarray, tau: np.ndarray, X: np.ndarray, rho: float = 0.0) -> np.ndarray:
    """Gradient of the smooth gate objective (including the ridge term) with respect to W."""
    W = np.atleast_2d(W)
    K1 = W.shape[0]
    S = np.column_stack([W[:, 0] + X @ W[:, 1:].T, np.zeros(X.shape[0])])
    pi = np.exp(S - logsumexp(S, axis=1, keepdims=True))[:, :K1]
    X1 = np.column_stack([np.ones(X.shape[0]), X])
    G = (tau[:, :K1] - pi).T @ X1
    G[:, 1:] -= rho * W[:, 1:]
    return G


def q_gating(W: np.ndarray, tau: np.ndarray, data: Dataset, hp: Hyperparams) -> float:
    """Gate M-step objective: multinomial log-likelihood in tau minus the elastic-net penalty."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    K1 = W.shape[0]
    if K1 == 0:
        return 0.0
    if W.shape[1] != data.p + 1 or tau.shape[0] != data.n:
        raise ContractError("gate parameter or responsibility shape does not match data")
    gam = _gamma_vec(hp, K1)
    w = W[:, 1:]
    return (gate_smooth_value(W, tau, data.X)
            - float(np.sum(gam * np.abs(w).sum(axis=1)))
            - 0.5 * hp.rho * float(np.sum(w * w)))


def q_experts(B: np.ndarray, sigmas: np.ndarray, tau: np.ndarray, data: Dataset,
              hp: Hyperparams, sigma_floor: float = 0.0) -> float:
    """Expert M-step objective: tau-weighted Gaussian log-densities minus the expert Lasso."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    K = B.shape[0]
    sig = np.broadcast_to(np.asarray(sigmas, dtype=float), (K,))
    if np.any(sig < sigma_floor) or np.any(sig <= 0):
        raise ContractError("sigma below floor")
    resid = data.y[:, None] - (B[:, 0] + data.X @ B[:, 1:].T)
    logdens = -0.5 * LOG_2PI - np.log(sig) - 0.5 * (resid / sig) ** 2
    lam = np.broadcast_to(np.asarray(hp.lam, dtype=float), (K,))
    return float(np.sum(tau * logdens) - np.sum(lam * np.abs(B[:, 1:]).sum(axis=1)))
