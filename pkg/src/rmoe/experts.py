"""Expert M-step: weighted-Lasso coordinate descent, intercepts and noise scales."""
from __future__ import annotations

import numpy as np

from . import _kernels as kern
from .model import Dataset, Hyperparams, MoEParams


def soft_threshold(u: float, t: float) -> float:
    """sign(u) * max(|u| - t, 0), with an exact 0.0 inside the dead zone."""
    if t < 0:
        raise ValueError("threshold must be non-negative")
    return float(kern.soft_threshold(float(u), float(t)))


def _resid(k: int, params: MoEParams, data: Dataset) -> np.ndarray:
    return data.y - params.expert_intercepts[k] - data.X @ params.expert_weights[k]


def update_beta_coord(k: int, j: int, params: MoEParams, tau: np.ndarray, data: Dataset,
                      hp: Hyperparams) -> float:
    """Soft-threshold update of expert weight (k, j), 0-based j, at threshold lam_k * sigma_k^2."""
    x = data.X[:, j]
    t = tau[:, k]
    den = float(np.sum(t * x * x))
    if den <= 0:
        return float(params.expert_weights[k, j])
    partial = _resid(k, params, data) + x * params.expert_weights[k, j]
    sig2 = params.sigma_vector()[k] ** 2
    thr = hp.lam_vector()[k] * sig2
    return soft_threshold(float(np.sum(t * partial * x)), thr) / den


def update_beta_intercept(k: int, params: MoEParams, tau: np.ndarray, data: Dataset) -> float:
    t = tau[:, k]
    mass = float(t.sum())
    if mass <= 0:
        return float(params.expert_intercepts[k])
    return float(np.sum(t * (data.y - data.X @ params.expert_weights[k])) / mass)


def update_sigma(params: MoEParams, tau: np.ndarray, data: Dataset, sigma_floor: float = 0.0,
                 shared: bool | None = None) -> tuple[np.ndarray, dict]:
    """Weighted residual variance per component, or pooled when ``shared``.

    Components with responsibility mass below K*1e-8 keep their previous scale.
    Returns the new sigma vector and counts of floor hits / skipped components.
    """
    shared = params.shared_sigma if shared is None else shared
    K = params.K
    R = data.y[:, None] - (params.expert_intercepts + data.X @ params.expert_weights.T)
    ss = np.sum(tau * R * R, axis=0)
    mass = tau.sum(axis=0)
    info = {"floor_hits": 0, "empty": 0}
    if shared:
        var = float(ss.sum() / mass.sum())
        if var < sigma_floor ** 2:
            var = sigma_floor ** 2
            info["floor_hits"] += 1
        return np.array([np.sqrt(var)]), info
    old = params.sigma_vector()
    out = old.copy()
    for k in range(K):
        if mass[k] < K * 1e-8:
            info["empty"] += 1
            continue
        var = ss[k] / mass[k]
        if var < sigma_floor ** 2:
            var = sigma_floor ** 2
            info["floor_hits"] += 1
        out[k] = np.sqrt(var)
    return out, info


def experts_beta_step(params: MoEParams, tau: np.ndarray, data: Dataset, hp: Hyperparams,
                      sweeps: int = 10, tol: float = 1e-10) -> tuple[np.ndarray, dict]:
    """Coordinate sweeps over all expert coefficients with sigma frozen; returns B (K, p+1)."""
    B = np.ascontiguousarray(params.expert_matrix())
    sig2 = params.sigma_vector() ** 2
    n_skip, n_empty = kern.expert_cd(
        np.ascontiguousarray(data.X.T), data.y, np.ascontiguousarray(tau.T), B,
        np.ascontiguousarray(sig2), np.ascontiguousarray(hp.lam_vector()), int(sweeps), tol)
    return B, {"skipped": int(n_skip), "empty": int(n_empty)}


def weighted_least_squares(data: Dataset, weights: np.ndarray) -> np.ndarray:
    """Unpenalized weighted regression coefficients (intercept first)."""
    X1 = data.design()
    sw = np.sqrt(np.maximum(weights, 0.0))
    coef, *_ = np.linalg.lstsq(X1 * sw[:, None], data.y * sw, rcond=None)
    return coef
