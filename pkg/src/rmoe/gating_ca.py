"""Cyclic coordinate ascent for the gate subproblem.

Works on the exact gate objective. Every coordinate is a univariate concave
problem; weights carry an l1 term and are resolved by comparing the two signed
smooth pieces with the value at zero, so a weight that was shrunk to zero can
come back in a later sweep.
"""
from __future__ import annotations

import numpy as np

from . import _kernels as kern
from .model import Dataset, Hyperparams


def _x1t(data: Dataset) -> np.ndarray:
    return np.ascontiguousarray(np.vstack([np.ones(data.n), data.X.T]))


def _gamma_vec(hp: Hyperparams, K1: int) -> np.ndarray:
    return np.ascontiguousarray(np.broadcast_to(np.asarray(hp.gamma, float), (K1,)))


def _coord_inputs(k: int, j: int, W: np.ndarray, data: Dataset):
    X1T = _x1t(data)
    S = np.ascontiguousarray(W @ X1T)
    lo = np.array([kern.log1p_sum_exp_except(S, k, i) for i in range(data.n)])
    return X1T[j].copy(), S[k].copy(), lo


def ca_coord_grad_hess(k: int, j: int, W: np.ndarray, tau: np.ndarray, data: Dataset,
                       hp: Hyperparams) -> tuple[float, float]:
    """Derivatives of the gate objective along coordinate (k, j), j = 0 for the intercept.

    For weights, the returned gradient is U(w) - gamma*sign(w) on the active
    piece; at w = 0 the smooth part U(0) is returned. The second derivative is
    -sum x^2 pi (1 - pi) - rho (no rho for the intercept).
    """
    W = np.atleast_2d(np.asarray(W, dtype=float))
    x, base, lo = _coord_inputs(k, j, W, data)
    a = float(tau[:, k] @ x)
    rho = float(hp.rho) if j > 0 else 0.0
    w = float(W[k, j])
    g, h, _, _ = kern._ghv(kern.CA_KIND, w, w, a, base, lo, x, np.empty(0), rho, 1.0)
    if j > 0 and w != 0.0:
        g -= float(_gamma_vec(hp, W.shape[0])[k]) * np.sign(w)
    return float(g), float(h)


def _update(k, j, W, tau, data, hp):
    W = np.atleast_2d(np.asarray(W, dtype=float))
    x, base, lo = _coord_inputs(k, j, W, data)
    a = float(tau[:, k] @ x)
    pen = j > 0
    gam = float(_gamma_vec(hp, W.shape[0])[k]) if pen else 0.0
    w = float(W[k, j])
    wn, _ = kern.coord_max(kern.CA_KIND, w, gam, pen, w, a, base, lo, x, np.empty(0),
                           float(hp.rho) if pen else 0.0, 1.0)
    return float(wn)


def ca_update_weight(k: int, j: int, W: np.ndarray, tau: np.ndarray, data: Dataset,
                     hp: Hyperparams) -> float:
    """Exact maximizer of the gate objective over weight (k, j), j >= 1; 0.0 when zero wins."""
    if j < 1:
        raise ValueError("weights are indexed from 1; use ca_update_intercept for j = 0")
    return _update(k, j, W, tau, data, hp)


def ca_update_intercept(k: int, W: np.ndarray, tau: np.ndarray, data: Dataset) -> float:
    return _update(k, 0, W, tau, data, Hyperparams(K=np.atleast_2d(W).shape[0] + 1))


def ca_gating_step(W: np.ndarray, tau: np.ndarray, data: Dataset, hp: Hyperparams,
                   sweeps: int = 10, tol: float = 1e-10) -> tuple[np.ndarray, dict]:
    """Cyclic sweeps over (k, then j = 0..p); stops early once no coordinate moves more than tol."""
    W = np.array(W, dtype=float, ndmin=2)
    info = {"sweeps": 0, "nr_failures": 0, "bisections": 0}
    K1 = W.shape[0]
    if K1 == 0 or sweeps <= 0:
        return W, info
    X1T = _x1t(data)
    S = np.ascontiguousarray(W @ X1T)
    done, n_fail, n_bis = kern.ca_sweeps(X1T, np.ascontiguousarray(tau.T), W, S,
                                         _gamma_vec(hp, K1), float(hp.rho), int(sweeps), tol)
    info.update(sweeps=int(done), nr_failures=int(n_fail), bisections=int(n_bis))
    return W, info

