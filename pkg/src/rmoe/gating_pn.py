"""Proximal-Newton solver for the gate subproblem.

The smooth multinomial part is replaced around the current W by a per-class
diagonal quadratic (IRLS working weights pi(1 - pi) and working responses).
The penalized quadratic is maximized by closed-form coordinate updates, and
the resulting candidate is accepted with backtracking on the true objective.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as kern
from .model import Dataset, Hyperparams
from .objectives import gate_smooth_value, q_gating

WEIGHT_FLOOR = 1e-5
MAX_HALVINGS = 30


@dataclass
class QuadraticModel:
    """Working quantities of the quadratic expansion at W.

    omega and z are (n, K-1): working weights and working responses.
    """

    W: np.ndarray
    omega: np.ndarray
    z: np.ndarray
    X1: np.ndarray
    base_value: float  # smooth objective at W

    def scores(self, W: np.ndarray) -> np.ndarray:
        return self.X1 @ np.atleast_2d(W).T

    def value(self, W: np.ndarray) -> float:
        """Smooth-part model; equals the smooth gate objective at the expansion point."""
        W = np.atleast_2d(W)
        r_new = self.z - self.scores(W)
        r_old = self.z - self.scores(self.W)
        return self.base_value - 0.5 * float(np.sum(self.omega * (r_new ** 2 - r_old ** 2)))

    def penalized_value(self, W: np.ndarray, hp: Hyperparams) -> float:
        W = np.atleast_2d(W)
        w = W[:, 1:]
        gam = np.broadcast_to(np.asarray(hp.gamma, float), (W.shape[0],))
        return (self.value(W) - float(np.sum(gam * np.abs(w).sum(axis=1)))
                - 0.5 * hp.rho * float(np.sum(w * w)))

    def grad(self, W: np.ndarray) -> np.ndarray:
        W = np.atleast_2d(W)
        return (self.omega * (self.z - self.scores(W))).T @ self.X1


def pn_quadratic_approx(W: np.ndarray, tau: np.ndarray, data: Dataset) -> QuadraticModel:
    W = np.array(W, dtype=float, ndmin=2)
    X1 = np.column_stack([np.ones(data.n), data.X])
    S = np.ascontiguousarray(W @ X1.T)
    omega, R = kern.pn_working(S, np.ascontiguousarray(tau.T), WEIGHT_FLOOR)
    z = S.T + R.T
    return QuadraticModel(W, omega.T.copy(), z, X1, gate_smooth_value(W, tau, data.X))


def pn_coordinate_update(k: int, j: int, qm: QuadraticModel, hp: Hyperparams,
                         W: np.ndarray | None = None) -> float:
    """Closed-form maximizer of the penalized quadratic over coordinate (k, j).

    ``W`` is the point whose other coordinates are held fixed (defaults to the
    expansion point). j = 0 is the unpenalized intercept.
    """
    W = qm.W if W is None else np.atleast_2d(W)
    x = qm.X1[:, j]
    om = qm.omega[:, k]
    partial = qm.z[:, k] - qm.X1 @ W[k] + x * W[k, j]
    num = float(np.sum(om * x * partial))
    den = float(np.sum(om * x * x))
    if j == 0:
        return num / den if den > 0 else float(W[k, j])
    den += hp.rho
    if den <= 0:
        return float(W[k, j])
    gam = float(np.broadcast_to(np.asarray(hp.gamma, float), (W.shape[0],))[k])
    return float(kern.soft_threshold(num, gam) / den)


def pn_gating_step(W: np.ndarray, tau: np.ndarray, data: Dataset, hp: Hyperparams,
                   outer_iters: int = 10, sweeps: int = 10,
                   tol: float = 1e-10) -> tuple[np.ndarray, dict]:
    """Proximal-Newton iterations with backtracking; the gate objective never decreases."""
    W = np.array(W, dtype=float, ndmin=2)
    info = {"outer": 0, "halvings": 0, "backtrack_failures": 0, "skipped": 0}
    K1 = W.shape[0]
    if K1 == 0 or outer_iters <= 0:
        return W, info
    X1T = np.ascontiguousarray(np.vstack([np.ones(data.n), data.X.T]))
    tauT = np.ascontiguousarray(tau.T)
    gam = np.ascontiguousarray(np.broadcast_to(np.asarray(hp.gamma, float), (K1,)))
    q_cur = q_gating(W, tau, data, hp)
    for _ in range(outer_iters):
        S = np.ascontiguousarray(W @ X1T)
        omega, R = kern.pn_working(S, tauT, WEIGHT_FLOOR)
        Wc, n_skip = kern.pn_sweeps(X1T, omega, R, W, gam, float(hp.rho), int(sweeps), tol)
        info["outer"] += 1
        info["skipped"] += int(n_skip)
        D = Wc - W
        if float(np.max(np.abs(D))) <= tol:
            break
        t = 1.0
        cand = Wc
        accepted = False
        for _h in range(MAX_HALVINGS + 1):
            q_c = q_gating(cand, tau, data, hp)
            if q_c >= q_cur:
                accepted = True
                break
            t *= 0.5
            info["halvings"] += 1
            cand = W + t * D
        if not accepted:
            info["backtrack_failures"] += 1
            break
        step = float(np.max(np.abs(cand - W)))
        W, q_cur = cand, q_c
        if step <= tol:
            break
    return W, info

