"""Gaussian mixture-of-experts regression: parameters and model mathematics.

The gating network is a softmax over ``K`` classes whose last class is the
reference (its intercept and weights are fixed at zero). Each expert is a
Gaussian linear regression ``y = b0 + x @ b + sigma * eps``.

Everything here is a pure function of its inputs and is evaluated in log space.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import logsumexp

LOG_2PI = np.log(2.0 * np.pi)


class ContractError(ValueError):
    """Raised when inputs violate a documented shape or domain contract."""


class NumericError(ArithmeticError):
    """Raised when a computation produces a non-finite result."""


class Solver(str, enum.Enum):
    MM = "mm"
    CA = "ca"
    PN = "pn"


@dataclass
class MoEParams:
    """Full parameter vector of a K-component Gaussian MoE.

    Attributes
    ----------
    gate_intercepts : (K-1,) array
    gate_weights : (K-1, p) array
    expert_intercepts : (K,) array
    expert_weights : (K, p) array
    sigmas : (K,) array for per-component noise scales, or (1,) for a shared scale.
    """

    gate_intercepts: np.ndarray
    gate_weights: np.ndarray
    expert_intercepts: np.ndarray
    expert_weights: np.ndarray
    sigmas: np.ndarray

    def __post_init__(self):
        self.gate_intercepts = np.asarray(self.gate_intercepts, dtype=float).reshape(-1)
        self.expert_intercepts = np.asarray(self.expert_intercepts, dtype=float).reshape(-1)
        self.sigmas = np.asarray(self.sigmas, dtype=float).reshape(-1)
        K = self.expert_intercepts.shape[0]
        self.expert_weights = np.asarray(self.expert_weights, dtype=float).reshape(K, -1)
        p = self.expert_weights.shape[1]
        self.gate_weights = np.asarray(self.gate_weights, dtype=float).reshape(K - 1, p)
        self.validate()

    @property
    def K(self) -> int:
        return self.expert_intercepts.shape[0]

    @property
    def p(self) -> int:
        return self.expert_weights.shape[1]

    @property
    def shared_sigma(self) -> bool:
        return self.sigmas.shape[0] == 1

    def validate(self) -> None:
        K, p = self.K, self.p
        if K < 1:
            raise ContractError("need at least one component")
        if self.gate_intercepts.shape != (K - 1,):
            raise ContractError(f"gate_intercepts must have length {K - 1}")
        if self.sigmas.shape[0] not in (1, K):
            raise ContractError(f"sigmas must have length 1 or {K}, got {self.sigmas.shape[0]}")
        for name in ("gate_intercepts", "gate_weights", "expert_intercepts",
                     "expert_weights", "sigmas"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ContractError(f"{name} has non-finite entries")
        if np.any(self.sigmas <= 0):
            raise ContractError("sigmas must be strictly positive")

    def sigma_vector(self) -> np.ndarray:
        """Noise scales broadcast to one per component."""
        return np.broadcast_to(self.sigmas, (self.K,)).copy()

    def gate_matrix(self) -> np.ndarray:
        """(K-1, p+1) gate parameters with the intercept in column 0."""
        return np.column_stack([self.gate_intercepts, self.gate_weights])

    def expert_matrix(self) -> np.ndarray:
        """(K, p+1) expert coefficients with the intercept in column 0."""
        return np.column_stack([self.expert_intercepts, self.expert_weights])

    def with_gates(self, W: np.ndarray) -> "MoEParams":
        W = np.asarray(W, dtype=float).reshape(self.K - 1, self.p + 1)
        return replace(self, gate_intercepts=W[:, 0].copy(), gate_weights=W[:, 1:].copy())

    def with_experts(self, B: np.ndarray, sigmas: Optional[np.ndarray] = None) -> "MoEParams":
        B = np.asarray(B, dtype=float).reshape(self.K, self.p + 1)
        return replace(
            self,
            expert_intercepts=B[:, 0].copy(),
            expert_weights=B[:, 1:].copy(),
            sigmas=self.sigmas.copy() if sigmas is None else np.asarray(sigmas, float),
        )

    def copy(self) -> "MoEParams":
        return MoEParams(
            self.gate_intercepts.copy(),
            self.gate_weights.copy(),
            self.expert_intercepts.copy(),
            self.expert_weights.copy(),
            self.sigmas.copy(),
        )

    @classmethod
    def zeros(cls, K: int, p: int, sigma: float = 1.0, shared_sigma: bool = False) -> "MoEParams":
        return cls(
            np.zeros(K - 1),
            np.zeros((K - 1, p)),
            np.zeros(K),
            np.zeros((K, p)),
            np.full(1 if shared_sigma else K, float(sigma)),
        )


@dataclass
class Hyperparams:
    """Penalty strengths, component count and gating solver.

    ``lam`` (expert Lasso) and ``gamma`` (gate Lasso) may be scalars applied to
    every component or per-component vectors of length K and K-1.
    """

    lam: float | np.ndarray = 0.0
    gamma: float | np.ndarray = 0.0
    rho: float = 0.0
    K: int = 2
    solver: Solver = Solver.CA

    def __post_init__(self):
        self.solver = Solver(self.solver)
        if self.K < 1:
            raise ContractError("K must be >= 1")
        if np.any(np.asarray(self.lam) < 0) or np.any(np.asarray(self.gamma) < 0) or self.rho < 0:
            raise ContractError("penalty strengths must be non-negative")

    def lam_vector(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.lam, dtype=float), (self.K,)).copy()

    def gamma_vector(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.gamma, dtype=float), (self.K - 1,)).copy()


@dataclass
class Dataset:
    """Predictors ``X`` (n, p), response ``y`` (n,) and optional standardization.

    ``means``/``sds`` hold the per-column transform already applied to ``X``.
    """

    X: np.ndarray
    y: np.ndarray
    means: Optional[np.ndarray] = None
    sds: Optional[np.ndarray] = None
    feature_names: Optional[list] = None
    response_name: str = "y"
    constant_columns: list = field(default_factory=list)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        n, p = self.X.shape
        if n < 1 or p < 1:
            raise ContractError("dataset needs n >= 1 and p >= 1")
        if self.y.shape[0] != n:
            raise ContractError(f"X has {n} rows but y has {self.y.shape[0]}")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise ContractError("dataset contains non-finite values")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def standardized(self) -> bool:
        return self.means is not None

    def design(self) -> np.ndarray:
        """X with a leading column of ones."""
        return np.column_stack([np.ones(self.n), self.X])


def _check_dims(X: np.ndarray, params: MoEParams) -> None:
    if X.shape[-1] != params.p:
        raise ContractError(f"predictors have {X.shape[-1]} columns, parameters expect {params.p}")


def gate_scores(X: np.ndarray, params: MoEParams) -> np.ndarray:
    """Linear gate scores for all K classes, reference column last (zeros)."""
    X = np.atleast_2d(X)
    _check_dims(X, params)
    S = params.gate_intercepts + X @ params.gate_weights.T
    return np.column_stack([S, np.zeros(X.shape[0])])


def log_gating_probs(X: np.ndarray, params: MoEParams) -> np.ndarray:
    S = gate_scores(X, params)
    return S - logsumexp(S, axis=1, keepdims=True)


def gating_probs(x: np.ndarray, params: MoEParams) -> np.ndarray:
    """Softmax gate probabilities. ``x`` may be a single row or an (n, p) matrix."""
    x = np.asarray(x, dtype=float)
    out = np.exp(log_gating_probs(x, params))
    return out[0] if x.ndim == 1 else out


def expert_means(X: np.ndarray, params: MoEParams) -> np.ndarray:
    X = np.atleast_2d(X)
    _check_dims(X, params)
    return params.expert_intercepts + X @ params.expert_weights.T


def expert_log_densities(X: np.ndarray, y: np.ndarray, params: MoEParams) -> np.ndarray:
    """(n, K) matrix of log N(y_i; b_k0 + x_i b_k, sigma_k^2)."""
    sig = params.sigma_vector()
    r = (np.asarray(y, dtype=float).reshape(-1, 1) - expert_means(X, params)) / sig
    return -0.5 * LOG_2PI - np.log(sig) - 0.5 * r * r


def expert_log_density(y: float, x: np.ndarray, k: int, params: MoEParams) -> float:
    """log N(y; b_k0 + x b_k, sigma_k^2) for a 0-based component index ``k``."""
    if not 0 <= k < params.K:
        raise ContractError(f"component index {k} out of range for K={params.K}")
    x = np.asarray(x, dtype=float).reshape(1, -1)
    val = float(expert_log_densities(x, np.array([y]), params)[0, k])
    if not np.isfinite(val):
        raise NumericError(f"non-finite log density for component {k}")
    return val


def _joint_log(data: Dataset, params: MoEParams) -> np.ndarray:
    return log_gating_probs(data.X, params) + expert_log_densities(data.X, data.y, params)


def log_likelihood(data: Dataset, params: MoEParams) -> float:
    """Observed-data log-likelihood, with a per-row log-sum-exp."""
    rows = logsumexp(_joint_log(data, params), axis=1)
    bad = np.flatnonzero(~np.isfinite(rows))
    if bad.size:
        raise NumericError(f"non-finite log-likelihood at row {int(bad[0])}")
    return float(rows.sum())


def penalty(params: MoEParams, hp: Hyperparams) -> float:
    """Lasso on expert weights plus elastic net on gate weights. Intercepts and sigma are free."""
    lam = hp.lam_vector()
    gam = hp.gamma_vector()
    pen = float(np.sum(lam * np.abs(params.expert_weights).sum(axis=1)))
    if params.K > 1:
        pen += float(np.sum(gam * np.abs(params.gate_weights).sum(axis=1)))
        pen += 0.5 * hp.rho * float(np.sum(params.gate_weights ** 2))
    return pen


def penalized_log_likelihood(data: Dataset, params: MoEParams, hp: Hyperparams) -> float:
    return log_likelihood(data, params) - penalty(params, hp)


def responsibilities(data: Dataset, params: MoEParams) -> np.ndarray:
    """Posterior component memberships (n, K); rows sum to one."""
    J = _joint_log(data, params)
    norm = logsumexp(J, axis=1, keepdims=True)
    bad = np.flatnonzero(~np.isfinite(norm[:, 0]))
    if bad.size:
        raise NumericError(f"all component densities vanish at row {int(bad[0])}")
    return np.exp(J - norm)


def predict(x: np.ndarray, params: MoEParams) -> np.ndarray | float:
    """Conditional mean sum_k pi_k(x) (b_k0 + x b_k)."""
    x = np.asarray(x, dtype=float)
    X = np.atleast_2d(x)
    out = np.sum(gating_probs(X, params) * expert_means(X, params), axis=1)
    return float(out[0]) if x.ndim == 1 else out


def hard_assign(tau: np.ndarray) -> np.ndarray:
    """Bayes allocation: 1-based argmax label per row (ties go to the smaller index)."""
    return np.argmax(np.asarray(tau), axis=1) + 1


def count_df(params: MoEParams) -> int:
    """Nonzero penalized coefficients plus all intercepts and noise scales."""
    K, p = params.K, params.p
    return int(
        np.count_nonzero(params.gate_weights)
        + (K - 1)
        + np.count_nonzero(params.expert_weights)
        + K
        + params.sigmas.shape[0]
    )
