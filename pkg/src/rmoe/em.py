"""Block-wise EM for the penalized Gaussian mixture of experts.

One outer iteration:

1. E-step: responsibilities at the current parameters.
2. Gate block: a few sweeps of the selected solver (MM, CA or PN).
3. Expert block: weighted-Lasso coordinate sweeps with sigma frozen.
4. E-step again at the updated gates and experts, then the sigma update.

Each block only has to improve its part of the Q-function, so the penalized
log-likelihood is non-decreasing across iterations.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.vq import kmeans2

from .experts import experts_beta_step, update_sigma, weighted_least_squares
from .gating_ca import ca_gating_step
from .gating_mm import mm_gating_step
from .gating_pn import pn_gating_step
from .model import (
    ContractError,
    Dataset,
    Hyperparams,
    MoEParams,
    NumericError,
    Solver,
    count_df,
    log_likelihood,
    penalized_log_likelihood,
    responsibilities,
)
from .objectives import q_experts, q_gating  # noqa: F401  (re-exported)

log = logging.getLogger(__name__)


class InitStrategy(str, enum.Enum):
    RANDOM = "random-responsibilities"
    KMEANS = "kmeans-seeded"


class SigmaMode(str, enum.Enum):
    PER_COMPONENT = "per-component"
    SHARED = "shared"


class FitError(RuntimeError):
    """Every start failed; ``diagnostics`` carries the per-start reasons."""

    def __init__(self, message: str, diagnostics: list):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass
class FitOptions:
    max_em_iters: int = 1000
    rel_tol: float = 1e-6
    inner_iters: int = 10
    n_starts: int = 5
    init_strategy: InitStrategy = InitStrategy.RANDOM
    rng_seed: int = 0
    sigma_mode: SigmaMode = SigmaMode.PER_COMPONENT
    sigma_floor_factor: float = 1e-6

    def __post_init__(self):
        self.init_strategy = InitStrategy(self.init_strategy)
        self.sigma_mode = SigmaMode(self.sigma_mode)
        if self.max_em_iters < 0 or self.inner_iters < 0 or self.n_starts < 1:
            raise ContractError("iteration and start counts must be positive")
        if not self.rel_tol > 0:
            raise ContractError("rel_tol must be > 0")


@dataclass(frozen=True)
class FitResult:
    params: MoEParams
    hp: Hyperparams
    objective_trace: np.ndarray
    final_loglik: float
    final_objective: float
    n_iters: int
    converged: bool
    df: int
    responsibilities: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def sigma_floor(data: Dataset, factor: float = 1e-6) -> float:
    sd = float(np.std(data.y))
    return factor * sd if sd > 0 else factor


def _experts_from_tau(data: Dataset, tau: np.ndarray, shared: bool, floor: float):
    K = tau.shape[1]
    B = np.empty((K, data.p + 1))
    for k in range(K):
        B[k] = weighted_least_squares(data, tau[:, k])
    R = data.y[:, None] - (B[:, 0] + data.X @ B[:, 1:].T)
    ss = np.sum(tau * R * R, axis=0)
    mass = tau.sum(axis=0)
    if shared:
        sig = np.array([np.sqrt(max(ss.sum() / mass.sum(), floor ** 2))])
    else:
        sig = np.sqrt(np.maximum(ss / np.maximum(mass, 1e-300), floor ** 2))
    return B, sig


def initialize(data: Dataset, K: int, strategy: InitStrategy | str, rng: np.random.Generator,
               sigma_mode: SigmaMode | str = SigmaMode.PER_COMPONENT,
               floor: float | None = None) -> MoEParams:
    """Starting parameters; gates always start at zero.

    random-responsibilities: random hard memberships, then one unpenalized
    expert M-step. kmeans-seeded: k-means on standardized (x, y), then one
    regression per cluster. A component with fewer than p+1 members falls back
    to the global regression.
    """
    strategy = InitStrategy(strategy)
    shared = SigmaMode(sigma_mode) is SigmaMode.SHARED
    if K > data.n:
        raise ContractError(f"K={K} exceeds n={data.n}")
    floor = sigma_floor(data) if floor is None else floor
    n, p = data.n, data.p
    if K == 1:
        labels = np.zeros(n, dtype=int)
    elif strategy is InitStrategy.RANDOM:
        labels = rng.integers(K, size=n)
    else:
        Z = np.column_stack([data.X, data.y])
        sd = Z.std(axis=0)
        Z = (Z - Z.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
        _, labels = kmeans2(Z, K, minit="++", seed=rng)
    tau = np.zeros((n, K))
    tau[np.arange(n), labels] = 1.0
    for k in range(K):
        if tau[:, k].sum() < p + 1:
            tau[:, k] = 1.0
    B, sig = _experts_from_tau(data, tau, shared, floor)
    return MoEParams(np.zeros(K - 1), np.zeros((K - 1, p)), B[:, 0], B[:, 1:], sig)


def _gating_step(params: MoEParams, tau, data, hp, opts):
    W = params.gate_matrix()
    if hp.solver is Solver.MM:
        return mm_gating_step(W, tau, data, hp, sweeps=opts.inner_iters)
    if hp.solver is Solver.CA:
        return ca_gating_step(W, tau, data, hp, sweeps=opts.inner_iters)
    return pn_gating_step(W, tau, data, hp, outer_iters=opts.inner_iters, sweeps=opts.inner_iters)


def _add(acc: dict, info: dict, keys: dict):
    for src, dst in keys.items():
        acc[dst] = acc.get(dst, 0) + int(info.get(src, 0))


def run_em(data: Dataset, hp: Hyperparams, opts: FitOptions, params: MoEParams,
           floor: float | None = None) -> tuple[MoEParams, np.ndarray, bool, dict]:
    """EM iterations from ``params``; returns (params, objective trace, converged, diagnostics)."""
    floor = sigma_floor(data, opts.sigma_floor_factor) if floor is None else floor
    diag: dict = {}
    pl = penalized_log_likelihood(data, params, hp)
    trace = [pl]
    converged = False
    for _ in range(opts.max_em_iters):
        tau = responsibilities(data, params)
        W, ginfo = _gating_step(params, tau, data, hp, opts)
        _add(diag, ginfo, {"nr_failures": "nr_failures", "clamps": "clamps",
                           "backtrack_failures": "backtrack_failures", "rejected": "mm_rejected"})
        params = params.with_gates(W)
        B, binfo = experts_beta_step(params, tau, data, hp, sweeps=opts.inner_iters)
        params = params.with_experts(B)
        tau = responsibilities(data, params)
        sig, sinfo = update_sigma(params, tau, data, floor)
        _add(diag, sinfo, {"floor_hits": "floor_hits", "empty": "empty_components"})
        if sinfo["empty"]:
            log.info("skipped sigma update for %d empty component(s)", sinfo["empty"])
        params = params.with_experts(B, sig)
        pl_new = penalized_log_likelihood(data, params, hp)
        if not np.isfinite(pl_new):
            raise NumericError("penalized log-likelihood became non-finite")
        trace.append(pl_new)
        if abs(pl_new - pl) <= opts.rel_tol * abs(pl):
            converged = True
            break
        pl = pl_new
    return params, np.asarray(trace), converged, diag


def fit(data: Dataset, hp: Hyperparams, opts: FitOptions | None = None,
        init: MoEParams | None = None) -> FitResult:
    """Multi-start penalized EM; keeps the start with the highest final objective.

    ``init`` replaces the random starts with a single user-supplied start.
    """
    opts = FitOptions() if opts is None else opts
    if hp.K > data.n:
        raise ContractError(f"K={hp.K} exceeds n={data.n}")
    floor = sigma_floor(data, opts.sigma_floor_factor)
    root = np.random.default_rng(opts.rng_seed)
    child_seeds = root.spawn(opts.n_starts) if init is None else [None]
    best = None
    per_start = []
    for s, child in enumerate(child_seeds):
        try:
            if init is None:
                theta0 = initialize(data, hp.K, opts.init_strategy, child, opts.sigma_mode, floor)
            else:
                theta0 = init.copy()
            params, trace, conv, diag = run_em(data, hp, opts, theta0, floor)
        except (NumericError, ContractError, FloatingPointError, np.linalg.LinAlgError) as exc:
            per_start.append({"start": s, "error": str(exc)})
            log.warning("start %d failed: %s", s, exc)
            continue
        per_start.append({"start": s, "objective": float(trace[-1]), "iters": len(trace) - 1,
                          "converged": conv})
        if best is None or trace[-1] > best[1][-1]:
            best = (params, trace, conv, diag, s)
    if best is None:
        raise FitError("all starts failed to produce a finite objective", per_start)
    params, trace, conv, diag, s = best
    diag = dict(diag, start_index=s, starts=per_start, sigma_floor=floor)
    return FitResult(
        params=params,
        hp=hp,
        objective_trace=trace,
        final_loglik=log_likelihood(data, params),
        final_objective=float(trace[-1]),
        n_iters=len(trace) - 1,
        converged=conv,
        df=count_df(params),
        responsibilities=responsibilities(data, params),
        diagnostics=diag,
    )
