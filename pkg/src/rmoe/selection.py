"""Choice of (K, lam, gamma) by maximizing a modified BIC over a grid."""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .em import FitError, FitOptions, FitResult, fit
from .model import ContractError, Dataset, Hyperparams, Solver


class SelectionError(RuntimeError):
    pass


def ridge_rule(n: int, factor: float = 0.1) -> float:
    """rho = factor * log(n), natural log."""
    return factor * math.log(n)


@dataclass
class GridSpec:
    K_set: list
    lambda_grid: list
    gamma_grid: list
    rho: float

    def __post_init__(self):
        for name in ("K_set", "lambda_grid", "gamma_grid"):
            vals = list(getattr(self, name))
            if not vals:
                raise ContractError(f"{name} is empty")
            if vals != sorted(vals):
                raise ContractError(f"{name} must be sorted ascending")
            setattr(self, name, vals)

    @property
    def size(self) -> int:
        return len(self.K_set) * len(self.lambda_grid) * len(self.gamma_grid)


def _log_grid(m: int, top: float) -> list:
    if m == 1:
        return [float(top)]
    return np.geomspace(0.01 * top, top, m).tolist()


def build_grid(n: int, m1: int, m2: int, max_lambda: Optional[float] = None,
               max_gamma: Optional[float] = None, K_set: Sequence[int] = (2,),
               rho: Optional[float] = None) -> GridSpec:
    """Log-spaced lam/gamma grids from 1% of the maximum up to it (default maximum sqrt(n))."""
    if m1 < 1 or m2 < 1:
        raise ContractError("grid sizes must be >= 1")
    top_l = math.sqrt(n) if max_lambda is None else max_lambda
    top_g = math.sqrt(n) if max_gamma is None else max_gamma
    return GridSpec(sorted(K_set), _log_grid(m1, top_l), _log_grid(m2, top_g),
                    ridge_rule(n) if rho is None else rho)


def modified_bic(fit_result: FitResult, n: int) -> float:
    """Unpenalized log-likelihood at the estimate minus df * log(n) / 2."""
    return fit_result.final_loglik - fit_result.df * math.log(n) / 2.0


@dataclass
class ScoreRow:
    K: int
    lam: float
    gamma: float
    rho: float
    loglik: float
    df: int
    bic: float
    converged: bool


def _fit_cell(args):
    data, hp, opts = args
    try:
        return fit(data, hp, opts)
    except FitError as exc:
        return exc


def _sort_key(row: ScoreRow):
    # highest BIC, then larger lam, larger gamma, smaller K
    return (row.bic, row.lam, row.gamma, -row.K)


def select(data: Dataset, grid: GridSpec, opts: Optional[FitOptions] = None,
           solver: Solver | str = Solver.CA, workers: int = 1):
    """Fit every grid cell and return (best hyperparams, best fit, score table)."""
    opts = FitOptions() if opts is None else opts
    cells = [Hyperparams(lam=lam, gamma=gam, rho=grid.rho, K=K, solver=solver)
             for K in grid.K_set for lam in grid.lambda_grid for gam in grid.gamma_grid]
    jobs = [(data, hp, replace(opts)) for hp in cells]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_fit_cell, jobs))
    else:
        results = [_fit_cell(j) for j in jobs]
    table: list[ScoreRow] = []
    fits: list[FitResult] = []
    for hp, res in zip(cells, results):
        if isinstance(res, Exception):
            continue
        table.append(ScoreRow(hp.K, float(hp.lam), float(hp.gamma), grid.rho, res.final_loglik,
                              res.df, modified_bic(res, data.n), res.converged))
        fits.append(res)
    if not table:
        raise SelectionError("every grid cell failed to fit")
    i = max(range(len(table)), key=lambda t: _sort_key(table[t]))
    return fits[i].hp, fits[i], table


def write_scores_csv(path, table: Sequence[ScoreRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["K", "lambda", "gamma", "rho", "loglik", "df", "bic", "converged"])
        for r in table:
            w.writerow([r.K, repr(r.lam), repr(r.gamma), repr(r.rho), repr(r.loglik), r.df,
                        repr(r.bic), str(r.converged).lower()])
