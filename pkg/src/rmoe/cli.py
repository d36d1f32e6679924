"""Command-line front end: simulate, fit, select, predict, evaluate.

Exit codes: 0 success, 2 usage or configuration error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
import warnings

import numpy as np

from .data import (
    ConfigError,
    ParseError,
    load_csv,
    load_model,
    load_predictors,
    load_simulation_spec,
    read_labels_csv,
    save_model,
    simulate,
    write_dataset_csv,
    write_labels_csv,
)
from .evaluation import adjusted_rand_index, correct_classification_rate
from .em import FitError, FitOptions, fit
from .model import (
    ContractError,
    Dataset,
    Hyperparams,
    NumericError,
    gating_probs,
    hard_assign,
    log_likelihood,
    penalized_log_likelihood,
    predict,
    responsibilities,
)
from .selection import SelectionError, build_grid, ridge_rule, select, write_scores_csv
from .study import coefficient_table, run_replicates, score_fit, summarize, write_rows_csv

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


class UsageError(Exception):
    pass


def _int_list(s: str) -> list:
    try:
        return [int(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None


def _rho(value: str, n: int) -> float:
    return ridge_rule(n) if value == "auto" else float(value)


def _positive(name, v):
    if v < 1:
        raise UsageError(f"--{name} must be >= 1, got {v}")


def _fit_options(a) -> FitOptions:
    return FitOptions(max_em_iters=a.max_iter, rel_tol=a.tol, n_starts=a.starts,
                      init_strategy=a.init, rng_seed=a.seed, sigma_mode=a.sigma_mode)


def _sparsity_report(params) -> list:
    lines = []
    for k in range(params.K):
        nz = int(np.count_nonzero(params.expert_weights[k]))
        lines.append(f"  expert{k + 1}: {nz} nonzero / {params.p - nz} zero")
    for k in range(params.K - 1):
        nz = int(np.count_nonzero(params.gate_weights[k]))
        lines.append(f"  gate{k + 1}:   {nz} nonzero / {params.p - nz} zero")
    return lines


def _report(res, data: Dataset, out) -> None:
    print(f"K={res.hp.K} lambda={res.hp.lam:g} gamma={res.hp.gamma:g} rho={res.hp.rho:g} "
          f"solver={res.hp.solver.value}", file=out)
    print(f"penalized_loglik={res.final_objective:.6f}", file=out)
    print(f"loglik={res.final_loglik:.6f}", file=out)
    print(f"df={res.df}", file=out)
    print(f"iterations={res.n_iters} converged={str(res.converged).lower()}", file=out)
    print("sparsity:", file=out)
    for line in _sparsity_report(res.params):
        print(line, file=out)


def _save(path, res, data: Dataset):
    save_model(path, res.params, res.hp, data.means, data.sds, data.feature_names, data.response_name)


def cmd_simulate(a) -> int:
    _positive("n", a.n)
    spec = load_simulation_spec(a.spec, a.n, a.seed)
    data, z = simulate(spec)
    write_dataset_csv(a.out, data, response_name="y")
    if a.labels:
        write_labels_csv(a.labels, z)
    print(f"wrote {data.n} rows x {data.p} predictors to {a.out}")
    return EXIT_OK


def cmd_fit(a) -> int:
    _positive("K", a.K)
    data = load_csv(a.data, a.response, standardize_x=a.standardize)
    hp = Hyperparams(lam=a.lam, gamma=a.gamma, rho=_rho(a.rho, data.n), K=a.K, solver=a.solver)
    res = fit(data, hp, _fit_options(a))
    _report(res, data, sys.stdout)
    if a.out:
        _save(a.out, res, data)
    if a.trace:
        with open(a.trace, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "objective"])
            for i, v in enumerate(res.objective_trace):
                w.writerow([i, repr(float(v))])
    return EXIT_OK


def cmd_select(a) -> int:
    data = load_csv(a.data, a.response, standardize_x=a.standardize)
    if len(a.grid_size) != 2 or min(a.grid_size) < 1:
        raise UsageError("--grid-size expects two positive integers m1,m2")
    if not a.K_set or min(a.K_set) < 1:
        raise UsageError("--K-set expects positive integers")
    grid = build_grid(data.n, a.grid_size[0], a.grid_size[1], max_lambda=a.max_lambda,
                      max_gamma=a.max_gamma, K_set=sorted(set(a.K_set)),
                      rho=None if a.rho == "auto" else float(a.rho))
    workers = a.workers if a.workers else (os.cpu_count() or 1)
    hp, res, table = select(data, grid, _fit_options(a), solver=a.solver, workers=workers)
    print(f"evaluated {len(table)} of {grid.size} cells")
    _report(res, data, sys.stdout)
    if a.scores:
        write_scores_csv(a.scores, table)
    if a.out:
        _save(a.out, res, data)
    return EXIT_OK


def cmd_predict(a) -> int:
    mf = load_model(a.model)
    names = mf.feature_names or [f"x{j + 1}" for j in range(mf.params.p)]
    X = load_predictors(a.data, names, mf.means, mf.sds)
    if X.shape[1] != mf.params.p:
        raise ConfigError(f"model expects {mf.params.p} predictors, data has {X.shape[1]}")
    yhat = predict(X, mf.params)
    pis = gating_probs(X, mf.params)
    with open(a.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["prediction", *[f"pi{k + 1}" for k in range(mf.params.K)]])
        for v, row in zip(yhat, pis):
            w.writerow([repr(float(v)), *[repr(float(q)) for q in row]])
    print(f"wrote {len(yhat)} predictions to {a.out}")
    return EXIT_OK


def _flat_row(row: dict) -> dict:
    return {k: ("" if v is None else v) for k, v in row.items()}


def cmd_evaluate(a) -> int:
    if a.replicates:
        return _evaluate_replicates(a)
    if not a.model:
        raise UsageError("evaluate needs --model (or --replicates)")
    mf = load_model(a.model)
    est = mf.params
    truth = load_simulation_spec(a.truth, 1, 0).true_params if a.truth else None
    if truth is not None and (truth.K != est.K or truth.p != est.p):
        raise ConfigError(f"model has K={est.K}, p={est.p}; truth has K={truth.K}, p={truth.p}")
    row: dict = {}
    aligned = est
    data = None
    if a.data:
        names = mf.feature_names or [f"x{j + 1}" for j in range(est.p)]
        X = load_predictors(a.data, names, mf.means, mf.sds)
        resp = a.response or mf.response or "y"
        y = load_csv(a.data, resp, predictors=names).y
        data = Dataset(X, y)
    labels = read_labels_csv(a.labels) if a.labels else None
    if labels is not None and data is None:
        raise UsageError("--labels needs --data to compute memberships")
    if labels is not None and labels.shape[0] != data.n:
        raise ConfigError(f"labels file has {labels.shape[0]} rows, data has {data.n}")
    if truth is not None:
        row, aligned = score_fit(est, truth, data if data is not None else Dataset(np.zeros((1, est.p)), [0.0]),
                                 labels)
        if labels is None:
            row.pop("crate", None)
            row.pop("ari", None)
    elif labels is not None:
        z = hard_assign(responsibilities(data, est))
        row["crate"] = correct_classification_rate(z, labels)
        row["ari"] = adjusted_rand_index(z, labels)
    if data is not None:
        row["loglik"] = log_likelihood(data, aligned)
        if mf.hp is not None:
            row["penalized_loglik"] = penalized_log_likelihood(data, aligned, mf.hp)
    if not row:
        raise UsageError("nothing to evaluate: pass --truth and/or --data with --labels")
    for k, v in row.items():
        print(f"{k}={'' if v is None else v}")
    if a.out:
        write_rows_csv(a.out, [_flat_row(row)])
    if a.coef_out and truth is not None:
        write_rows_csv(a.coef_out, coefficient_table([aligned], truth))
    return EXIT_OK


def _evaluate_replicates(a) -> int:
    _positive("replicates", a.replicates)
    _positive("n", a.n)
    if a.model:
        mf = load_model(a.model)
        if mf.hp is None:
            raise ConfigError(f"{a.model} carries no hyperparameters")
        hp = mf.hp
    else:
        if a.K is None or a.lam is None or a.gamma is None:
            raise UsageError("--replicates needs --model or all of --K, --lambda, --gamma")
        hp = Hyperparams(lam=a.lam, gamma=a.gamma, rho=_rho(a.rho, a.n), K=a.K, solver=a.solver)
    source = a.truth or "builtin:paper-sim"
    specs = [load_simulation_spec(source, a.n, a.seed_start + r) for r in range(a.replicates)]
    if specs[0].true_params.K != hp.K:
        raise ConfigError(f"truth has K={specs[0].true_params.K}, hyperparameters use K={hp.K}")
    workers = a.workers if a.workers else (os.cpu_count() or 1)
    rows, aligned = run_replicates(specs, hp, _fit_options(a), workers=workers)
    summary = summarize(rows)
    for k, v in summary.items():
        print(f"{k}={v:.4f}")
    if a.out:
        write_rows_csv(a.out, [{"replicates": len(rows), **summary}])
    if a.rows_out:
        write_rows_csv(a.rows_out, [_flat_row(r) for r in rows])
    if a.coef_out:
        write_rows_csv(a.coef_out, coefficient_table(aligned, specs[0].true_params))
    return EXIT_OK


def _add_fit_flags(p, with_penalties=True):
    if with_penalties:
        p.add_argument("--K", type=int, default=2)
        p.add_argument("--lambda", dest="lam", type=float, default=0.0)
        p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--rho", default="auto", help="ridge strength on gate weights, or 'auto' = 0.1 log n")
    p.add_argument("--solver", choices=["mm", "ca", "pn"], default="ca")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--starts", type=int, default=5)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--init", choices=["random-responsibilities", "kmeans-seeded"],
                   default="random-responsibilities")
    p.add_argument("--sigma-mode", choices=["per-component", "shared"], default="per-component")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rmoe", description="Penalized Gaussian mixture of experts.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a synthetic dataset")
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--spec", default="builtin:paper-sim")
    p.add_argument("--out", required=True)
    p.add_argument("--labels")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit one (K, lambda, gamma, rho) cell")
    p.add_argument("--data", required=True)
    p.add_argument("--response", default="y")
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--out")
    p.add_argument("--trace")
    _add_fit_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("select", help="grid search by modified BIC")
    p.add_argument("--data", required=True)
    p.add_argument("--response", default="y")
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--K-set", dest="K_set", type=_int_list, default=[2])
    p.add_argument("--grid-size", type=_int_list, default=[10, 10])
    p.add_argument("--max-lambda", type=float)
    p.add_argument("--max-gamma", type=float)
    p.add_argument("--workers", type=int, default=0, help="0 = all available CPUs")
    p.add_argument("--scores")
    p.add_argument("--out")
    _add_fit_flags(p, with_penalties=False)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("predict", help="apply a saved model to new rows")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="compare a model with the truth and/or labels")
    p.add_argument("--model")
    p.add_argument("--truth", help="json spec or builtin:paper-sim")
    p.add_argument("--data")
    p.add_argument("--response")
    p.add_argument("--labels")
    p.add_argument("--out")
    p.add_argument("--coef-out")
    p.add_argument("--replicates", type=int, default=0)
    p.add_argument("--rows-out")
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--seed-start", type=int, default=1)
    p.add_argument("--workers", type=int, default=0, help="0 = all available CPUs")
    p.add_argument("--K", type=int)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--gamma", type=float)
    _add_fit_flags(p, with_penalties=False)
    p.set_defaults(func=cmd_evaluate)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except (UsageError, ConfigError, ParseError, ContractError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, FitError, SelectionError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
