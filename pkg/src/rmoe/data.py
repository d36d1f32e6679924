"""Simulation design, CSV ingestion and model files."""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .model import ContractError, Dataset, Hyperparams, MoEParams, gating_probs

SCHEMA_VERSION = "rmoe-model/1"


class ConfigError(ValueError):
    """Bad user configuration: missing column, wrong schema, malformed spec."""


class ParseError(ValueError):
    pass


@dataclass
class SimulationSpec:
    n: int
    true_params: MoEParams
    ar_corr: float = 0.5
    rng_seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ContractError("n must be >= 1")
        if not 0.0 <= self.ar_corr < 1.0:
            raise ContractError("ar_corr must lie in [0, 1)")


def benchmark_params() -> MoEParams:
    """Two-expert, six-predictor design with sparse experts and a sparse gate."""
    return MoEParams(
        gate_intercepts=[1.0],
        gate_weights=[[2.0, 0.0, 0.0, -1.0, 0.0, 0.0]],
        expert_intercepts=[0.0, 0.0],
        expert_weights=[[0.0, 1.5, 0.0, 0.0, 0.0, 1.0],
                        [1.0, -1.5, 0.0, 0.0, 2.0, 0.0]],
        sigmas=[1.0, 1.0],
    )


def benchmark_simulation_spec(n: int = 300, seed: int = 0) -> SimulationSpec:
    return SimulationSpec(n=n, true_params=benchmark_params(), ar_corr=0.5, rng_seed=seed)


def ar_gaussian(n: int, p: int, phi: float, rng: np.random.Generator) -> np.ndarray:
    """Rows from N(0, S) with S_jk = phi^|j-k|, via the stationary AR(1) recursion."""
    E = rng.standard_normal((n, p))
    X = np.empty_like(E)
    X[:, 0] = E[:, 0]
    c = np.sqrt(1.0 - phi * phi)
    for j in range(1, p):
        X[:, j] = phi * X[:, j - 1] + c * E[:, j]
    return X


def simulate(spec: SimulationSpec) -> tuple[Dataset, np.ndarray]:
    """Draw (X, y) and the 1-based latent labels from the MoE in ``spec``."""
    rng = np.random.default_rng(spec.rng_seed)
    theta = spec.true_params
    X = ar_gaussian(spec.n, theta.p, spec.ar_corr, rng)
    pi = gating_probs(X, theta)
    cum = np.cumsum(pi, axis=1)
    u = rng.random(spec.n)
    z = np.minimum((u[:, None] > cum).sum(axis=1), theta.K - 1)
    mean = theta.expert_intercepts[z] + np.einsum("ij,ij->i", X, theta.expert_weights[z])
    y = mean + theta.sigma_vector()[z] * rng.standard_normal(spec.n)
    names = [f"x{j + 1}" for j in range(theta.p)]
    return Dataset(X, y, feature_names=names), z + 1


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        rows = []
        for r, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: row {r} has {len(row)} cells, header has {len(header)}")
            vals = []
            for c, cell in enumerate(row):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ParseError(
                        f"{path}: non-numeric cell {cell!r} at row {r}, column {header[c]!r}") from None
            rows.append(vals)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return header, np.array(rows)


def standardize(X: np.ndarray):
    """Center and scale columns; constant columns are left as they are (mean 0, sd 1 recorded)."""
    means = X.mean(axis=0)
    sds = X.std(axis=0)
    const = [int(j) for j in np.flatnonzero(sds == 0)]
    means[const] = 0.0
    sds[const] = 1.0
    return (X - means) / sds, means, sds, const


def load_csv(path, response_column: str, standardize_x: bool = False,
             predictors: Optional[list] = None) -> Dataset:
    header, M = _read_rows(path)
    if response_column not in header:
        raise ConfigError(f"response column {response_column!r} not found in {path}")
    yi = header.index(response_column)
    if predictors is None:
        predictors = [h for h in header if h != response_column]
    missing = [h for h in predictors if h not in header]
    if missing:
        raise ConfigError(f"predictor columns missing from {path}: {missing}")
    X = M[:, [header.index(h) for h in predictors]]
    y = M[:, yi]
    means = sds = None
    const: list = []
    if standardize_x:
        X, means, sds, const = standardize(X)
        if const:
            warnings.warn(f"constant predictor columns left unscaled: {[predictors[j] for j in const]}",
                          stacklevel=2)
    return Dataset(X, y, means, sds, feature_names=list(predictors),
                   response_name=response_column, constant_columns=const)


def load_predictors(path, feature_names: list, means=None, sds=None) -> np.ndarray:
    """Predictor matrix for prediction, with a stored standardization applied."""
    header, M = _read_rows(path)
    missing = [h for h in feature_names if h not in header]
    if missing:
        raise ConfigError(f"predictor columns missing from {path}: {missing}")
    X = M[:, [header.index(h) for h in feature_names]]
    if means is not None:
        X = (X - np.asarray(means)) / np.asarray(sds)
    return X


def write_dataset_csv(path, data: Dataset, response_name: str = "y") -> None:
    names = data.feature_names or [f"x{j + 1}" for j in range(data.p)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([*names, response_name])
        for xi, yi in zip(data.X, data.y):
            w.writerow([repr(float(v)) for v in xi] + [repr(float(yi))])


def write_labels_csv(path, labels) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["label"])
        for z in labels:
            w.writerow([int(z)])


def read_labels_csv(path) -> np.ndarray:
    _, M = _read_rows(path)
    return M[:, 0].astype(int)


def params_to_dict(params: MoEParams) -> dict:
    return {
        "K": params.K,
        "p": params.p,
        "sigma_mode": "shared" if params.shared_sigma else "per-component",
        "gate_intercepts": params.gate_intercepts.tolist(),
        "gate_weights": params.gate_weights.tolist(),
        "expert_intercepts": params.expert_intercepts.tolist(),
        "expert_weights": params.expert_weights.tolist(),
        "sigmas": params.sigmas.tolist(),
    }


def params_from_dict(d: dict) -> MoEParams:
    K, p = int(d["K"]), int(d["p"])
    try:
        return MoEParams(
            np.array(d["gate_intercepts"], float).reshape(K - 1),
            np.array(d["gate_weights"], float).reshape(K - 1, p),
            np.array(d["expert_intercepts"], float).reshape(K),
            np.array(d["expert_weights"], float).reshape(K, p),
            np.array(d["sigmas"], float),
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"malformed parameter block: {exc}") from exc


def save_model(path, params: MoEParams, hp: Optional[Hyperparams] = None,
               means=None, sds=None, feature_names=None, response=None) -> None:
    """Versioned JSON; floats are written with repr precision so round-trips are exact."""
    doc = {"schema_version": SCHEMA_VERSION, **params_to_dict(params)}
    doc["standardization"] = (None if means is None else
                              {"means": np.asarray(means, float).tolist(),
                               "sds": np.asarray(sds, float).tolist()})
    doc["hyperparams"] = None if hp is None else {
        "lambda": np.asarray(hp.lam, float).tolist(),
        "gamma": np.asarray(hp.gamma, float).tolist(),
        "rho": float(hp.rho),
        "solver": hp.solver.value,
    }
    if feature_names is not None:
        doc["feature_names"] = list(feature_names)
    if response is not None:
        doc["response"] = response
    Path(path).write_text(json.dumps(doc, indent=2), encoding="utf-8")


@dataclass
class ModelFile:
    params: MoEParams
    hp: Optional[Hyperparams]
    means: Optional[np.ndarray]
    sds: Optional[np.ndarray]
    feature_names: Optional[list]
    response: Optional[str]


def load_model(path) -> ModelFile:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"{path}: schema_version {version!r} is not supported "
                          f"(expected {SCHEMA_VERSION!r})")
    params = params_from_dict(doc)
    h = doc.get("hyperparams")
    hp = None
    if h is not None:
        hp = Hyperparams(lam=np.asarray(h["lambda"], float) if isinstance(h["lambda"], list) else h["lambda"],
                         gamma=np.asarray(h["gamma"], float) if isinstance(h["gamma"], list) else h["gamma"],
                         rho=h["rho"], K=params.K, solver=h.get("solver", "ca"))
    st = doc.get("standardization")
    means = None if st is None else np.array(st["means"], float)
    sds = None if st is None else np.array(st["sds"], float)
    return ModelFile(params, hp, means, sds, doc.get("feature_names"), doc.get("response"))


def load_simulation_spec(source: str, n: int, seed: int) -> SimulationSpec:
    """``builtin:paper-sim`` or a path to a JSON file holding model parameters (+ optional ar_corr)."""
    if source == "builtin:paper-sim":
        return benchmark_simulation_spec(n=n, seed=seed)
    path = Path(source)
    if not path.exists():
        raise ConfigError(f"simulation spec {source!r} not found")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        params = params_from_dict(doc.get("params", doc))
        return SimulationSpec(n=n, true_params=params, ar_corr=float(doc.get("ar_corr", 0.5)),
                              rng_seed=seed)
    except (json.JSONDecodeError, KeyError, TypeError, ContractError) as exc:
        raise ConfigError(f"bad simulation spec {source!r}: {exc}") from exc
