"""Penalized maximum-likelihood estimation and feature selection for Gaussian mixtures of experts."""
from .data import (
    SimulationSpec,
    load_csv,
    load_model,
    benchmark_params,
    benchmark_simulation_spec,
    save_model,
    simulate,
)
from .em import FitError, FitOptions, FitResult, InitStrategy, SigmaMode, fit, initialize
from .evaluation import (
    adjusted_rand_index,
    align_components,
    coefficient_errors,
    correct_classification_rate,
    prediction_metrics,
    sensitivity_specificity,
)
from .model import (
    ContractError,
    Dataset,
    Hyperparams,
    MoEParams,
    NumericError,
    Solver,
    gating_probs,
    hard_assign,
    log_likelihood,
    penalized_log_likelihood,
    predict,
    responsibilities,
)
from .objectives import q_experts, q_gating
from .selection import GridSpec, build_grid, modified_bic, select

__all__ = [
    "ContractError", "Dataset", "FitError", "FitOptions", "FitResult", "GridSpec", "Hyperparams",
    "InitStrategy", "MoEParams", "NumericError", "SigmaMode", "SimulationSpec", "Solver",
    "adjusted_rand_index", "align_components", "build_grid", "coefficient_errors",
    "correct_classification_rate", "fit", "gating_probs", "hard_assign", "initialize",
    "load_csv", "load_model", "log_likelihood", "modified_bic", "benchmark_params",
    "benchmark_simulation_spec", "penalized_log_likelihood", "predict", "prediction_metrics",
    "q_experts", "q_gating", "responsibilities", "save_model", "select",
    "sensitivity_specificity", "simulate",
]
