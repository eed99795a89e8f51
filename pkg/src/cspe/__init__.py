"""Bayesian three-component factorization of noisy, incomplete low-rank matrices."""
from .chain import ChainConfig, DrawStore, run_chain
from .errors import ConfigError, CspeError, DataError, SamplerError
from .experiments import Scenario, compute_metrics, generate_dgp, run_benchmark
from .factorization import (
    Factorization,
    ObservedMatrix,
    from_increments,
    max_rank,
    signal_to_noise,
    to_increments,
    variance_decomposition,
)
from .io import load_draw_store, load_matrix_csv, save_matrix_csv, standardize_rows
from .nuts import NutsConfig
from .posterior import KernelContext, RelaxationSchedule, grad_log_kernel, log_kernel
from .priors import (
    CSPE,
    SSE,
    Exponential,
    Lomax,
    Noninformative,
    elicit_alpha,
    expected_pi,
    standard_prior_grid,
    stick_breaking,
)
from .summary import PosteriorSummary, summarize

__all__ = [
    "CSPE", "SSE", "ChainConfig", "ConfigError", "CspeError", "DataError", "DrawStore",
    "Exponential", "Factorization", "KernelContext", "Lomax", "Noninformative",
    "NutsConfig", "ObservedMatrix", "PosteriorSummary", "RelaxationSchedule",
    "SamplerError", "Scenario", "compute_metrics", "elicit_alpha", "expected_pi",
    "from_increments", "generate_dgp", "grad_log_kernel", "load_draw_store",
    "load_matrix_csv", "log_kernel", "max_rank", "standard_prior_grid", "run_benchmark",
    "run_chain", "save_matrix_csv", "signal_to_noise", "standardize_rows",
    "stick_breaking", "summarize", "to_increments", "variance_decomposition",
]
