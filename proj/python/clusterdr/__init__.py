"""Doubly robust estimation of average outcomes for clustered data with missing outcomes."""

from ._core import (
    Dataset,
    EstimationError,
    InvariantError,
    ValidationError,
    __version__,
    estimate,
    normal_quantile,
    omega_scaling_diagnostic,
    run_cli,
    simulate_homogeneous,
    simulate_quadratic,
    simulate_sequential,
    var_cluster_robust,
    var_iid,
    wald_ci,
)

__all__ = [
    "Dataset",
    "EstimationError",
    "InvariantError",
    "ValidationError",
    "__version__",
    "estimate",
    "normal_quantile",
    "omega_scaling_diagnostic",
    "run_cli",
    "simulate_homogeneous",
    "simulate_quadratic",
    "simulate_sequential",
    "var_cluster_robust",
    "var_iid",
    "wald_ci",
]
