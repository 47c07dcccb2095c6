"""Approximate D-optimal designs on large grids of factor levels."""

from .design import (
    Design,
    ExactDesign,
    FactorGrid,
    InfoMatrix,
    SingularMatrixError,
    d_criterion,
    efficiency_lower_bound,
    information_matrix,
    relative_efficiency,
    round_to_exact,
    variance_function,
)
from .gex import GexConfig, RunReport, run_gex
from .models import (
    GLMModel,
    LinearModel,
    Model,
    NonlinearModel,
    ReparametrizedModel,
    benchmark,
)
from .solver import SolverConfig, grp_pooling, kumar_yildirim_init, optimize_weights

__version__ = "0.1.0"

__all__ = [
    "Design",
    "ExactDesign",
    "FactorGrid",
    "GLMModel",
    "GexConfig",
    "InfoMatrix",
    "LinearModel",
    "Model",
    "NonlinearModel",
    "ReparametrizedModel",
    "RunReport",
    "SingularMatrixError",
    "SolverConfig",
    "benchmark",
    "d_criterion",
    "efficiency_lower_bound",
    "grp_pooling",
    "information_matrix",
    "kumar_yildirim_init",
    "optimize_weights",
    "relative_efficiency",
    "round_to_exact",
    "run_gex",
    "variance_function",
]
