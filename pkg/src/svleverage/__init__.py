"""Stochastic volatility with fixed and random-walk leverage: simulation,
particle filtering and iterated-filtering maximum likelihood."""

__version__ = "0.1.0"

from .data_io import ReturnSeries, load_returns, serialize
from .errors import DomainError, FilterFailure, PropagationError, UpdateDegeneracyError
from .inference import (
    aic,
    equivalent_extra_params,
    evaluate_loglik,
    local_quadratic_smooth,
    numerical_se,
    slice_likelihood,
)
from .iterated_filtering import MifConfig, MifTrace, run_mif
from .model import (
    TABLE1_FIXED,
    TABLE1_RW,
    FixedLevParams,
    RwLevParams,
    fisher_to_rho,
    rho_to_f,
    simulate,
)
from .particle_filter import FilterResult, run_filter

__all__ = [
    "DomainError", "FilterFailure", "PropagationError", "UpdateDegeneracyError",
    "ReturnSeries", "load_returns", "serialize",
    "FixedLevParams", "RwLevParams", "TABLE1_FIXED", "TABLE1_RW", "fisher_to_rho", "rho_to_f", "simulate",
    "FilterResult", "run_filter", "MifConfig", "MifTrace", "run_mif",
    "aic", "equivalent_extra_params", "evaluate_loglik", "local_quadratic_smooth", "numerical_se",
    "slice_likelihood",
]
