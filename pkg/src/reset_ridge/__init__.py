"""Spectral filters, moments and risks of gradient flow with stochastic resetting."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DomainError,
    InputError,
    NumericalError,
    ParameterError,
    ResetRidgeError,
)
from .filters import Renewal, Ridge, SharpCutoff, apply_filter, filter_curve, two_mode_mismatch
from .laws import Deterministic, Exponential, Gamma, admissibility_check, law_from_dict
from .spectral import (
    DesignData,
    SpectralModel,
    build_spectral_model,
    min_norm_ols,
    ridge_closed_form,
)

__all__ = [
    "ConfigError",
    "DomainError",
    "InputError",
    "NumericalError",
    "ParameterError",
    "ResetRidgeError",
    "Renewal",
    "Ridge",
    "SharpCutoff",
    "apply_filter",
    "filter_curve",
    "two_mode_mismatch",
    "Deterministic",
    "Exponential",
    "Gamma",
    "admissibility_check",
    "law_from_dict",
    "DesignData",
    "SpectralModel",
    "build_spectral_model",
    "min_norm_ols",
    "ridge_closed_form",
]
