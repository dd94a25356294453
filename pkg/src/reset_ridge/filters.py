"""Deterministic spectral estimators ``w = V diag(g(mu)) w_star_tilde``."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ParameterError
from .laws import ResetLaw, law_from_dict
from .spectral import SpectralModel

__all__ = [
    "FilterSpec",
    "Ridge",
    "Renewal",
    "SharpCutoff",
    "filter_from_dict",
    "filter_value",
    "apply_filter",
    "two_mode_mismatch",
    "MismatchReport",
    "filter_curve",
]


class FilterSpec:
    """A map from curvature ``mu >= 0`` to retained fraction in ``[0, 1]``."""

    kind: str
    #: True for filters outside the renewal-admissible class
    external_baseline = False

    def value(self, mu):
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def label(self) -> str:
        raise NotImplementedError


def _check_mu(mu):
    arr = np.asarray(mu, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise ParameterError("curvature mu must be finite and nonnegative")
    return arr


def _positive(name, value):
    value = float(value)
    if not (value > 0 and math.isfinite(value)):
        raise ParameterError(f"{name} must be positive and finite, got {value}")
    return value


@dataclass(frozen=True)
class Ridge(FilterSpec):
    lam: float
    kind = "ridge"

    def __post_init__(self):
        object.__setattr__(self, "lam", _positive("lambda", self.lam))

    def value(self, mu):
        arr = _check_mu(mu)
        out = arr / (arr + self.lam)
        return float(out) if np.ndim(mu) == 0 else out

    def to_dict(self):
        return {"kind": "ridge", "lambda": self.lam}

    def label(self):
        return f"ridge(lambda={self.lam:g})"


@dataclass(frozen=True)
class Renewal(FilterSpec):
    law: ResetLaw
    kind = "renewal"

    def value(self, mu):
        _check_mu(mu)
        return self.law.filter(mu)

    def to_dict(self):
        return {"kind": "renewal", "law": self.law.to_dict()}

    def label(self):
        return f"renewal[{self.law}]"


@dataclass(frozen=True)
class SharpCutoff(FilterSpec):
    """Keep modes with ``mu >= threshold`` (closed threshold), drop the rest."""

    threshold: float
    kind = "cutoff"
    external_baseline = True

    def __post_init__(self):
        object.__setattr__(self, "threshold", _positive("threshold", self.threshold))

    def value(self, mu):
        arr = _check_mu(mu)
        out = (arr >= self.threshold).astype(float)
        return float(out) if np.ndim(mu) == 0 else out

    def to_dict(self):
        return {"kind": "cutoff", "threshold": self.threshold}

    def label(self):
        return f"cutoff(c={self.threshold:g})"


def filter_from_dict(spec: dict) -> FilterSpec:
    """Parse a filter object.

    Accepts ``{"kind": "ridge", "lambda": 1}``, ``{"kind": "cutoff",
    "threshold": 2}``, ``{"kind": "renewal", "law": {...}}`` or a bare law
    object, which is wrapped as a renewal filter.
    """
    if not isinstance(spec, dict):
        raise ConfigError("filter must be a JSON object", key="filters")
    kind = spec.get("kind")
    try:
        if kind == "ridge":
            if "lambda" not in spec:
                raise ConfigError("ridge filter is missing 'lambda'", key="lambda")
            return Ridge(spec["lambda"])
        if kind == "cutoff":
            if "threshold" not in spec:
                raise ConfigError("cutoff filter is missing 'threshold'", key="threshold")
            return SharpCutoff(spec["threshold"])
        if kind == "renewal":
            if "law" not in spec:
                raise ConfigError("renewal filter is missing 'law'", key="law")
            return Renewal(law_from_dict(spec["law"]))
    except ParameterError as exc:
        raise ConfigError(str(exc), key=kind) from exc
    return Renewal(law_from_dict(spec))


def filter_value(spec: FilterSpec, mu):
    return spec.value(mu)


def apply_filter(model: SpectralModel, spec: FilterSpec) -> np.ndarray:
    """Filtered estimator in the original basis; nullspace coordinates are 0."""
    g = np.asarray(spec.value(model.mu_eff), dtype=float)
    coords = np.where(model.nullspace, 0.0, g * model.w_star_tilde)
    return model.V @ coords


@dataclass(frozen=True)
class MismatchReport:
    lambda_weak: float
    lambda_strong: float
    relative_gap: float


def two_mode_mismatch(law: ResetLaw, mu_weak: float, mu_strong: float) -> MismatchReport:
    """Ridge penalties matching ``law`` separately on a weak and a strong mode."""
    if not 0 < mu_weak < mu_strong:
        raise ParameterError("need 0 < mu_weak < mu_strong")
    lw = float(law.effective_penalty(mu_weak))
    ls = float(law.effective_penalty(mu_strong))
    return MismatchReport(lw, ls, abs(lw - ls) / ls)


def filter_curve(spec: FilterSpec, mu_grid) -> np.ndarray:
    """Two-column array ``[mu, g]`` over a positive ascending grid."""
    grid = np.asarray(mu_grid, dtype=float).reshape(-1)
    if grid.size == 0 or np.any(grid <= 0):
        raise ParameterError("mu grid must be nonempty and positive")
    if np.any(np.diff(grid) < 0):
        raise ParameterError("mu grid must be sorted ascending")
    return np.column_stack([grid, np.asarray(spec.value(grid), dtype=float)])
