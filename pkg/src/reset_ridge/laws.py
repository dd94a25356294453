"""Reset-interval laws and their equilibrium-age transforms.

For a reset interval ``S`` with mean ``E[S]`` the equilibrium age ``A`` has
density ``P(S > u) / E[S]``. Its Laplace transform

    h(mu) = E[exp(-mu A)] = (1 - L_S(mu)) / (mu E[S])

is the fraction of the min-norm OLS coordinate *not* recovered in a mode of
curvature ``mu``; the induced spectral filter is ``g = 1 - h``.

All transforms accept scalars or arrays of ``mu`` and return the same shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, ParameterError

__all__ = [
    "ResetLaw",
    "Exponential",
    "Gamma",
    "Deterministic",
    "law_from_dict",
    "laplace_S",
    "age_residual_h",
    "filter_g",
    "effective_penalty",
    "sample_interval",
    "sample_equilibrium_age",
    "admissibility_check",
    "AdmissibilityReport",
]

# mu * E[S] below this uses the second-order age-moment expansion of h
TAYLOR_CUTOFF = 1e-6
# mu * E[S] below this is treated as exactly zero curvature
ZERO_CUTOFF = 1e-12


def _positive(name, value):
    value = float(value)
    if not (value > 0 and math.isfinite(value)):
        raise ParameterError(f"{name} must be positive and finite, got {value}")
    return value


def _mu_array(mu):
    arr = np.asarray(mu, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise ParameterError("curvature mu must be finite and nonnegative")
    return arr


def _out(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


class ResetLaw:
    """Common transform machinery; subclasses provide the law specifics."""

    kind: str

    # -- law specifics -------------------------------------------------------
    def mean_interval(self) -> float:
        raise NotImplementedError

    def raw_moment(self, order: int) -> float:
        """``E[S^order]`` for order 1, 2 or 3."""
        raise NotImplementedError

    def _laplace(self, mu):
        raise NotImplementedError

    def _one_minus_laplace(self, mu):
        return 1.0 - self._laplace(mu)

    def sample_interval(self, rng, size=None):
        raise NotImplementedError

    def sample_age(self, rng, size=None):
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    # -- shared --------------------------------------------------------------
    @property
    def mean_age(self) -> float:
        """``E[A] = E[S^2] / (2 E[S])``."""
        return self.raw_moment(2) / (2.0 * self.mean_interval())

    @property
    def second_age_moment(self) -> float:
        """``E[A^2] = E[S^3] / (3 E[S])``."""
        return self.raw_moment(3) / (3.0 * self.mean_interval())

    def laplace(self, mu):
        arr = _mu_array(mu)
        return _out(self._laplace(arr), mu)

    def age_residual(self, mu):
        arr = _mu_array(mu)
        tau = self.mean_interval()
        x = arr * tau
        zero = x < ZERO_CUTOFF
        small = (x < TAYLOR_CUTOFF) & ~zero
        safe = np.where(zero | small, 1.0 / tau, arr)
        h = self._one_minus_laplace(safe) / (safe * tau)
        taylor = 1.0 - arr * self.mean_age + 0.5 * arr**2 * self.second_age_moment
        h = np.where(small, taylor, h)
        h = np.where(zero, 1.0, h)
        return _out(h, mu)

    def filter(self, mu):
        arr = _mu_array(mu)
        tau = self.mean_interval()
        x = arr * tau
        zero = x < ZERO_CUTOFF
        small = (x < TAYLOR_CUTOFF) & ~zero
        # small-mu branch evaluated directly to avoid 1 - (1 - eps)
        taylor = arr * self.mean_age - 0.5 * arr**2 * self.second_age_moment
        g = 1.0 - np.asarray(self.age_residual(arr))
        g = np.where(small, taylor, g)
        g = np.where(zero, 0.0, g)
        return _out(g, mu)

    def effective_penalty(self, mu):
        """Ridge penalty reproducing this law's shrinkage at curvature ``mu``."""
        arr = _mu_array(mu)
        g = np.asarray(self.filter(arr))
        if np.any(g <= 0):
            raise DomainError("effective penalty undefined where the filter vanishes (mu = 0)")
        h = np.asarray(self.age_residual(arr))
        return _out(arr * h / g, mu)

    def __str__(self):
        params = ", ".join(f"{k}={v:g}" for k, v in self.to_dict().items() if k != "kind")
        return f"{self.kind}({params})"


@dataclass(frozen=True)
class Exponential(ResetLaw):
    """Poisson resetting at ``rate``; memoryless, age law equals interval law."""

    rate: float
    kind = "exponential"

    def __post_init__(self):
        object.__setattr__(self, "rate", _positive("rate", self.rate))

    def mean_interval(self):
        return 1.0 / self.rate

    def raw_moment(self, order):
        return math.factorial(order) / self.rate**order

    def _laplace(self, mu):
        return self.rate / (self.rate + mu)

    def _one_minus_laplace(self, mu):
        return mu / (self.rate + mu)

    # the ridge filter is exact here; closed forms avoid 1 - h round-off
    def age_residual(self, mu):
        arr = _mu_array(mu)
        return _out(self.rate / (self.rate + arr), mu)

    def filter(self, mu):
        arr = _mu_array(mu)
        return _out(arr / (self.rate + arr), mu)

    def sample_interval(self, rng, size=None):
        return rng.exponential(1.0 / self.rate, size=size)

    def sample_age(self, rng, size=None):
        return rng.exponential(1.0 / self.rate, size=size)

    def to_dict(self):
        return {"kind": self.kind, "rate": self.rate}


@dataclass(frozen=True)
class Gamma(ResetLaw):
    """Gamma intervals with ``shape`` k and ``mean`` tau (scale tau / k)."""

    shape: float
    mean: float
    kind = "gamma"

    def __post_init__(self):
        object.__setattr__(self, "shape", _positive("shape", self.shape))
        object.__setattr__(self, "mean", _positive("mean", self.mean))

    @property
    def scale(self):
        return self.mean / self.shape

    def mean_interval(self):
        return self.mean

    def raw_moment(self, order):
        k, theta = self.shape, self.scale
        return theta**order * math.prod(k + j for j in range(order))

    def _laplace(self, mu):
        return np.exp(-self.shape * np.log1p(self.scale * mu))

    def _one_minus_laplace(self, mu):
        return -np.expm1(-self.shape * np.log1p(self.scale * mu))

    # shape 1 is the exponential law; use its rational forms verbatim
    def age_residual(self, mu):
        if self.shape != 1.0:
            return super().age_residual(mu)
        arr = _mu_array(mu)
        rate = 1.0 / self.mean
        return _out(rate / (rate + arr), mu)

    def filter(self, mu):
        if self.shape != 1.0:
            return super().filter(mu)
        arr = _mu_array(mu)
        return _out(arr / (1.0 / self.mean + arr), mu)

    def sample_interval(self, rng, size=None):
        return rng.gamma(self.shape, self.scale, size=size)

    def sample_age(self, rng, size=None):
        # uniform fraction of a length-biased interval; length bias maps
        # Gamma(k, theta) to Gamma(k + 1, theta)
        biased = rng.gamma(self.shape + 1.0, self.scale, size=size)
        return rng.uniform(0.0, 1.0, size=size) * biased

    def to_dict(self):
        return {"kind": self.kind, "shape": self.shape, "mean": self.mean}


@dataclass(frozen=True)
class Deterministic(ResetLaw):
    """Periodic resetting every ``period``; the age is uniform on a cycle."""

    period: float
    kind = "deterministic"

    def __post_init__(self):
        object.__setattr__(self, "period", _positive("period", self.period))

    def mean_interval(self):
        return self.period

    def raw_moment(self, order):
        return self.period**order

    def _laplace(self, mu):
        return np.exp(-mu * self.period)

    def _one_minus_laplace(self, mu):
        return -np.expm1(-mu * self.period)

    def sample_interval(self, rng, size=None):
        if size is None:
            return self.period
        return np.full(size, self.period)

    def sample_age(self, rng, size=None):
        return rng.uniform(0.0, self.period, size=size)

    def to_dict(self):
        return {"kind": self.kind, "period": self.period}


_LAW_FIELDS = {
    "exponential": (Exponential, ("rate",)),
    "gamma": (Gamma, ("shape", "mean")),
    "deterministic": (Deterministic, ("period",)),
}


def law_from_dict(spec: dict) -> ResetLaw:
    """Parse ``{"kind": "gamma", "shape": 3, "mean": 1.0}`` and friends."""
    if not isinstance(spec, dict):
        raise ConfigError("reset law must be a JSON object", key="law")
    kind = spec.get("kind")
    if kind not in _LAW_FIELDS:
        raise ConfigError(
            f"unknown law kind {kind!r}; expected one of {sorted(_LAW_FIELDS)}", key="kind"
        )
    cls, fields = _LAW_FIELDS[kind]
    missing = [f for f in fields if f not in spec]
    if missing:
        raise ConfigError(f"{kind} law is missing {missing[0]!r}", key=missing[0])
    extra = sorted(set(spec) - set(fields) - {"kind"})
    if extra:
        raise ConfigError(f"unexpected key {extra[0]!r} for {kind} law", key=extra[0])
    try:
        return cls(*(spec[f] for f in fields))
    except (ParameterError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc), key=fields[0]) from exc


# functional aliases ---------------------------------------------------------

def laplace_S(law: ResetLaw, mu):
    return law.laplace(mu)


def age_residual_h(law: ResetLaw, mu):
    return law.age_residual(mu)


def filter_g(law: ResetLaw, mu):
    return law.filter(mu)


def effective_penalty(law: ResetLaw, mu):
    return law.effective_penalty(mu)


def sample_interval(law: ResetLaw, rng, size=None):
    return law.sample_interval(rng, size)


def sample_equilibrium_age(law: ResetLaw, rng, size=None):
    return law.sample_age(rng, size)


@dataclass(frozen=True)
class AdmissibilityReport:
    """Per-check outcome; ``worst`` is the largest violation seen (0 if none)."""

    law: ResetLaw
    checks: dict

    @property
    def passed(self) -> bool:
        return all(ok for ok, _ in self.checks.values())


def admissibility_check(law: ResetLaw, mu_grid) -> AdmissibilityReport:
    """Check necessary conditions for a renewal-induced filter on a grid.

    These are the bounds and monotonicity of ``h`` and ``g`` plus the
    ``(mu tau)^{-1}`` residual tail at high curvature (``mu tau >= 100``).
    A sharp cutoff is never admissible and is not accepted here.
    """
    grid = np.asarray(mu_grid, dtype=float).reshape(-1)
    if grid.size == 0 or np.any(grid <= 0) or np.any(~np.isfinite(grid)):
        raise ParameterError("mu_grid must be nonempty, positive and finite")
    if np.any(np.diff(grid) < 0):
        raise ParameterError("mu_grid must be sorted ascending")
    h = np.asarray(law.age_residual(grid))
    g = np.asarray(law.filter(grid))
    tau = law.mean_interval()
    eps = 1e-14

    def report(violation):
        worst = float(max(np.max(violation, initial=0.0), 0.0))
        return worst <= eps, worst

    checks = {
        "h_in_unit_interval": report(np.maximum(-h, h - 1.0)),
        "h_nonincreasing": report(np.diff(h)),
        "g_nondecreasing": report(-np.diff(g)),
        "g_nonnegative": report(np.array([-g[0]])),
    }
    tail = grid * tau >= 100
    if np.any(tail):
        bound = (1.0 + 0.01) / (grid[tail] * tau)
        ok, worst = report((1.0 - g[tail]) - bound)
        checks["high_curvature_tail"] = (ok, worst)
    else:
        checks["high_curvature_tail"] = (True, 0.0)
    return AdmissibilityReport(law=law, checks=checks)
