"""Exact simulation of gradient flow / OU dynamics under renewal resetting.

Between resets the eigen-coordinates evolve independently in drift and are
linear-Gaussian, so every transition here is sampled exactly from its
conditional law; there is no time-discretization error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, NumericalError, ParameterError
from .laws import ResetLaw
from .spectral import SpectralModel

__all__ = [
    "NoiseModel",
    "isotropic_noise",
    "noise_from_original",
    "zero_noise",
    "noise_diagonal",
    "ou_noise_covariance",
    "gradient_flow_state",
    "mean_transient",
    "ou_conditional_sample",
    "equilibrium_snapshot",
    "equilibrium_snapshots",
    "SnapshotBatch",
    "simulate_trajectory",
    "Trajectory",
    "empirical_moments",
    "Moments",
    "laplace_average_mean",
]

_CHUNK = 4096


@dataclass(frozen=True)
class NoiseModel:
    """Diffusion covariance expressed in the eigenbasis of ``H``."""

    sigma_tilde: np.ndarray
    isotropic: bool = False
    level: float | None = None

    def __post_init__(self):
        S = np.atleast_2d(np.asarray(self.sigma_tilde, dtype=float))
        if S.shape[0] != S.shape[1]:
            raise InputError("noise covariance must be square")
        if not np.all(np.isfinite(S)):
            raise InputError("noise covariance contains non-finite entries")
        if np.max(np.abs(S - S.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(S))):
            raise InputError("noise covariance must be symmetric")
        S = 0.5 * (S + S.T)
        w, U = np.linalg.eigh(S)
        if np.min(w) < -1e-10:
            raise InputError("noise covariance must be positive semidefinite")
        if np.min(w) < 0:
            S = (U * np.clip(w, 0.0, None)) @ U.T
        S.flags.writeable = False
        object.__setattr__(self, "sigma_tilde", S)

    @property
    def d(self) -> int:
        return self.sigma_tilde.shape[0]

    @property
    def diag(self) -> np.ndarray:
        return np.diag(self.sigma_tilde).copy()

    @property
    def is_zero(self) -> bool:
        return not np.any(self.sigma_tilde)

    @property
    def is_diagonal(self) -> bool:
        S = self.sigma_tilde
        return not np.any(S - np.diag(np.diag(S)))


def isotropic_noise(level: float, d: int) -> NoiseModel:
    """``Sigma_noise = level * I`` (identical in every orthonormal basis)."""
    if not level >= 0:
        raise ParameterError("noise level must be nonnegative")
    return NoiseModel(level * np.eye(d), isotropic=True, level=float(level))


def zero_noise(d: int) -> NoiseModel:
    return isotropic_noise(0.0, d)


def noise_from_original(sigma_noise, model: SpectralModel) -> NoiseModel:
    """Rotate an original-basis covariance into the model's eigenbasis."""
    S = np.asarray(sigma_noise, dtype=float)
    return NoiseModel(model.V.T @ S @ model.V)


def noise_diagonal(noise, d: int) -> np.ndarray:
    """Diagonal of the eigenbasis noise covariance from a model, scalar or vector."""
    if isinstance(noise, NoiseModel):
        out = noise.diag
    else:
        out = np.broadcast_to(np.asarray(noise, dtype=float), (d,)).copy()
    if out.shape != (d,):
        raise InputError(f"noise diagonal must have length {d}")
    if np.any(out < 0) or np.any(~np.isfinite(out)):
        raise InputError("noise variances must be finite and nonnegative")
    return out


def _one_minus_exp_over(s, a):
    """``(1 - exp(-s a)) / s`` with the ``a`` limit at ``s = 0``."""
    s = np.asarray(s, dtype=float)
    a = np.asarray(a, dtype=float)
    safe = np.where(s > 0, s, 1.0)
    return np.where(s > 0, -np.expm1(-s * a) / safe, a)


def ou_noise_covariance(model: SpectralModel, noise: NoiseModel, age):
    """Covariance of OU noise accumulated over ``age`` from a fresh start.

    Returns a ``(d, d)`` matrix for scalar ``age`` or ``(m, d, d)`` for an
    array of ages.
    """
    mu = model.mu_eff
    s = mu[:, None] + mu[None, :]
    a = np.asarray(age, dtype=float)
    return noise.sigma_tilde * _one_minus_exp_over(s, a[..., None, None])


def _flow(model: SpectralModel, ages):
    ages = np.asarray(ages, dtype=float)
    return -np.expm1(-np.multiply.outer(ages, model.mu_eff)) * model.w_star_tilde


def gradient_flow_state(model: SpectralModel, t: float) -> np.ndarray:
    """Gradient-flow iterate started at 0 after time ``t`` (eigen-coordinates)."""
    if not t >= 0:
        raise ParameterError("time must be nonnegative")
    return _flow(model, float(t))


def mean_transient(model: SpectralModel, r: float, t: float, m0) -> np.ndarray:
    """Mean of the Poisson-reset process at time ``t`` from mean ``m0``.

    ``m0`` and the result are eigen-coordinates.
    """
    if not r > 0:
        raise ParameterError("reset rate must be positive")
    if not t >= 0:
        raise ParameterError("time must be nonnegative")
    m0 = np.asarray(m0, dtype=float)
    rate = model.mu_eff + r
    decay = np.exp(-rate * t)
    return decay * m0 + (-np.expm1(-rate * t)) * model.b_tilde / rate


def _sym_sqrt_stack(C):
    w, U = np.linalg.eigh(C)
    scale = np.max(np.abs(w), axis=-1, keepdims=True)
    if np.any(w < -1e-10 * np.maximum(scale, 1.0)):
        raise NumericalError("conditional OU covariance is not positive semidefinite")
    root = np.sqrt(np.clip(w, 0.0, None))
    return (U * root[..., None, :]) @ np.swapaxes(U, -1, -2)


def _conditional(model, noise, ages, z):
    """Exact draws given ages ``(m,)`` and standard normals ``z`` ``(m, d)``."""
    mean = _flow(model, ages)
    if noise.is_zero:
        return mean
    if noise.is_diagonal:
        var = np.diag(noise.sigma_tilde) * _one_minus_exp_over(2 * model.mu_eff, ages[:, None])
        return mean + np.sqrt(var) * z
    out = np.empty_like(mean)
    for lo in range(0, ages.shape[0], _CHUNK):
        sl = slice(lo, lo + _CHUNK)
        root = _sym_sqrt_stack(ou_noise_covariance(model, noise, ages[sl]))
        out[sl] = mean[sl] + np.einsum("mij,mj->mi", root, z[sl])
    return out


def ou_conditional_sample(model: SpectralModel, noise: NoiseModel, age: float, rng) -> np.ndarray:
    """One exact draw of the state ``age`` time units after a reset."""
    if not age >= 0:
        raise ParameterError("age must be nonnegative")
    z = rng.standard_normal((1, model.d))
    return _conditional(model, noise, np.array([float(age)]), z)[0]


@dataclass(frozen=True)
class SnapshotBatch:
    samples: np.ndarray
    seed: int | None
    law: ResetLaw
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if s.shape[0] < 1 or not np.all(np.isfinite(s)):
            raise InputError("snapshot batch must hold at least one finite row")
        object.__setattr__(self, "samples", s)

    @property
    def m(self) -> int:
        return self.samples.shape[0]


def equilibrium_snapshot(model: SpectralModel, law: ResetLaw, noise: NoiseModel, rng) -> np.ndarray:
    """One state observed at an independent large time (eigen-coordinates)."""
    age = law.sample_age(rng)
    return ou_conditional_sample(model, noise, age, rng)


def equilibrium_snapshots(model: SpectralModel, law: ResetLaw, noise: NoiseModel, m: int,
                          seed: int | None = None, rng=None) -> SnapshotBatch:
    """``m`` i.i.d. equilibrium snapshots.

    Ages are drawn first, then all Gaussian innovations, so a batch depends
    only on ``(seed, m)``.
    """
    if m < 1:
        raise ParameterError("need at least one snapshot")
    if rng is None:
        rng = np.random.default_rng(seed)
    ages = np.asarray(law.sample_age(rng, size=m), dtype=float)
    z = rng.standard_normal((m, model.d))
    samples = _conditional(model, noise, ages, z)
    return SnapshotBatch(samples, seed, law, {"m": m, "mean_age": float(ages.mean())})


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    states_tilde: np.ndarray
    reset_times: np.ndarray
    law: ResetLaw


def simulate_trajectory(model: SpectralModel, law: ResetLaw, noise: NoiseModel,
                        horizon: float, dt: float, rng) -> Trajectory:
    """Sample a reset trajectory on the grid ``0, dt, 2 dt, ...`` up to ``horizon``.

    The process starts at 0 (a reset at time 0). Reset epochs are renewal
    times drawn from ``law`` and are recorded exactly, not snapped to the grid.
    """
    if not dt > 0:
        raise ParameterError("dt must be positive")
    if not horizon >= dt:
        raise ParameterError("horizon must be at least dt")
    n_steps = int(np.floor(horizon / dt + 1e-9))
    times = dt * np.arange(n_steps + 1)
    mu, w_star = model.mu_eff, model.w_star_tilde
    d = model.d

    def step_params(delta):
        decay = np.exp(-mu * delta)
        if noise.is_zero:
            root = None
        elif noise.is_diagonal:
            root = np.sqrt(np.diag(noise.sigma_tilde) * _one_minus_exp_over(2 * mu, delta))
        else:
            root = _sym_sqrt_stack(ou_noise_covariance(model, noise, delta))
        return decay, root

    def advance(x, params):
        decay, root = params
        x = decay * x + (1.0 - decay) * w_star
        if root is None:
            return x
        z = rng.standard_normal(d)
        return x + (root * z if root.ndim == 1 else root @ z)

    full = step_params(dt)
    states = np.zeros((n_steps + 1, d))
    resets = []
    next_reset = float(law.sample_interval(rng))
    x = np.zeros(d)
    for k in range(1, n_steps + 1):
        t0, t1 = times[k - 1], times[k]
        if next_reset > t1:
            x = advance(x, full)
        else:
            last = next_reset
            while next_reset <= t1:
                resets.append(next_reset)
                last = next_reset
                next_reset += float(law.sample_interval(rng))
            x = np.zeros(d)
            remaining = t1 - last
            if remaining > 0:
                x = advance(x, step_params(remaining))
        states[k] = x
    return Trajectory(times, model.to_original(states), states, np.asarray(resets), law)


@dataclass(frozen=True)
class Moments:
    mean: np.ndarray
    cov: np.ndarray
    se: np.ndarray
    cov_se: np.ndarray
    m: int


def empirical_moments(batch) -> Moments:
    """Unbiased mean and covariance with Monte Carlo standard errors.

    ``cov_se`` estimates the standard error of each covariance entry from the
    spread of the centered products.
    """
    x = batch.samples if isinstance(batch, SnapshotBatch) else np.atleast_2d(np.asarray(batch, float))
    m = x.shape[0]
    if m < 2:
        raise ParameterError("need at least two samples")
    mean = x.mean(axis=0)
    c = x - mean
    cov = c.T @ c / (m - 1)
    se = np.sqrt(np.diag(cov) / m)
    prod = c[:, :, None] * c[:, None, :]
    cov_se = prod.std(axis=0, ddof=1) / np.sqrt(m)
    return Moments(mean, cov, se, cov_se, m)


def laplace_average_mean(model: SpectralModel, r: float, rel_step: float = 1e-3,
                         cutoff: float = 1e-12) -> np.ndarray:
    """Trapezoidal quadrature of ``r * int exp(-r a) beta(a) da`` (original basis).

    The integral is truncated where ``exp(-r a) <= cutoff``; the step is
    ``rel_step / (r + max mu)`` so the fastest mode is resolved.
    """
    if not r > 0:
        raise ParameterError("reset rate must be positive")
    a_max = -np.log(cutoff) / r
    h = rel_step / (r + float(np.max(model.mu_eff, initial=0.0)))
    n = int(np.ceil(a_max / h))
    total = np.zeros(model.d)
    # chunked to bound memory on long grids
    edges = np.linspace(0.0, a_max, n + 1)
    for lo in range(0, n, 200_000):
        a = edges[lo:min(lo + 200_000, n) + 1]
        f = r * np.exp(-r * a)[:, None] * _flow(model, a)
        total += np.trapezoid(f, a, axis=0) if hasattr(np, "trapezoid") else np.trapz(f, a, axis=0)
    return model.to_original(total)
