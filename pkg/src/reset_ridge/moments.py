"""Closed-form stationary moments and risks of reset dynamics.

Covariances are returned in the eigenbasis of ``H`` (``*_tilde``) with
rotations to the original basis available on the result object. Risks are
modewise: ``mu`` curvatures, ``alpha = V^T beta0`` true-coefficient
coordinates, ``sigma_eta`` observation-noise std, and the diagonal of the
eigenbasis diffusion covariance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .dynamics import NoiseModel, noise_diagonal
from .errors import DomainError, InputError, ParameterError
from .laws import Deterministic, Exponential, Gamma, ResetLaw
from .spectral import SpectralModel

__all__ = [
    "CovarianceDecomposition",
    "RiskReport",
    "poisson_stationary_mean",
    "poisson_covariance",
    "lyapunov_residual",
    "renewal_stationary_mean",
    "renewal_covariance",
    "snr_ratio",
    "ridge_risk",
    "poisson_total_risk",
    "poisson_conditional_risk",
    "renewal_snapshot_risk",
    "optimal_poisson_rate",
    "OptimalRate",
    "reset_variance_peak",
    "reset_variance_term",
    "risk_landscape",
    "LandscapeCell",
    "landscape_laws",
]

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class CovarianceDecomposition:
    """Stationary covariance = accumulated diffusion noise + reset timing."""

    sgd_tilde: np.ndarray
    timing_tilde: np.ndarray
    V: np.ndarray
    noise_tilde: np.ndarray
    law: dict

    @property
    def total_tilde(self) -> np.ndarray:
        return self.sgd_tilde + self.timing_tilde

    def _rotate(self, A):
        return self.V @ A @ self.V.T

    @property
    def sgd(self) -> np.ndarray:
        return self._rotate(self.sgd_tilde)

    @property
    def timing(self) -> np.ndarray:
        return self._rotate(self.timing_tilde)

    @property
    def total(self) -> np.ndarray:
        return self._rotate(self.total_tilde)

    def to_dict(self) -> dict:
        return {
            "law": self.law,
            "sgd_tilde": self.sgd_tilde.tolist(),
            "timing_tilde": self.timing_tilde.tolist(),
            "total_tilde": self.total_tilde.tolist(),
            "total": self.total.tolist(),
        }


TERMS = ("bias_sq", "obs_var", "sgd_var", "timing_var")


@dataclass(frozen=True)
class RiskReport:
    """Per-mode risk terms; every term is nonnegative."""

    bias_sq: np.ndarray
    obs_var: np.ndarray
    sgd_var: np.ndarray
    timing_var: np.ndarray
    params: dict = field(default_factory=dict)

    @property
    def totals(self) -> dict:
        return {t: float(np.sum(getattr(self, t))) for t in TERMS}

    @property
    def per_mode_total(self) -> np.ndarray:
        return self.bias_sq + self.obs_var + self.sgd_var + self.timing_var

    @property
    def total(self) -> float:
        return float(sum(self.totals.values()))

    def to_dict(self) -> dict:
        out = {t: getattr(self, t).tolist() for t in TERMS}
        out["totals"] = self.totals
        out["total"] = self.total
        out["params"] = self.params
        return out


# -- Poisson resetting -------------------------------------------------------

def _rate(r):
    r = float(r)
    if not (r > 0 and math.isfinite(r)):
        raise ParameterError(f"reset rate must be positive and finite, got {r}")
    return r


def poisson_stationary_mean(model: SpectralModel, r: float) -> np.ndarray:
    """``(H + r I)^{-1} b``, the ridge estimator with penalty ``r``."""
    r = _rate(r)
    mu = model.mu_eff
    return model.V @ (model.b_tilde / (mu + r))


def poisson_covariance(model: SpectralModel, r: float, noise: NoiseModel) -> CovarianceDecomposition:
    """Stationary covariance of OU dynamics with Poisson resets to 0."""
    r = _rate(r)
    mu = model.mu_eff
    if noise.d != model.d:
        raise InputError("noise dimension does not match model")
    denom = mu[:, None] + mu[None, :] + r
    shifted = mu + r
    sgd = noise.sigma_tilde / denom
    bt = model.b_tilde
    timing = r * np.outer(bt / shifted, bt / shifted) / denom
    return CovarianceDecomposition(sgd, timing, model.V, noise.sigma_tilde,
                                   Exponential(r).to_dict())


def lyapunov_residual(model: SpectralModel, r: float, decomposition: CovarianceDecomposition,
                      mean=None, noise=None, basis: str = "eigen") -> float:
    """Max-norm residual of ``(H + r/2) S + S (H + r/2) - r m m^T - Sigma_noise``.

    ``mean`` defaults to the Poisson stationary mean and ``noise`` to the one
    stored on the decomposition. With ``basis="eigen"`` the equation is
    checked in eigen-coordinates, otherwise in the original basis.
    """
    r = _rate(r)
    m = poisson_stationary_mean(model, r) if mean is None else np.asarray(mean, dtype=float)
    Q = decomposition.noise_tilde if noise is None else (
        noise.sigma_tilde if isinstance(noise, NoiseModel) else np.asarray(noise, dtype=float))
    S = decomposition.total_tilde
    if basis == "eigen":
        m_t = model.to_eigen(m)
        A = np.diag(model.mu_eff + r / 2.0)
        R = A @ S + S @ A - r * np.outer(m_t, m_t) - Q
    else:
        V = model.V
        A = model.H + (r / 2.0) * np.eye(model.d)
        S_o = V @ S @ V.T
        R = A @ S_o + S_o @ A - r * np.outer(m, m) - V @ Q @ V.T
    return float(np.max(np.abs(R)))


def snr_ratio(model: SpectralModel, r: float, noise: NoiseModel, i: int) -> float:
    """Reset-to-diffusion variance ratio of mode ``i`` (``inf`` if no diffusion)."""
    r = _rate(r)
    s = float(noise.sigma_tilde[i, i])
    num = r * model.b_tilde[i] ** 2 / (model.mu_eff[i] + r) ** 2
    if s == 0:
        return math.inf
    return float(num / s)


# -- general renewal laws ----------------------------------------------------

def _pair_kernel(law: ResetLaw, s):
    """``g(s)/s`` with the ``E[A]`` limit at ``s = 0``."""
    pos = s > 0
    safe = np.where(pos, s, 1.0)
    return np.where(pos, np.asarray(law.filter(np.where(pos, s, 0.0))) / safe, law.mean_age)


def renewal_stationary_mean(model: SpectralModel, law: ResetLaw) -> np.ndarray:
    """Equilibrium-snapshot mean ``V diag(g(mu)) w_star_tilde``."""
    g = np.asarray(law.filter(model.mu_eff))
    return model.V @ (g * model.w_star_tilde)


def renewal_covariance(model: SpectralModel, law: ResetLaw, noise: NoiseModel) -> CovarianceDecomposition:
    """Equilibrium-snapshot covariance under a general renewal law."""
    if noise.d != model.d:
        raise InputError("noise dimension does not match model")
    mu = model.mu_eff
    s = mu[:, None] + mu[None, :]
    sgd = noise.sigma_tilde * _pair_kernel(law, s)
    h = np.asarray(law.age_residual(mu))
    h_pair = np.asarray(law.age_residual(s))
    w = model.w_star_tilde
    timing = np.outer(w, w) * (h_pair - np.outer(h, h))
    return CovarianceDecomposition(sgd, timing, model.V, noise.sigma_tilde, law.to_dict())


# -- risks -------------------------------------------------------------------

def _risk_inputs(mu, alpha, sigma_eta, noise=None):
    mu = np.asarray(mu, dtype=float).reshape(-1)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), mu.shape).astype(float)
    if np.any(mu < 0) or np.any(~np.isfinite(mu)):
        raise InputError("curvatures must be finite and nonnegative")
    if not (sigma_eta >= 0 and math.isfinite(sigma_eta)):
        raise ParameterError("sigma_eta must be finite and nonnegative")
    diag = None if noise is None else noise_diagonal(noise, mu.shape[0])
    return mu, alpha, float(sigma_eta), diag


def ridge_risk(mu, alpha, sigma_eta: float, lam: float) -> RiskReport:
    """Coefficient risk ``E ||w_ridge - beta0||^2`` of deterministic ridge."""
    mu, alpha, sig, _ = _risk_inputs(mu, alpha, sigma_eta)
    lam = float(lam)
    if not lam > 0:
        raise ParameterError("ridge penalty must be positive")
    shifted2 = (mu + lam) ** 2
    zeros = np.zeros_like(mu)
    return RiskReport(lam**2 * alpha**2 / shifted2, sig**2 * mu / shifted2, zeros, zeros.copy(),
                      {"lambda": lam, "sigma_eta": sig})


def reset_variance_term(mu, c, r):
    """Noise-averaged reset variance ``r c / ((mu + r)^2 (2 mu + r))`` of one mode."""
    mu = np.asarray(mu, dtype=float)
    r = np.asarray(r, dtype=float)
    return r * c / ((mu + r) ** 2 * (2 * mu + r))


def poisson_total_risk(mu, alpha, sigma_eta: float, noise, r: float) -> RiskReport:
    """Snapshot risk of Poisson resetting averaged over observation noise."""
    mu, alpha, sig, diag = _risk_inputs(mu, alpha, sigma_eta, noise)
    r = _rate(r)
    base = ridge_risk(mu, alpha, sig, r)
    sgd = diag / (2 * mu + r)
    timing = reset_variance_term(mu, mu**2 * alpha**2 + sig**2 * mu, r)
    return RiskReport(base.bias_sq, base.obs_var, sgd, timing,
                      {"law": Exponential(r).to_dict(), "sigma_eta": sig,
                       "noise_diag": diag.tolist(), "alpha": alpha.tolist()})


def poisson_conditional_risk(mu, b_tilde, alpha, noise, r: float) -> RiskReport:
    """Risk given a realized projected right-hand side ``b_tilde``.

    Only the algorithmic randomness is averaged, so ``obs_var`` is zero and
    the bias uses the realized stationary mean ``b_tilde / (mu + r)``.
    """
    mu, alpha, _, diag = _risk_inputs(mu, alpha, 0.0, noise)
    bt = np.broadcast_to(np.asarray(b_tilde, dtype=float), mu.shape).astype(float)
    r = _rate(r)
    bias = (bt / (mu + r) - alpha) ** 2
    sgd = diag / (2 * mu + r)
    timing = r * bt**2 / ((mu + r) ** 2 * (2 * mu + r))
    return RiskReport(bias, np.zeros_like(mu), sgd, timing,
                      {"law": Exponential(r).to_dict(), "b_tilde": bt.tolist(),
                       "noise_diag": diag.tolist(), "alpha": alpha.tolist()})


def renewal_snapshot_risk(mu, alpha, sigma_eta: float, noise, law: ResetLaw) -> RiskReport:
    """Equilibrium-snapshot risk under a renewal law, averaged over observation noise.

    A zero-curvature mode contributes ``alpha^2 + Sigma_ii E[A]``; with
    ``sigma_eta > 0`` the observation-noise factor ``sigma_eta^2 / mu`` has
    no value there and a :class:`DomainError` is raised.
    """
    mu, alpha, sig, diag = _risk_inputs(mu, alpha, sigma_eta, noise)
    null = mu == 0
    if np.any(null) and sig > 0:
        raise DomainError("observation-noise term is undefined on a zero-curvature mode")
    safe = np.where(null, 1.0, mu)
    h = np.asarray(law.age_residual(mu))
    g = np.asarray(law.filter(mu))
    h2 = np.asarray(law.age_residual(2 * mu))
    bias = h**2 * alpha**2
    obs = np.where(null, 0.0, sig**2 * g**2 / safe)
    sgd = diag * _pair_kernel(law, 2 * mu)
    timing = np.where(null, 0.0, (alpha**2 + sig**2 / safe) * (h2 - h**2))
    return RiskReport(bias, obs, sgd, np.clip(timing, 0.0, None),
                      {"law": law.to_dict(), "sigma_eta": sig,
                       "noise_diag": diag.tolist(), "alpha": alpha.tolist()})


# -- optimal Poisson rate ----------------------------------------------------

@dataclass(frozen=True)
class OptimalRate:
    r_star: float
    risk: float
    boundary: str | None
    grid_risk: np.ndarray

    @property
    def boundary_flag(self) -> bool:
        return self.boundary is not None


def optimal_poisson_rate(mu, alpha, sigma_eta: float, noise, r_grid, b_tilde=None,
                         xtol: float = 1e-8) -> OptimalRate:
    """Minimize total Poisson risk over ``r`` (grid search + golden section).

    With ``b_tilde`` given, the conditional risk for that realized dataset is
    minimized instead of the noise-averaged risk. ``boundary`` is ``"lower"``
    or ``"upper"`` when the grid minimum sits on an edge; ``r_star`` is then
    that grid edge.
    """
    grid = np.asarray(r_grid, dtype=float).reshape(-1)
    if grid.size == 0:
        raise ParameterError("rate grid is empty")
    if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ParameterError("rate grid must be positive and strictly increasing")

    if b_tilde is None:
        def risk(r):
            return poisson_total_risk(mu, alpha, sigma_eta, noise, r).total
    else:
        def risk(r):
            return poisson_conditional_risk(mu, b_tilde, alpha, noise, r).total

    values = np.array([risk(r) for r in grid])
    j = int(np.argmin(values))
    if j == 0 or j == grid.size - 1:
        return OptimalRate(float(grid[j]), float(values[j]),
                           "lower" if j == 0 else "upper", values)
    lo, mid, hi = np.log(grid[j - 1]), np.log(grid[j]), np.log(grid[j + 1])
    res = optimize.minimize_scalar(lambda x: risk(math.exp(x)), bracket=(lo, mid, hi),
                                   method="golden", tol=xtol)
    r_star = math.exp(res.x)
    best = risk(r_star)
    if best > values[j]:
        r_star, best = float(grid[j]), float(values[j])
    return OptimalRate(r_star, float(best), None, values)


def reset_variance_peak(mu_i: float) -> float:
    """Rate maximizing a mode's noise-averaged reset variance."""
    mu_i = float(mu_i)
    if not mu_i > 0:
        raise ParameterError("curvature must be positive")
    return mu_i * GOLDEN


# -- Fig.-3 style landscape --------------------------------------------------

@dataclass(frozen=True)
class LandscapeCell:
    mu_tau: float
    nu: float
    best_law: str
    gain: float
    risks: dict


def landscape_laws(k_values, tau: float = 1.0) -> dict:
    """Laws at common mean ``tau``: k=1 Poisson, finite k Erlang, inf periodic."""
    laws = {}
    for k in k_values:
        kf = float(k)
        if math.isinf(kf):
            laws["periodic"] = Deterministic(tau)
        elif kf == 1.0:
            laws["poisson"] = Exponential(1.0 / tau)
        else:
            laws[f"erlang-{k:g}" if isinstance(k, float) else f"erlang-{k}"] = Gamma(kf, tau)
    if "poisson" not in laws:
        raise ParameterError("k_values must include 1 (the Poisson reference)")
    return laws


def risk_landscape(k_values, mu_tau_grid, nu_grid, gain_threshold: float = 0.015,
                   tau: float = 1.0) -> list[LandscapeCell]:
    """Best reset law per ``(mu tau, nu)`` cell for a single mode.

    Each cell uses ``alpha = 1``, ``sigma_eta^2 / mu = nu^2 / 2`` and diffusion
    variance ``nu^2 / (2 tau)``. Gains below ``gain_threshold`` (relative to
    Poisson) are labelled ``"poisson"``. Cells are ordered mu_tau-major.
    """
    mu_tau_grid = np.asarray(mu_tau_grid, dtype=float).reshape(-1)
    nu_grid = np.asarray(nu_grid, dtype=float).reshape(-1)
    if mu_tau_grid.size == 0 or nu_grid.size == 0:
        raise ParameterError("landscape grids must be nonempty")
    if np.any(mu_tau_grid <= 0) or np.any(nu_grid < 0):
        raise ParameterError("need mu_tau > 0 and nu >= 0")
    laws = landscape_laws(k_values, tau)
    cells = []
    for mt in mu_tau_grid:
        mu = mt / tau
        for nu in nu_grid:
            sigma_eta = math.sqrt(mu * nu**2 / 2.0)
            diff = nu**2 / (2.0 * tau)
            risks = {name: renewal_snapshot_risk([mu], [1.0], sigma_eta, [diff], law).total
                     for name, law in laws.items()}
            base = risks["poisson"]
            name = min(risks, key=risks.get)
            gain = (base - risks[name]) / base if base > 0 else 0.0
            if gain < gain_threshold:
                name = "poisson"
            cells.append(LandscapeCell(float(mt), float(nu), name, float(gain), risks))
    return cells
