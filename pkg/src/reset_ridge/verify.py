"""Cross-module identity suite behind ``reset-ridge verify``.

Each check returns a :class:`CheckResult` with status ``PASS``, ``FAIL`` or
``WARN``. Deterministic identities either pass or fail. Monte Carlo checks
use a 3-SE band at the default sample size; with fewer samples the band is
widened to 4 SE and an exceedance is reported as ``WARN`` rather than
``FAIL``, since small batches make single-entry outliers routine.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .dynamics import (
    NoiseModel,
    empirical_moments,
    equilibrium_snapshots,
    isotropic_noise,
    laplace_average_mean,
)
from .laws import Deterministic, Exponential, Gamma
from .moments import (
    lyapunov_residual,
    poisson_covariance,
    poisson_stationary_mean,
    poisson_total_risk,
    renewal_covariance,
    renewal_snapshot_risk,
    renewal_stationary_mean,
    reset_variance_peak,
    reset_variance_term,
    ridge_risk,
)
from .spectral import DesignData, SpectralModel, build_spectral_model, ridge_closed_form

__all__ = ["CheckResult", "run_checks", "CHECKS", "DEFAULT_MC_SAMPLES", "mc_problem"]

DEFAULT_MC_SAMPLES = 100_000
PASS, FAIL, WARN = "PASS", "FAIL", "WARN"


@dataclass(frozen=True)
class CheckResult:
    name: str
    status: str
    value: float
    tolerance: float
    seconds: float = 0.0
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status != FAIL


def _random_design(rng, n, d):
    X = rng.standard_normal((n, d))
    beta = rng.standard_normal(d)
    return DesignData(X, X @ beta + 0.5 * rng.standard_normal(n))


def _status(value, tol):
    return PASS if value <= tol else FAIL


def check_ridge_identity(rng, **_):
    rates = np.logspace(-2, 2, 50)
    worst = 0.0
    for r in rates:
        model = build_spectral_model(_random_design(rng, 50, 10))
        diff = poisson_stationary_mean(model, r) - ridge_closed_form(model, r)
        worst = max(worst, float(np.max(np.abs(diff))))
    return worst, 1e-10, "max |m_inf - ridge| over 50 problems"


def check_laplace_average(rng, **_):
    model = build_spectral_model(_random_design(rng, 30, 5))
    r = 1.3
    quad = laplace_average_mean(model, r)
    exact = np.linalg.solve(model.H + r * np.eye(5), model.b)
    return float(np.max(np.abs(quad - exact))), 1e-6, "trapezoid vs (H+rI)^-1 b, d=5"


def check_lyapunov(rng, **_):
    worst = 0.0
    for _ in range(20):
        model = build_spectral_model(_random_design(rng, 12, 6))
        A = rng.standard_normal((6, 6))
        noise = NoiseModel(A @ A.T / 6)
        r = float(np.exp(rng.uniform(np.log(0.05), np.log(20))))
        dec = poisson_covariance(model, r, noise)
        worst = max(worst, lyapunov_residual(model, r, dec))
    return worst, 1e-10, "max-norm Lyapunov residual over 20 problems"


def check_renewal_vs_poisson(rng, **_):
    worst = 0.0
    for _ in range(20):
        model = build_spectral_model(_random_design(rng, 40, 5))
        A = rng.standard_normal((5, 5))
        noise = NoiseModel(A @ A.T / 5)
        r = float(np.exp(rng.uniform(np.log(0.1), np.log(50))))
        p = poisson_covariance(model, r, noise)
        q = renewal_covariance(model, Exponential(r), noise)
        worst = max(worst, float(np.max(np.abs(p.total_tilde - q.total_tilde))))
        alpha = rng.standard_normal(5)
        sig = float(rng.uniform(0, 2))
        rp = poisson_total_risk(model.mu, alpha, sig, noise, r).total
        rq = renewal_snapshot_risk(model.mu, alpha, sig, noise, Exponential(r)).total
        worst = max(worst, abs(rp - rq))
    return worst, 1e-12, "renewal(Exponential) vs Poisson covariance and risk"


def mc_problem(seed: int = 7):
    """Fixed three-mode problem: mu=(3,1,0.2), alpha=1, isotropic noise 0.5."""
    rng = np.random.default_rng(seed)
    V, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    mu = np.array([3.0, 1.0, 0.2])
    model = SpectralModel.from_spectrum(mu, mu * 1.0, V=V)
    return model, isotropic_noise(0.5, 3)


MC_LAWS = {"exponential": Exponential(1.0), "gamma-3": Gamma(3.0, 1.0),
           "deterministic": Deterministic(1.0)}


def mc_zscores(law, m, seed):
    """Largest |z| of exact vs empirical mean and covariance (original basis)."""
    model, noise = mc_problem()
    batch = equilibrium_snapshots(model, law, noise, m, seed=seed)
    emp = empirical_moments(model.to_original(batch.samples))
    mean = renewal_stationary_mean(model, law)
    cov = renewal_covariance(model, law, noise).total
    z_mean = np.abs(emp.mean - mean) / emp.se
    z_cov = np.abs(emp.cov - cov) / emp.cov_se
    return float(max(z_mean.max(), z_cov.max()))


def check_monte_carlo(rng, mc_samples=DEFAULT_MC_SAMPLES, seed=0, **_):
    worst = 0.0
    for i, law in enumerate(MC_LAWS.values()):
        worst = max(worst, mc_zscores(law, mc_samples, seed + i))
    return worst, 3.0, f"max |z| over 3 laws, {mc_samples} snapshots"


def check_reset_peak(rng, **_):
    worst = 0.0
    for mu in (0.1, 1.0, 10.0):
        grid = np.logspace(-3, 3, 100_001) * mu
        f = reset_variance_term(mu, 1.0, grid)
        arg = grid[int(np.argmax(f))]
        worst = max(worst, abs(arg / reset_variance_peak(mu) - 1))
    return worst, 1e-3, "grid argmax vs mu (sqrt5 - 1)/2"


def check_variance_tax(rng, **_):
    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(1, 8))
        mu = np.exp(rng.uniform(-3, 3, d))
        alpha = rng.standard_normal(d)
        sig = float(rng.uniform(0, 2))
        noise = rng.uniform(0, 2, d) * (rng.random() < 0.7)
        r = float(np.exp(rng.uniform(-4, 4)))
        gap = poisson_total_risk(mu, alpha, sig, noise, r).total - ridge_risk(mu, alpha, sig, r).total
        worst = max(worst, -gap)
    return worst, 1e-12, "max (ridge - Poisson) risk over 100 configs"


def check_mismatch(rng, **_):
    mu = np.logspace(-2, 2, 200)
    lam = Exponential(1.7).effective_penalty(mu)
    spread = float(np.max(np.abs(lam - 1.7)))
    gaps = []
    for law in (Gamma(3.0, 1.0), Deterministic(1.0)):
        lw, ls = law.effective_penalty(1.0), law.effective_penalty(10.0)
        gaps.append(abs(lw - ls) / ls)
    # report the larger of the constancy error and the shortfall below 5%
    value = max(spread, max(0.0, 0.05 - min(gaps)))
    return value, 1e-12, f"exponential spread {spread:.1e}; min non-exp gap {min(gaps):.3f}"


CHECKS = {
    "ridge_identity": check_ridge_identity,
    "laplace_average": check_laplace_average,
    "lyapunov_residual": check_lyapunov,
    "renewal_vs_poisson": check_renewal_vs_poisson,
    "monte_carlo_moments": check_monte_carlo,
    "reset_variance_peak": check_reset_peak,
    "variance_tax": check_variance_tax,
    "exponential_uniqueness": check_mismatch,
}


def run_checks(seed: int = 42, mc_samples: int = DEFAULT_MC_SAMPLES, names=None) -> list[CheckResult]:
    """Run the suite; every check draws from its own seeded stream."""
    results = []
    for i, (name, fn) in enumerate(CHECKS.items()):
        if names is not None and name not in names:
            continue
        rng = np.random.default_rng([seed, i])
        t0 = time.perf_counter()
        value, tol, detail = fn(rng, mc_samples=mc_samples, seed=seed)
        status = _status(value, tol)
        if name == "monte_carlo_moments" and mc_samples < DEFAULT_MC_SAMPLES:
            tol = 4.0
            status = PASS if value <= tol else WARN
        results.append(CheckResult(name, status, float(value), tol,
                                   time.perf_counter() - t0, detail))
    return results


def format_table(results) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  status  {'value':>10}  {'tol':>8}  detail"]
    for r in results:
        val = r.value if math.isfinite(r.value) else float("inf")
        lines.append(f"{r.name:<{width}}  {r.status:<6}  {val:10.3e}  {r.tolerance:8.1e}  {r.detail}")
    return "\n".join(lines)
