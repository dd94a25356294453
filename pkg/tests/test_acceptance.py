"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` or directly as a script
(``python tests/test_acceptance.py``). The two full experiment reproductions
are marked ``slow``; deselect them with ``-m "not slow"``.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy import integrate, optimize

from reset_ridge.cli import main as cli_main
from reset_ridge.dynamics import NoiseModel, empirical_moments, equilibrium_snapshots, isotropic_noise
from reset_ridge.experiments import BlockConfig, SpikedConfig, run_sweep
from reset_ridge.laws import Deterministic, Exponential, Gamma
from reset_ridge.moments import (
    poisson_covariance,
    poisson_stationary_mean,
    poisson_total_risk,
    renewal_covariance,
    renewal_snapshot_risk,
    renewal_stationary_mean,
    reset_variance_term,
    ridge_risk,
    risk_landscape,
)
from reset_ridge.spectral import DesignData, SpectralModel, build_spectral_model, ridge_closed_form


@pytest.fixture
def report(capsys):
    """Print one result line to the terminal (bypassing capture), then assert."""

    def _report(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, f"criterion {n}: {detail}"

    return _report


def _design(rng, n, d):
    X = rng.standard_normal((n, d))
    return DesignData(X, X @ rng.standard_normal(d) + 0.5 * rng.standard_normal(n))


def _random_noise(rng, d):
    A = rng.standard_normal((d, d))
    return NoiseModel(A @ A.T / d)


def test_c01_ridge_identity(report):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for r in np.logspace(-2, 2, 50):
        model = build_spectral_model(_design(rng, 50, 10))
        H, b = model.H, model.b
        oracle = np.linalg.solve(H + r * np.eye(10), b)
        worst = max(worst, np.max(np.abs(poisson_stationary_mean(model, r) - oracle)),
                    np.max(np.abs(ridge_closed_form(model, r) - oracle)))
    dt = time.perf_counter() - t0
    report(1, worst <= 1e-10 and dt < 1.0, f"max |m_inf - ridge| = {worst:.2e} (tol 1e-10), {dt:.2f}s")


def test_c02_laplace_average(report):
    rng = np.random.default_rng(102)
    model = build_spectral_model(_design(rng, 30, 5))
    r = 0.7
    H, b = model.H, model.b
    evals, evecs = np.linalg.eigh(H)
    t0 = time.perf_counter()

    def integrand(a):
        # gradient flow from zero: beta(a) = (I - exp(-H a)) H^+ b on the range of H
        decay = evecs @ np.diag(-np.expm1(-evals * a) / evals) @ evecs.T
        return r * math.exp(-r * a) * (decay @ b)

    quad, _ = integrate.quad_vec(integrand, 0.0, np.inf, epsabs=1e-13, epsrel=1e-12)
    dt = time.perf_counter() - t0
    err = float(np.max(np.abs(quad - np.linalg.solve(H + r * np.eye(5), b))))
    lib = poisson_stationary_mean(model, r)
    err = max(err, float(np.max(np.abs(quad - lib))))
    report(2, err <= 1e-6 and dt < 1.0, f"quadrature vs (H+rI)^-1 b: {err:.2e} (tol 1e-6), {dt:.2f}s")


def test_c03_lyapunov_residual(report):
    rng = np.random.default_rng(103)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        model = build_spectral_model(_design(rng, 12, 6))
        noise = _random_noise(rng, 6)
        r = float(np.exp(rng.uniform(math.log(0.05), math.log(20))))
        S = poisson_covariance(model, r, noise).total
        H, b = model.H, model.b
        Q = model.V @ noise.sigma_tilde @ model.V.T
        m = np.linalg.solve(H + r * np.eye(6), b)
        M = S + np.outer(m, m)
        # stationary second-moment balance: drift + reset loss + diffusion
        R = -(H @ M + M @ H) + np.outer(b, m) + np.outer(m, b) + Q - r * M
        worst = max(worst, float(np.max(np.abs(R))) / (1.0 + np.max(np.abs(Q))))
    dt = time.perf_counter() - t0
    report(3, worst <= 1e-10 and dt < 1.0, f"max Lyapunov residual = {worst:.2e} (tol 1e-10), {dt:.2f}s")


def test_c04_renewal_poisson_consistency(report):
    rng = np.random.default_rng(104)
    cov_gap = risk_gap = 0.0
    for _ in range(20):
        d = int(rng.integers(1, 7))
        model = build_spectral_model(_design(rng, 40, d))
        noise = _random_noise(rng, d)
        r = float(np.exp(rng.uniform(math.log(0.1), math.log(50))))
        p = poisson_covariance(model, r, noise)
        q = renewal_covariance(model, Exponential(r), noise)
        cov_gap = max(cov_gap, float(np.max(np.abs(p.total - q.total))),
                      float(np.max(np.abs(p.sgd_tilde - q.sgd_tilde))),
                      float(np.max(np.abs(p.timing_tilde - q.timing_tilde))))
        alpha = rng.standard_normal(d)
        sig = float(rng.uniform(0, 2))
        diag = np.diag(noise.sigma_tilde)
        a = poisson_total_risk(model.mu, alpha, sig, diag, r).total
        b = renewal_snapshot_risk(model.mu, alpha, sig, diag, Exponential(r)).total
        risk_gap = max(risk_gap, abs(a - b))
    ok = cov_gap <= 1e-12 and risk_gap <= 1e-12
    report(4, ok, f"covariance gap {cov_gap:.2e}, risk gap {risk_gap:.2e} (tol 1e-12)")


def test_c05_monte_carlo_moments(report):
    rng = np.random.default_rng(105)
    V, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    mu = np.array([3.0, 1.0, 0.2])
    model = SpectralModel.from_spectrum(mu, mu, V=V)  # alpha = w* = 1 per mode
    noise = isotropic_noise(0.5, 3)
    t0 = time.perf_counter()
    worst, fails = 0.0, []
    for i, law in enumerate([Exponential(1.0), Gamma(3.0, 1.0), Deterministic(1.0)]):
        batch = equilibrium_snapshots(model, law, noise, 100_000, seed=1050 + i)
        emp = empirical_moments(model.to_original(batch.samples))
        z_mean = np.abs(emp.mean - renewal_stationary_mean(model, law)) / emp.se
        z_cov = np.abs(emp.cov - renewal_covariance(model, law, noise).total) / emp.cov_se
        z = max(z_mean.max(), z_cov.max())
        worst = max(worst, z)
        if z > 3:
            fails.append(law.kind)
    dt = time.perf_counter() - t0
    ok = not fails and dt < 30
    report(5, ok, f"max |z| = {worst:.2f} over mean+cov of 3 laws (tol 3 SE), {dt:.1f}s")


def test_c06_reset_variance_peak(report):
    worst = 0.0
    for mu in (0.1, 1.0, 10.0):
        res = optimize.minimize_scalar(lambda lr: -reset_variance_term(mu, 1.0, math.exp(lr)),
                                       bracket=(math.log(mu) - 3, math.log(mu) + 3),
                                       method="brent", tol=1e-12)
        worst = max(worst, abs(math.exp(res.x) / (mu * (math.sqrt(5) - 1) / 2) - 1))
    report(6, worst <= 1e-3, f"max relative argmax error = {worst:.2e} (tol 1e-3)")


def test_c07_variance_tax(report):
    rng = np.random.default_rng(107)
    worst = -np.inf
    for _ in range(100):
        d = int(rng.integers(1, 8))
        mu = np.exp(rng.uniform(-3, 3, d))
        alpha = rng.standard_normal(d)
        sig = float(rng.uniform(0, 2))
        diff = rng.uniform(0, 2, d) * (rng.random() < 0.7)
        r = float(np.exp(rng.uniform(-4, 4)))
        gap = poisson_total_risk(mu, alpha, sig, diff, r).total - ridge_risk(mu, alpha, sig, r).total
        worst = max(worst, -gap)
    report(7, worst <= 1e-12, f"max (ridge - Poisson) risk = {worst:.2e} (tol 1e-12)")


def test_c08_exponential_uniqueness(report):
    tau = 1.0
    mu = np.logspace(-2, 2, 400) / tau
    spread = float(np.max(np.abs(Exponential(1 / tau).effective_penalty(mu) - 1 / tau)))
    gaps = {}
    for law in (Gamma(3.0, tau), Deterministic(tau)):
        lw, ls = law.effective_penalty(1.0 / tau), law.effective_penalty(10.0 / tau)
        gaps[law.kind] = abs(lw - ls) / ls
    ok = spread <= 1e-12 and min(gaps.values()) > 0.05
    report(8, ok, f"exponential spread {spread:.1e}; gaps "
                  + ", ".join(f"{k} {v:.1%}" for k, v in gaps.items()) + " (need > 5%)")


def test_c09_landscape_regimes(report):
    t0 = time.perf_counter()
    nu_big = 2.0
    cells = risk_landscape([1, 2, 3, 5, 10, math.inf], [0.25, 0.5, 1.0, 5.0], [0.1, nu_big])
    dt = time.perf_counter() - t0
    by = {(c.mu_tau, c.nu): c for c in cells}
    quiet = by[(5.0, 0.1)]
    loud = [c for c in cells if c.mu_tau <= 1 and c.nu >= 2 and c.best_law == "periodic"
            and c.gain > 0.015]
    ok = quiet.best_law == "poisson" and bool(loud) and dt < 10
    best = max(loud, key=lambda c: c.gain) if loud else None
    detail = (f"(5, 0.1) -> {quiet.best_law}; nu={nu_big:g}, mu_tau<=1 periodic cells: {len(loud)}"
              + (f", best gain {best.gain:.1%} at mu_tau={best.mu_tau:g}" if best else "")
              + f", {dt:.2f}s")
    report(9, ok, detail)


def _within(value, target, se):
    return abs(value - target) <= 3 * se


@pytest.mark.slow
def test_c10_spiked_gamma_1_5(report):
    reference = {"periodic": (3.108, 0.077), "erlang-3": (1.938, 0.045), "cutoff": (8.046, 0.406)}

    def check(cfg):
        res = run_sweep(cfg, values=[1.5])[0]
        ok = _within(res.mean_mse["ridge"], 2.322, 0.023)
        ok &= all(_within(res.gain_pct[m], g, se) for m, (g, se) in reference.items())
        return ok, res

    t0 = time.perf_counter()
    cfg = SpikedConfig()
    ok, res = check(cfg)
    label = "unnormalized"
    if not ok:
        # same filters tuned on H/n: equivalent to scaling every grid point by n
        n = cfg.n_train
        ok, res = check(replace(cfg, grid_lo=cfg.grid_lo * n, grid_hi=cfg.grid_hi * n))
        label = "normalized (unnormalized failed)"
    dt = time.perf_counter() - t0
    detail = (f"[{label}] ridge MSE {res.mean_mse['ridge']:.3f} (2.322 +- 0.069); "
              + "; ".join(f"{m} {res.gain_pct[m]:.3f}% (target {g} +- {3 * se:.3f})"
                          for m, (g, se) in reference.items()) + f"; {dt:.0f}s")
    report(10, ok, detail)


@pytest.mark.slow
def test_c11_block_b8(report):
    reference = {"periodic": (3.206, 0.124), "erlang-5": (2.398, 0.098),
             "erlang-2": (1.300, 0.063), "cutoff": (10.999, 0.667)}
    t0 = time.perf_counter()
    res = run_sweep(BlockConfig(), values=[8])[0]
    dt = time.perf_counter() - t0
    g = res.gain_pct
    bands = {m: _within(g[m], t, se) for m, (t, se) in reference.items()}
    order = g["periodic"] > g["erlang-5"] > g["erlang-2"] > 0
    detail = ("; ".join(f"{m} {g[m]:.3f}% (target {t} +- {3 * se:.3f}){'' if bands[m] else ' OUT'}"
                        for m, (t, se) in reference.items())
              + f"; ordering {'holds' if order else 'violated'}; {dt:.0f}s")
    report(11, all(bands.values()) and order, detail)


def test_c12_thread_determinism(tmp_path, report):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"experiment": "block", "sweep": [2, 8], "trials": 12, "grid_size": 30}')
    outputs = {}
    for threads in ("1", "4"):
        out = tmp_path / f"t{threads}"
        code = cli_main(["experiment", "--config", str(cfg), "--out", str(out), "--seed", "2024",
                         "--threads", threads, "--detail"])
        assert code == 0
        outputs[threads] = [(out / f).read_bytes()
                            for f in ("sweep.csv", "sweep_detail.csv", "sweep.json")]
    same = outputs["1"] == outputs["4"]
    report(12, same, "sweep.csv, sweep_detail.csv and sweep.json byte-identical for "
                     "--threads 1 vs 4" if same else "outputs differ between thread counts")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
