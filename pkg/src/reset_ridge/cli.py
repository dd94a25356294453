"""``reset-ridge`` command-line entry point.

Every subcommand reads an optional JSON config, writes CSV/JSON into
``--out`` and returns exit code 0 on success, 1 when a verification check
fails and 2 on usage or configuration errors. Config schemas are listed in
the README.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import (
    NoiseModel,
    empirical_moments,
    equilibrium_snapshots,
    isotropic_noise,
    simulate_trajectory,
    zero_noise,
)
from .errors import ConfigError, ResetRidgeError
from .experiments import DEFAULT_SEED, config_from_dict, config_to_dict, run_sweep
from .filters import filter_curve, filter_from_dict, two_mode_mismatch
from .io import load_json_config, write_csv, write_json
from .laws import Exponential, law_from_dict
from .moments import (
    TERMS,
    optimal_poisson_rate,
    poisson_conditional_risk,
    poisson_covariance,
    poisson_stationary_mean,
    poisson_total_risk,
    renewal_covariance,
    renewal_snapshot_risk,
    renewal_stationary_mean,
    ridge_risk,
    risk_landscape,
)
from .spectral import SpectralModel, build_spectral_model, load_design_csv
from .verify import CHECKS, DEFAULT_MC_SAMPLES, FAIL, format_table, run_checks

log = logging.getLogger("reset_ridge")

SEED_ENV = "RESET_RIDGE_SEED"
MAX_SEED = 2**64 - 1


# -- config helpers ----------------------------------------------------------

def _get(cfg, key, default=None, required=False):
    if key not in cfg:
        if required:
            raise ConfigError(f"missing required key {key!r}", key=key)
        return default
    return cfg[key]


def _floats(value, key):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key!r} must be numeric", key=key) from exc
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{key!r} must be finite", key=key)
    return arr


def parse_grid(value, key) -> np.ndarray:
    """A list of values or ``{"lo", "hi", "n", "scale": "log"|"linear"}``."""
    if isinstance(value, dict):
        try:
            lo, hi, n = float(value["lo"]), float(value["hi"]), int(value["n"])
        except KeyError as exc:
            raise ConfigError(f"grid {key!r} is missing {exc.args[0]!r}", key=key) from exc
        scale = value.get("scale", "log")
        if n < 1 or not lo < hi or (scale == "log" and lo <= 0):
            raise ConfigError(f"grid {key!r} needs n >= 1 and 0 < lo < hi", key=key)
        if scale == "log":
            return np.logspace(math.log10(lo), math.log10(hi), n)
        if scale == "linear":
            return np.linspace(lo, hi, n)
        raise ConfigError(f"grid {key!r} scale must be 'log' or 'linear'", key=key)
    return _floats(value, key).reshape(-1)


def parse_noise(value, d, key="noise") -> NoiseModel:
    """Scalar (isotropic), vector (diagonal) or matrix, in eigen-coordinates."""
    if value is None:
        return zero_noise(d)
    arr = _floats(value, key)
    try:
        if arr.ndim == 0:
            return isotropic_noise(float(arr), d)
        if arr.ndim == 1 and arr.size == d:
            return NoiseModel(np.diag(arr))
        if arr.shape == (d, d):
            return NoiseModel(arr)
    except ResetRidgeError as exc:
        raise ConfigError(str(exc), key=key) from exc
    raise ConfigError(f"{key!r} must be a scalar, a length-{d} list or a {d}x{d} matrix", key=key)


def parse_problem(cfg):
    """Build a spectral model from ``design`` (CSV path) or ``spectrum``.

    Returns ``(model, alpha)``; ``alpha`` is None unless supplied.
    """
    if "design" in cfg:
        model = build_spectral_model(load_design_csv(cfg["design"]))
        alpha = cfg.get("beta0")
        if alpha is not None:
            alpha = model.to_eigen(_floats(alpha, "beta0"))
        return model, alpha
    spec = _get(cfg, "spectrum", required=True)
    if not isinstance(spec, dict):
        raise ConfigError("'spectrum' must be an object", key="spectrum")
    mu = _floats(_get(spec, "mu", required=True), "mu").reshape(-1)
    if "b_tilde" in spec:
        bt = _floats(spec["b_tilde"], "b_tilde").reshape(-1)
    elif "w_star" in spec:
        bt = mu * _floats(spec["w_star"], "w_star").reshape(-1)
    else:
        raise ConfigError("'spectrum' needs 'b_tilde' or 'w_star'", key="b_tilde")
    V = _floats(spec["V"], "V") if "V" in spec else None
    try:
        model = SpectralModel.from_spectrum(mu, bt, V=V)
    except ResetRidgeError as exc:
        raise ConfigError(str(exc), key="spectrum") from exc
    alpha = spec.get("alpha")
    return model, None if alpha is None else _floats(alpha, "alpha").reshape(-1)


def resolve_seed(flag, cfg) -> int:
    """``--seed`` beats the environment, which beats the config, then 42."""
    if flag is not None:
        raw, source = flag, "--seed"
    elif os.environ.get(SEED_ENV, "").strip():
        raw, source = os.environ[SEED_ENV].strip(), SEED_ENV
    elif "seed" in cfg:
        raw, source = cfg["seed"], "seed"
    else:
        return DEFAULT_SEED
    try:
        seed = int(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"seed from {source} is not an integer: {raw!r}", key=source) from exc
    if not 0 <= seed <= MAX_SEED:
        raise ConfigError(f"seed from {source} must be an unsigned 64-bit integer", key=source)
    return seed


def _law_or_rate(cfg):
    if "law" in cfg:
        return law_from_dict(cfg["law"])
    if "rate" in cfg:
        try:
            return Exponential(cfg["rate"])
        except ResetRidgeError as exc:
            raise ConfigError(str(exc), key="rate") from exc
    raise ConfigError("need 'law' or 'rate'", key="law")


# -- subcommands -------------------------------------------------------------

def cmd_filter_curve(args, cfg, out: Path) -> int:
    grid = parse_grid(_get(cfg, "mu_grid", {"lo": 1e-3, "hi": 1e3, "n": 200}), "mu_grid")
    raw = _get(cfg, "filters", required=True)
    if not isinstance(raw, list) or not raw:
        raise ConfigError("'filters' must be a nonempty list", key="filters")
    specs = [filter_from_dict(f) for f in raw]
    curves = [filter_curve(s, grid) for s in specs]
    labels = [f"f{i}_{s.label()}" for i, s in enumerate(specs)]
    for i, (s, c) in enumerate(zip(specs, curves)):
        write_csv(out / f"filter_{i}_{s.kind}.csv", ["mu", "g"], c)
    write_csv(out / "filters.csv", ["mu", *labels],
              np.column_stack([grid, *[c[:, 1] for c in curves]]))
    write_json(out / "filters.json", {"filters": [s.to_dict() for s in specs], "labels": labels})
    return 0


def cmd_verify(args, cfg, out: Path) -> int:
    mc = args.mc_samples if args.mc_samples is not None else cfg.get("mc_samples", DEFAULT_MC_SAMPLES)
    if not isinstance(mc, int) or mc < 2:
        raise ConfigError("mc_samples must be an integer >= 2", key="mc_samples")
    names = cfg.get("checks")
    if names is not None:
        unknown = sorted(set(names) - set(CHECKS)) if isinstance(names, list) else [names]
        if unknown:
            raise ConfigError(f"unknown check {unknown[0]!r}; valid: {', '.join(CHECKS)}",
                              key="checks")
    results = run_checks(seed=args.resolved_seed, mc_samples=mc, names=names)
    print(format_table(results))
    write_csv(out / "verify.csv", ["check", "status", "value", "tolerance"],
              [(r.name, r.status, r.value, r.tolerance) for r in results])
    failed = [r.name for r in results if r.status == FAIL]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


SWEEP_HEADER = ["sweep_value", "method", "mean_mse", "gain_pct", "se_gain_pct", "trials"]


def cmd_experiment(args, cfg, out: Path) -> int:
    spec = dict(cfg)
    spec.pop("seed", None)
    spec["base_seed"] = args.resolved_seed
    config = config_from_dict(spec)
    for v in config.sweep_values:
        if config.kind == "spiked" and config.dimension(v) < 2:
            raise ConfigError(f"gamma={v} gives d={config.dimension(v)} < 2", key="gamma_grid")
    results = run_sweep(config, threads=args.threads)
    rows, detail = [], []
    for res in results:
        for m in res.methods:
            rows.append((res.sweep_value, m, res.mean_mse[m], res.gain_pct[m],
                         res.se_gain_pct[m], res.trials))
        for rec in res.detail:
            for m in res.methods:
                d = rec[m]
                detail.append((res.sweep_value, rec["trial"], m, d["test_mse"], d["param"],
                               d["val_mse"]))
    write_csv(out / "sweep.csv", SWEEP_HEADER, rows)
    write_json(out / "sweep.json", {"config": config_to_dict(config),
                                    "results": [r.to_dict() for r in results]})
    if args.detail:
        write_csv(out / "sweep_detail.csv",
                  ["sweep_value", "trial", "method", "test_mse", "param", "val_mse"], detail)
    if args.table_g7:
        table = [(res.sweep_value, m, res.mean_mse[m], res.gain_pct[m], res.se_gain_pct[m])
                 for res in results for m in res.methods]
        write_csv(out / "table_g7.csv",
                  ["sweep_value", "method", "test_mse", "gain_pct", "se_gain_pct"], table)
        label = "gamma" if config.kind == "spiked" else "B"
        print(f"{'setting':<14}{'method':<12}{'test MSE':>10}{'gain (%)':>10}{'SE (%)':>9}")
        for v, m, mse, g, se in table:
            print(f"{label + '=' + format(v, 'g'):<14}{m:<12}{mse:10.3f}{g:10.3f}{se:9.3f}")
    return 0


def cmd_simulate(args, cfg, out: Path) -> int:
    model, _ = parse_problem(cfg)
    law = _law_or_rate(cfg)
    noise = parse_noise(cfg.get("noise"), model.d)
    rng = np.random.default_rng(args.resolved_seed)
    mode = cfg.get("mode", "snapshots")
    cols = [f"w{i + 1}" for i in range(model.d)]
    if mode == "snapshots":
        m = int(_get(cfg, "m", 10_000))
        if m < 2:
            raise ConfigError("'m' must be at least 2", key="m")
        batch = equilibrium_snapshots(model, law, noise, m, rng=rng)
        x = model.to_original(batch.samples)
        write_csv(out / "snapshots.csv", ["sample_id", *cols],
                  ([i, *row] for i, row in enumerate(x)))
        emp = empirical_moments(x)
        write_json(out / "snapshots.json", {
            "law": law.to_dict(), "m": m, "seed": args.resolved_seed,
            "empirical_mean": emp.mean, "empirical_cov": emp.cov,
            "exact_mean": renewal_stationary_mean(model, law),
            "exact_cov": renewal_covariance(model, law, noise).total,
        })
    elif mode == "trajectory":
        horizon = float(_get(cfg, "horizon", 20.0))
        dt = float(_get(cfg, "dt", 0.01))
        try:
            traj = simulate_trajectory(model, law, noise, horizon, dt, rng)
        except ResetRidgeError as exc:
            raise ConfigError(str(exc), key="dt") from exc
        write_csv(out / "trajectory.csv", ["t", *cols], np.column_stack([traj.times, traj.states]))
        write_csv(out / "resets.csv", ["t_reset"], traj.reset_times.reshape(-1, 1))
    else:
        raise ConfigError("'mode' must be 'snapshots' or 'trajectory'", key="mode")
    return 0


def cmd_moments(args, cfg, out: Path) -> int:
    model, _ = parse_problem(cfg)
    law = _law_or_rate(cfg)
    noise = parse_noise(cfg.get("noise"), model.d)
    if isinstance(law, Exponential):
        dec = poisson_covariance(model, law.rate, noise)
        mean = poisson_stationary_mean(model, law.rate)
    else:
        dec = renewal_covariance(model, law, noise)
        mean = renewal_stationary_mean(model, law)
    rows = []
    for comp, mat in (("sgd", dec.sgd_tilde), ("timing", dec.timing_tilde),
                      ("total", dec.total_tilde)):
        for i in range(model.d):
            for j in range(model.d):
                rows.append((comp, i, j, mat[i, j]))
    write_csv(out / "covariance_tilde.csv", ["component", "i", "j", "value"], rows)
    write_json(out / "moments.json", {"mean": mean, "mu": model.mu, **dec.to_dict()})
    return 0


def _risk_of(est, mu, alpha, sigma_eta, noise):
    kind = est.get("kind") if isinstance(est, dict) else None
    try:
        if kind == "ridge":
            return ridge_risk(mu, alpha, sigma_eta, _get(est, "lambda", required=True))
        if kind == "poisson":
            return poisson_total_risk(mu, alpha, sigma_eta, noise, _get(est, "rate", required=True))
        if kind == "conditional":
            return poisson_conditional_risk(mu, _floats(_get(est, "b_tilde", required=True), "b_tilde"),
                                            alpha, noise, _get(est, "rate", required=True))
        if kind == "renewal":
            return renewal_snapshot_risk(mu, alpha, sigma_eta, noise,
                                         law_from_dict(_get(est, "law", required=True)))
    except ConfigError:
        raise
    except ResetRidgeError as exc:
        raise ConfigError(str(exc), key=kind) from exc
    raise ConfigError(f"unknown estimator kind {kind!r}; expected ridge, poisson, conditional "
                      "or renewal", key="estimators")


def _risk_inputs(cfg):
    mu = _floats(_get(cfg, "mu", required=True), "mu").reshape(-1)
    alpha = _floats(_get(cfg, "alpha", 1.0), "alpha")
    sigma_eta = float(_get(cfg, "sigma_eta", 0.0))
    noise = parse_noise(cfg.get("noise"), mu.size)
    return mu, alpha, sigma_eta, noise


def cmd_risk(args, cfg, out: Path) -> int:
    mu, alpha, sigma_eta, noise = _risk_inputs(cfg)
    ests = _get(cfg, "estimators", required=True)
    if not isinstance(ests, list) or not ests:
        raise ConfigError("'estimators' must be a nonempty list", key="estimators")
    reports = [_risk_of(e, mu, alpha, sigma_eta, noise) for e in ests]
    rows = [(i, e["kind"], *[rep.totals[t] for t in TERMS], rep.total)
            for i, (e, rep) in enumerate(zip(ests, reports))]
    write_csv(out / "risk.csv", ["index", "kind", *TERMS, "total"], rows)
    write_json(out / "risk.json", {"estimators": ests, "reports": [r.to_dict() for r in reports]})
    if "rate_grid" in cfg:
        grid = parse_grid(cfg["rate_grid"], "rate_grid")
        bt = cfg.get("b_tilde")
        curve = []
        for r in grid:
            if bt is None:
                rep = poisson_total_risk(mu, alpha, sigma_eta, noise, r)
            else:
                rep = poisson_conditional_risk(mu, _floats(bt, "b_tilde"), alpha, noise, r)
            curve.append((r, *[rep.totals[t] for t in TERMS], rep.total))
        write_csv(out / "risk_curve.csv", ["r", *TERMS, "total"], curve)
    return 0


def cmd_optimal_rate(args, cfg, out: Path) -> int:
    mu, alpha, sigma_eta, noise = _risk_inputs(cfg)
    grid = parse_grid(_get(cfg, "r_grid", {"lo": 1e-4, "hi": 1e4, "n": 161}), "r_grid")
    bt = cfg.get("b_tilde")
    res = optimal_poisson_rate(mu, alpha, sigma_eta, noise, grid,
                               b_tilde=None if bt is None else _floats(bt, "b_tilde"))
    write_csv(out / "optimal_rate.csv", ["r_star", "risk", "boundary"],
              [(res.r_star, res.risk, res.boundary or "interior")])
    write_csv(out / "optimal_rate_grid.csv", ["r", "risk"], np.column_stack([grid, res.grid_risk]))
    write_json(out / "optimal_rate.json", {"r_star": res.r_star, "risk": res.risk,
                                           "boundary": res.boundary,
                                           "boundary_flag": res.boundary_flag})
    return 0


def _k_value(k):
    if isinstance(k, str) and k.lower() in ("inf", "infinity", "periodic"):
        return math.inf
    if isinstance(k, (int, float)) and k >= 1:
        return k
    raise ConfigError(f"invalid shape {k!r} in 'k_values'", key="k_values")


def cmd_landscape(args, cfg, out: Path) -> int:
    ks = [_k_value(k) for k in _get(cfg, "k_values", [1, 2, 3, 5, 10, "inf"])]
    mt = parse_grid(_get(cfg, "mu_tau_grid", {"lo": 0.1, "hi": 10, "n": 21}), "mu_tau_grid")
    nu = parse_grid(_get(cfg, "nu_grid", {"lo": 0.05, "hi": 5, "n": 21}), "nu_grid")
    cells = risk_landscape(ks, mt, nu, float(_get(cfg, "gain_threshold", 0.015)),
                           float(_get(cfg, "tau", 1.0)))
    write_csv(out / "landscape.csv", ["mu_tau", "nu", "best_law", "gain"],
              [(c.mu_tau, c.nu, c.best_law, c.gain) for c in cells])
    names = list(cells[0].risks)
    write_csv(out / "landscape_risks.csv", ["mu_tau", "nu", *names],
              [(c.mu_tau, c.nu, *[c.risks[n] for n in names]) for c in cells])
    return 0


def cmd_mismatch(args, cfg, out: Path) -> int:
    raw = _get(cfg, "laws", required=True)
    if not isinstance(raw, list) or not raw:
        raise ConfigError("'laws' must be a nonempty list", key="laws")
    laws = [law_from_dict(x) for x in raw]
    weak, strong = float(_get(cfg, "mu_weak", 1.0)), float(_get(cfg, "mu_strong", 10.0))
    try:
        reports = [two_mode_mismatch(law, weak, strong) for law in laws]
    except ResetRidgeError as exc:
        raise ConfigError(str(exc), key="mu_weak") from exc
    write_csv(out / "mismatch.csv", ["law", "lambda_weak", "lambda_strong", "relative_gap"],
              [(str(law), r.lambda_weak, r.lambda_strong, r.relative_gap)
               for law, r in zip(laws, reports)])
    grid = parse_grid(_get(cfg, "mu_grid", {"lo": 1e-2, "hi": 1e2, "n": 200}), "mu_grid")
    if np.any(grid <= 0):
        raise ConfigError("'mu_grid' must be positive", key="mu_grid")
    write_csv(out / "lambda_eff.csv", ["mu", *[str(law) for law in laws]],
              np.column_stack([grid, *[law.effective_penalty(grid) for law in laws]]))
    return 0


COMMANDS = {
    "filter-curve": (cmd_filter_curve, "spectral filter values over a curvature grid"),
    "verify": (cmd_verify, "run the identity and Monte Carlo check suite"),
    "experiment": (cmd_experiment, "spiked or block covariance sweep"),
    "simulate": (cmd_simulate, "equilibrium snapshots or a reset trajectory"),
    "moments": (cmd_moments, "stationary mean and covariance decomposition"),
    "risk": (cmd_risk, "risk reports for ridge, Poisson and renewal estimators"),
    "optimal-rate": (cmd_optimal_rate, "risk-minimizing Poisson reset rate"),
    "landscape": (cmd_landscape, "best reset law over a (mu tau, nu) grid"),
    "mismatch": (cmd_mismatch, "effective-penalty mismatch between two modes"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--seed", help=f"base seed (else ${SEED_ENV}, config 'seed', 42)")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: available cores)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="reset-ridge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (_, helptext) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=helptext)
        if name == "experiment":
            p.add_argument("--detail", action="store_true", help="also write per-trial CSV")
            p.add_argument("--table-g7", action="store_true",
                           help="print and write a method/MSE/gain/SE table")
        if name == "verify":
            p.add_argument("--mc-samples", type=int, default=None,
                           help=f"snapshots per law (default {DEFAULT_MC_SAMPLES})")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(message)s")
    fn = COMMANDS[args.command][0]
    try:
        if args.threads is None:
            args.threads = os.cpu_count() or 1
        elif args.threads < 1:
            raise ConfigError("--threads must be at least 1", key="--threads")
        cfg = load_json_config(args.config)
        args.resolved_seed = resolve_seed(args.seed, cfg)
        out = Path(args.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory {out}: {exc.strerror}",
                              key="--out") from exc
        if not os.access(out, os.W_OK):
            raise ConfigError(f"output directory {out} is not writable", key="--out")
        log.info("%s seed=%d threads=%d", args.command, args.resolved_seed, args.threads)
        return fn(args, cfg, out)
    except (ResetRidgeError, OSError, TypeError, ValueError) as exc:
        key = getattr(exc, "key", None)
        suffix = f" (key: {key})" if key else ""
        print(f"reset-ridge {args.command}: error: {exc}{suffix}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
