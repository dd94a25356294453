"""Monte Carlo harness for the spiked- and block-covariance comparisons.

Every method is a one-parameter spectral filter family applied in the
eigenbasis of the *unnormalized* training Hessian ``X^T X`` and tuned on a
validation split over a shared log-spaced grid. Renewal families read the
grid value as a reset rate ``1/tau``. Trials are seeded ``base_seed +
trial_index`` and reduced in trial order, so results do not depend on the
thread count.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, ParameterError
from .filters import FilterSpec, Renewal, Ridge, SharpCutoff
from .laws import Deterministic, Exponential, Gamma
from .spectral import DesignData, SpectralModel, build_spectral_model

__all__ = [
    "SpikedConfig",
    "BlockConfig",
    "Method",
    "parse_method",
    "VALID_METHODS",
    "gen_spiked",
    "gen_block",
    "block_covariance",
    "marchenko_pastur",
    "MarchenkoPastur",
    "tune_on_validation",
    "TuneResult",
    "run_trial",
    "run_sweep",
    "SweepResult",
    "config_from_dict",
]

DEFAULT_SEED = 42


@dataclass(frozen=True)
class SpikedConfig:
    spike_strengths: tuple = (12.0, 5.0)
    spike_coeffs: tuple = (2.0, 1.0)
    n_train: int = 80
    n_val: int = 800
    n_test: int = 5000
    sigma_eta: float = 1.0
    gamma_grid: tuple = tuple(np.round(np.arange(0.25, 3.76, 0.25), 2).tolist())
    trials: int = 200
    grid_lo: float = 1e-3
    grid_hi: float = 1e2
    grid_size: int = 180
    base_seed: int = DEFAULT_SEED
    methods: tuple = ("ridge", "periodic", "erlang-3", "cutoff")

    kind = "spiked"

    def __post_init__(self):
        _check_common(self)
        if len(self.spike_strengths) != len(self.spike_coeffs):
            raise ConfigError("spike_strengths and spike_coeffs differ in length",
                              key="spike_coeffs")
        if any(s <= 0 for s in self.spike_strengths):
            raise ConfigError("spike strengths must be positive", key="spike_strengths")
        if list(self.gamma_grid) != sorted(self.gamma_grid):
            raise ConfigError("gamma_grid must be sorted", key="gamma_grid")

    @property
    def tuning_grid(self) -> np.ndarray:
        return np.logspace(math.log10(self.grid_lo), math.log10(self.grid_hi), self.grid_size)

    @property
    def sweep_values(self):
        return self.gamma_grid

    def dimension(self, gamma: float) -> int:
        return int(round(gamma * self.n_train))


@dataclass(frozen=True)
class BlockConfig:
    signal_block: int = 6
    nuisance_block: int = 8
    rho_sig: float = 0.80
    rho_nui: float = 0.45
    rho_cross: float = 0.02
    coeffs: tuple = (1.0, 0.9, 0.8, 0.7, 0.6, 0.5)
    n_train: int = 60
    n_val: int = 180
    n_test: int = 1200
    sigma_eta: float = 2.0
    B_grid: tuple = (0, 1, 2, 4, 6, 8, 10, 12)
    trials: int = 60
    grid_lo: float = 1e-3
    grid_hi: float = 1e2
    grid_size: int = 60
    base_seed: int = DEFAULT_SEED
    methods: tuple = ("ridge", "periodic", "erlang-5", "erlang-2", "cutoff")

    kind = "block"

    def __post_init__(self):
        _check_common(self)
        if len(self.coeffs) != self.signal_block:
            raise ConfigError("coeffs must have one entry per signal feature", key="coeffs")
        if any(int(b) != b or b < 0 for b in self.B_grid):
            raise ConfigError("B_grid entries must be nonnegative integers", key="B_grid")
        for B in self.B_grid:
            block_covariance(self, int(B))

    @property
    def tuning_grid(self) -> np.ndarray:
        return np.logspace(math.log10(self.grid_lo), math.log10(self.grid_hi), self.grid_size)

    @property
    def sweep_values(self):
        return self.B_grid

    def dimension(self, B: int) -> int:
        return self.signal_block + self.nuisance_block * int(B)


def _check_common(cfg):
    for key in ("n_train", "n_val", "n_test", "trials", "grid_size"):
        if int(getattr(cfg, key)) < 1:
            raise ConfigError(f"{key} must be at least 1", key=key)
    if not 0 < cfg.grid_lo < cfg.grid_hi:
        raise ConfigError("need 0 < grid_lo < grid_hi", key="grid_lo")
    if cfg.sigma_eta < 0:
        raise ConfigError("sigma_eta must be nonnegative", key="sigma_eta")
    if cfg.base_seed < 0:
        raise ConfigError("base_seed must be nonnegative", key="base_seed")
    for m in cfg.methods:
        parse_method(m)
    if "ridge" not in cfg.methods:
        raise ConfigError("methods must include the ridge baseline", key="methods")


# -- methods -----------------------------------------------------------------

VALID_METHODS = ("ridge", "exponential", "periodic", "erlang-<k>", "cutoff")


@dataclass(frozen=True)
class Method:
    """A one-parameter filter family indexed by a positive grid value."""

    name: str
    shape: float | None = None

    def spec(self, value: float) -> FilterSpec:
        if self.name == "ridge":
            return Ridge(value)
        if self.name == "cutoff":
            return SharpCutoff(value)
        if self.name == "exponential":
            return Renewal(Exponential(value))
        if self.name == "periodic":
            return Renewal(Deterministic(1.0 / value))
        return Renewal(Gamma(self.shape, 1.0 / value))

    def filter_matrix(self, mu, grid) -> np.ndarray:
        """Filter values for every grid parameter, shape ``(len(grid), len(mu))``."""
        return np.vstack([np.asarray(self.spec(v).value(mu), dtype=float) for v in grid])


def parse_method(name: str) -> Method:
    if name in ("ridge", "exponential", "periodic", "cutoff"):
        return Method(name)
    m = re.fullmatch(r"erlang-(\d+(?:\.\d+)?)", str(name))
    if m and float(m.group(1)) > 0:
        return Method(name, float(m.group(1)))
    raise ConfigError(f"unknown method {name!r}; valid methods: {', '.join(VALID_METHODS)}",
                      key="methods")


# -- data generators ---------------------------------------------------------

def _labels(X, beta0, sigma_eta, rng):
    return X @ beta0 + sigma_eta * rng.standard_normal(X.shape[0])


def gen_spiked(config: SpikedConfig, gamma: float, rng):
    """Train/validation/test splits from the spiked covariance model.

    The spike directions are a random orthonormal pair drawn per call.
    """
    d = config.dimension(gamma)
    k = len(config.spike_strengths)
    if d < max(2, k):
        raise ParameterError(f"gamma={gamma} gives d={d}; need d >= {max(2, k)}")
    U, _ = np.linalg.qr(rng.standard_normal((d, k)))
    ell = np.asarray(config.spike_strengths, dtype=float)
    root = np.eye(d) + (U * (np.sqrt(ell) - 1.0)) @ U.T
    beta0 = U @ np.asarray(config.spike_coeffs, dtype=float)

    def split(n):
        X = rng.standard_normal((n, d)) @ root
        return DesignData(X, _labels(X, beta0, config.sigma_eta, rng), beta0, config.sigma_eta)

    return split(config.n_train), split(config.n_val), split(config.n_test)


def block_covariance(config: BlockConfig, B: int) -> np.ndarray:
    """Unit-diagonal block covariance; raises ConfigError if not PSD."""
    if B < 0:
        raise ParameterError("number of nuisance blocks must be nonnegative")
    s, q = config.signal_block, config.nuisance_block
    d = s + q * B
    C = np.full((d, d), config.rho_cross)
    C[:s, :s] = config.rho_sig
    for j in range(B):
        lo = s + q * j
        C[lo:lo + q, lo:lo + q] = config.rho_nui
    np.fill_diagonal(C, 1.0)
    if np.linalg.eigvalsh(C)[0] <= 0:
        raise ConfigError(f"block covariance with B={B} is not positive definite", key="rho_cross")
    return C


def gen_block(config: BlockConfig, B: int, rng):
    """Train/validation/test splits from the block covariance model."""
    C = block_covariance(config, int(B))
    L = np.linalg.cholesky(C)
    d = C.shape[0]
    beta0 = np.zeros(d)
    beta0[:config.signal_block] = config.coeffs

    def split(n):
        X = rng.standard_normal((n, d)) @ L.T
        return DesignData(X, _labels(X, beta0, config.sigma_eta, rng), beta0, config.sigma_eta)

    return split(config.n_train), split(config.n_val), split(config.n_test)


@dataclass(frozen=True)
class MarchenkoPastur:
    density: np.ndarray
    edges: tuple
    mass_at_zero: float


def marchenko_pastur(gamma: float, lambda_grid) -> MarchenkoPastur:
    """Marchenko-Pastur law for unit-variance entries at aspect ratio ``gamma``."""
    if not gamma > 0:
        raise ParameterError("gamma must be positive")
    lam = np.asarray(lambda_grid, dtype=float)
    lo, hi = (1 - math.sqrt(gamma)) ** 2, (1 + math.sqrt(gamma)) ** 2
    inside = (lam > lo) & (lam < hi) & (lam > 0)
    safe = np.where(inside, lam, 1.0)
    dens = np.where(inside, np.sqrt(np.clip((hi - safe) * (safe - lo), 0.0, None))
                    / (2 * math.pi * gamma * safe), 0.0)
    return MarchenkoPastur(dens, (lo, hi), max(0.0, 1.0 - 1.0 / gamma))


# -- tuning ------------------------------------------------------------------

@dataclass(frozen=True)
class TuneResult:
    best_param: float
    best_val_mse: float
    index: int
    val_mse: np.ndarray
    coef_tilde: np.ndarray


def _family(method):
    return parse_method(method) if isinstance(method, str) else method


def tune_on_validation(train: DesignData, val: DesignData, family, grid,
                       model: SpectralModel | None = None) -> TuneResult:
    """Pick the grid value minimizing validation MSE (ties go to the smaller value).

    ``model`` may be passed to reuse a spectral model already fitted on
    ``train``.
    """
    grid = np.asarray(grid, dtype=float).reshape(-1)
    if grid.size == 0:
        raise ParameterError("tuning grid is empty")
    if np.any(np.diff(grid) <= 0) or np.any(grid <= 0):
        raise ParameterError("tuning grid must be positive and strictly increasing")
    model = build_spectral_model(train) if model is None else model
    family = _family(family)
    G = family.filter_matrix(model.mu_eff, grid)
    coefs = np.where(model.nullspace, 0.0, G * model.w_star_tilde)
    pred = (val.X @ model.V) @ coefs.T
    val_mse = np.mean((pred - val.y[:, None]) ** 2, axis=0)
    j = int(np.argmin(val_mse))
    return TuneResult(float(grid[j]), float(val_mse[j]), j, val_mse, coefs[j])


def test_mse(model: SpectralModel, coef_tilde, test: DesignData) -> float:
    """Prediction MSE on ``test`` (includes the irreducible label noise)."""
    resid = test.X @ (model.V @ coef_tilde) - test.y
    return float(np.mean(resid**2))


test_mse.__test__ = False


# -- sweeps ------------------------------------------------------------------

def _generate(config, value, rng):
    if config.kind == "spiked":
        return gen_spiked(config, float(value), rng)
    return gen_block(config, int(value), rng)


def run_trial(config, value, trial_index: int, methods=None) -> dict:
    """One trial: fresh data, tune every method on the same splits, test MSE."""
    methods = tuple(config.methods if methods is None else methods)
    rng = np.random.default_rng(config.base_seed + trial_index)
    train, val, test = _generate(config, value, rng)
    model = build_spectral_model(train)
    grid = config.tuning_grid
    out = {}
    for name in methods:
        res = tune_on_validation(train, val, name, grid, model=model)
        out[name] = {"test_mse": test_mse(model, res.coef_tilde, test),
                     "param": res.best_param, "val_mse": res.best_val_mse}
    return out


@dataclass(frozen=True)
class SweepResult:
    sweep_value: float
    methods: tuple
    mean_mse: dict
    se_mse: dict
    gain_pct: dict
    se_gain_pct: dict
    trials: int
    config_hash: str
    detail: list = field(default_factory=list, repr=False)

    def band95(self, method) -> tuple:
        g, s = self.gain_pct[method], self.se_gain_pct[method]
        return g - 1.96 * s, g + 1.96 * s

    def to_dict(self, with_detail: bool = False) -> dict:
        out = {
            "sweep_value": self.sweep_value,
            "trials": self.trials,
            "config_hash": self.config_hash,
            "methods": {
                m: {"mean_mse": self.mean_mse[m], "se_mse": self.se_mse[m],
                    "gain_pct": self.gain_pct[m], "se_gain_pct": self.se_gain_pct[m],
                    "band95_pct": list(self.band95(m))}
                for m in self.methods
            },
        }
        if with_detail:
            out["detail"] = self.detail
        return out


def config_to_dict(config) -> dict:
    d = asdict(config)
    d["experiment"] = config.kind
    return d


def config_hash(config) -> str:
    blob = json.dumps(config_to_dict(config), sort_keys=True, default=float)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _summarize(value, methods, rows, chash):
    T = len(rows)
    mse = {m: np.array([r[m]["test_mse"] for r in rows]) for m in methods}
    ridge = mse["ridge"]
    mean_mse, se_mse, gain, se_gain = {}, {}, {}, {}
    for m in methods:
        g = 100.0 * (ridge - mse[m]) / ridge
        mean_mse[m] = float(mse[m].mean())
        se_mse[m] = float(mse[m].std(ddof=1) / math.sqrt(T)) if T > 1 else 0.0
        gain[m] = float(g.mean())
        se_gain[m] = float(g.std(ddof=1) / math.sqrt(T)) if T > 1 else 0.0
    detail = [{"trial": i, **{m: rows[i][m] for m in methods}} for i in range(T)]
    return SweepResult(value, tuple(methods), mean_mse, se_mse, gain, se_gain, T, chash, detail)


def run_sweep(config, values=None, methods=None, threads: int | None = 1) -> list[SweepResult]:
    """Run ``config.trials`` paired trials at each sweep value.

    Gains are per-trial relative test-MSE improvements over that trial's
    ridge fit, in percent, averaged over trials; SEs are the sample std of
    those paired gains over ``sqrt(trials)``.
    """
    values = list(config.sweep_values if values is None else values)
    methods = tuple(config.methods if methods is None else methods)
    for m in methods:
        parse_method(m)
    if "ridge" not in methods:
        raise ConfigError("methods must include the ridge baseline", key="methods")
    chash = config_hash(config)
    results = []
    for value in values:
        jobs = range(config.trials)
        if threads is not None and threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                rows = list(pool.map(lambda t: run_trial(config, value, t, methods), jobs))
        else:
            rows = [run_trial(config, value, t, methods) for t in jobs]
        results.append(_summarize(value, methods, rows, chash))
    return results


def config_from_dict(spec: dict):
    """Build a Spiked/Block config from a JSON object with an ``experiment`` key."""
    if not isinstance(spec, dict):
        raise ConfigError("experiment config must be a JSON object")
    kind = spec.get("experiment")
    cls = {"spiked": SpikedConfig, "block": BlockConfig}.get(kind)
    if cls is None:
        raise ConfigError(f"'experiment' must be 'spiked' or 'block', got {kind!r}",
                          key="experiment")
    known = set(cls.__dataclass_fields__)
    kwargs = {}
    for key, value in spec.items():
        if key in ("experiment", "sweep", "seed"):
            continue
        if key not in known:
            raise ConfigError(f"unknown key {key!r} for {kind} config", key=key)
        kwargs[key] = tuple(value) if isinstance(value, list) else value
    if "sweep" in spec:
        grid_key = "gamma_grid" if kind == "spiked" else "B_grid"
        kwargs[grid_key] = tuple(spec["sweep"])
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
