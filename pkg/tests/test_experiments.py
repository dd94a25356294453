import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import integrate

from reset_ridge.errors import ConfigError, ParameterError
from reset_ridge.experiments import (
    BlockConfig,
    SpikedConfig,
    block_covariance,
    config_from_dict,
    gen_block,
    gen_spiked,
    marchenko_pastur,
    parse_method,
    run_sweep,
    run_trial,
    tune_on_validation,
)
from reset_ridge.spectral import DesignData, build_spectral_model

SMALL_SPIKED = SpikedConfig(n_train=40, n_val=100, n_test=200, trials=6, grid_size=25,
                            gamma_grid=(0.5, 1.5))
SMALL_BLOCK = BlockConfig(trials=5, grid_size=20, B_grid=(0, 2))


def test_spiked_population_spectrum():
    cfg = SpikedConfig(n_train=2, n_test=1_000_000)
    _, _, test = gen_spiked(cfg, 2.0, np.random.default_rng(0))
    assert test.d == 4
    ev = np.sort(np.linalg.eigvalsh(test.X.T @ test.X / test.n))[::-1]
    np.testing.assert_allclose(ev, [12.0, 5.0, 1.0, 1.0], rtol=0.02)
    assert float(test.beta0 @ test.beta0) == pytest.approx(5.0)
    assert test.sigma_eta == 1.0


def test_spiked_needs_two_dimensions():
    with pytest.raises(ParameterError):
        gen_spiked(SpikedConfig(), 0.01, np.random.default_rng(0))


def test_spiked_shapes():
    train, val, test = gen_spiked(SpikedConfig(), 1.5, np.random.default_rng(1))
    assert (train.n, val.n, test.n) == (80, 800, 5000)
    assert train.d == val.d == test.d == 120
    assert np.array_equal(train.beta0, test.beta0)


def test_block_covariance_structure():
    cfg = BlockConfig()
    C0 = block_covariance(cfg, 0)
    expected = np.full((6, 6), 0.8)
    np.fill_diagonal(expected, 1.0)
    np.testing.assert_array_equal(C0, expected)
    C8 = block_covariance(cfg, 8)
    assert C8.shape == (70, 70)
    assert C8[6, 7] == 0.45 and C8[0, 6] == 0.02 and C8[6, 14] == 0.02
    for B in cfg.B_grid:
        assert np.linalg.eigvalsh(block_covariance(cfg, B)).min() > 0


def test_block_generator():
    train, val, test = gen_block(BlockConfig(), 8, np.random.default_rng(2))
    assert (train.n, val.n, test.n) == (60, 180, 1200)
    assert train.d == 70
    np.testing.assert_array_equal(train.beta0[:6], [1, 0.9, 0.8, 0.7, 0.6, 0.5])
    assert np.all(train.beta0[6:] == 0)


def test_block_non_psd_rejected():
    with pytest.raises(ConfigError):
        BlockConfig(rho_cross=-0.5)


def test_marchenko_pastur():
    mp1 = marchenko_pastur(1.0, [1.0])
    assert mp1.edges == pytest.approx((0.0, 4.0))
    assert marchenko_pastur(1.5, [1.0]).mass_at_zero == pytest.approx(1 / 3)
    for g in (0.3, 1.0, 1.5, 3.0):
        mp = marchenko_pastur(g, [1.0])
        lo, hi = mp.edges
        total, _ = integrate.quad(lambda x: float(marchenko_pastur(g, [x]).density[0]), lo, hi,
                                  limit=200)
        assert total == pytest.approx(1 - mp.mass_at_zero, abs=1e-3)
    with pytest.raises(ParameterError):
        marchenko_pastur(0.0, [1.0])


def _splits(rng, n, d, noise):
    beta = rng.standard_normal(d)

    def mk(m):
        X = rng.standard_normal((m, d))
        return DesignData(X, X @ beta + noise * rng.standard_normal(m))

    return mk(n), mk(3 * n)


def test_tuning_noiseless_prefers_smallest_ridge():
    train, val = _splits(np.random.default_rng(3), 40, 5, 0.0)
    res = tune_on_validation(train, val, "ridge", np.logspace(-3, 2, 30))
    assert res.index == 0


def test_tuning_exponential_equals_ridge():
    train, val = _splits(np.random.default_rng(4), 30, 8, 1.0)
    grid = np.logspace(-3, 2, 50)
    a = tune_on_validation(train, val, "ridge", grid)
    b = tune_on_validation(train, val, "exponential", grid)
    assert a.index == b.index
    np.testing.assert_allclose(a.val_mse, b.val_mse, rtol=1e-10)


@pytest.mark.parametrize("method", ["ridge", "periodic", "erlang-3", "cutoff"])
def test_tuning_argmin_exhaustive(method):
    train, val = _splits(np.random.default_rng(5), 25, 10, 1.0)
    grid = np.logspace(-3, 2, 40)
    res = tune_on_validation(train, val, method, grid)
    model = build_spectral_model(train)
    fam = parse_method(method)
    brute = []
    for v in grid:
        w = model.V @ (np.asarray(fam.spec(v).value(model.mu_eff)) * model.w_star_tilde)
        brute.append(np.mean((val.X @ w - val.y) ** 2))
    brute = np.asarray(brute)
    np.testing.assert_allclose(res.val_mse, brute, rtol=1e-10)
    assert res.best_val_mse == res.val_mse.min()
    assert res.index == int(np.flatnonzero(res.val_mse == res.val_mse.min())[0])
    assert brute[res.index] <= brute.min() * (1 + 1e-10)


def test_tuning_ties_go_to_smaller_parameter():
    train, val = _splits(np.random.default_rng(6), 20, 3, 1.0)
    top = build_spectral_model(train).mu.max()
    grid = top * np.array([2.0, 3.0, 4.0])
    res = tune_on_validation(train, val, "cutoff", grid)
    assert res.index == 0 and res.best_param == grid[0]


def test_tuning_grid_validation():
    train, val = _splits(np.random.default_rng(7), 20, 3, 1.0)
    with pytest.raises(ParameterError):
        tune_on_validation(train, val, "ridge", [])
    with pytest.raises(ParameterError):
        tune_on_validation(train, val, "ridge", [1.0, 0.5])


def test_methods():
    assert parse_method("erlang-5").shape == 5.0
    assert parse_method("periodic").spec(2.0).law.period == 0.5
    assert parse_method("erlang-3").spec(4.0).law.mean == 0.25
    with pytest.raises(ConfigError) as exc:
        parse_method("lasso")
    assert "ridge" in str(exc.value) and exc.value.key == "methods"


def test_sweep_ridge_gain_zero_and_se_nonnegative():
    for res in run_sweep(SMALL_SPIKED):
        assert res.gain_pct["ridge"] == 0.0 and res.se_gain_pct["ridge"] == 0.0
        assert all(v >= 0 for v in res.se_gain_pct.values())
        assert res.trials == 6
        lo, hi = res.band95("periodic")
        assert hi - lo == pytest.approx(2 * 1.96 * res.se_gain_pct["periodic"])
        for rec in res.detail:
            assert rec["ridge"]["test_mse"] > 0


def test_sweep_reproducible_and_thread_independent():
    a = run_sweep(SMALL_BLOCK, threads=1)
    b = run_sweep(SMALL_BLOCK, threads=1)
    c = run_sweep(SMALL_BLOCK, threads=4)
    for x, y, z in zip(a, b, c):
        assert x.to_dict(True) == y.to_dict(True) == z.to_dict(True)


def test_sweep_seed_changes_results():
    a = run_sweep(SMALL_BLOCK)[0]
    b = run_sweep(replace(SMALL_BLOCK, base_seed=7))[0]
    assert a.mean_mse["ridge"] != b.mean_mse["ridge"]
    assert a.config_hash != b.config_hash


def test_trial_uses_per_trial_seed():
    one = run_trial(SMALL_SPIKED, 1.5, 3)
    again = run_trial(SMALL_SPIKED, 1.5, 3)
    assert one == again
    sweep = run_sweep(SMALL_SPIKED, values=[1.5])[0]
    assert sweep.detail[3]["ridge"] == one["ridge"]


def test_sweep_requires_ridge():
    with pytest.raises(ConfigError):
        run_sweep(SMALL_SPIKED, methods=["periodic"])


def test_gain_definition():
    res = run_sweep(SMALL_SPIKED, values=[1.5])[0]
    ridge = np.array([r["ridge"]["test_mse"] for r in res.detail])
    per = np.array([r["periodic"]["test_mse"] for r in res.detail])
    g = 100 * (ridge - per) / ridge
    assert res.gain_pct["periodic"] == pytest.approx(g.mean(), rel=1e-12)
    assert res.se_gain_pct["periodic"] == pytest.approx(g.std(ddof=1) / math.sqrt(g.size), rel=1e-12)


def test_config_from_dict():
    cfg = config_from_dict({"experiment": "block", "sweep": [8], "trials": 3})
    assert isinstance(cfg, BlockConfig) and cfg.B_grid == (8,) and cfg.trials == 3
    with pytest.raises(ConfigError) as exc:
        config_from_dict({"experiment": "block", "bogus": 1})
    assert exc.value.key == "bogus"
    with pytest.raises(ConfigError):
        config_from_dict({"experiment": "other"})
    with pytest.raises(ConfigError):
        config_from_dict({"experiment": "spiked", "n_train": 0})
    with pytest.raises(ConfigError):
        config_from_dict({"experiment": "spiked", "methods": ["ridge", "lasso"]})


@pytest.mark.parametrize("cfg", [SpikedConfig(), BlockConfig()], ids=["spiked", "block"])
def test_default_grids(cfg):
    grid = cfg.tuning_grid
    assert grid[0] == pytest.approx(1e-3) and grid[-1] == pytest.approx(1e2)
    assert grid.size == (180 if cfg.kind == "spiked" else 60)
    assert np.all(np.diff(np.log(grid)) > 0)
