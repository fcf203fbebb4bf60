import numpy as np
import pytest

from dmd_forecasting.errors import EnsembleError, ValidationError, WindowError
from dmd_forecasting.series import MultivariateSeries
from dmd_forecasting.stochastic import (
    ShdmdConfig,
    chebyshev_band,
    draw_ensemble,
    ensemble_coverage,
    sample_hyperparams,
    shdmd_forecast,
)

PERIOD = 10.0  # slow tone of the two-tone fixture


def test_config_validation():
    with pytest.raises(ValidationError):
        ShdmdConfig(n_realizations=0)
    with pytest.raises(ValidationError):
        ShdmdConfig(l_d_ratio_range=(0.5, 1.5))
    with pytest.raises(ValidationError):
        ShdmdConfig(l_tr_range=(8.0, 4.0))
    with pytest.raises(ValidationError):
        ShdmdConfig(l_tr_range=(4.0,))


def test_draws_are_seeded_and_in_range():
    cfg = ShdmdConfig(n_realizations=50, seed=7)
    draws = draw_ensemble(cfg, PERIOD, 0.1)
    assert draws == draw_ensemble(cfg, PERIOD, 0.1)
    assert draws != draw_ensemble(ShdmdConfig(n_realizations=50, seed=8), PERIOD, 0.1)
    for n_tr, n_d in draws:
        assert 400 <= n_tr <= 1600
        assert 0 <= n_d <= n_tr - 2


def test_sample_hyperparams_gives_up_on_impossible_ranges():
    cfg = ShdmdConfig(l_tr_range=(0.01, 0.01), max_retries=5)
    with pytest.raises(ValidationError):
        sample_hyperparams(np.random.default_rng(0), cfg, PERIOD, 0.1)


def test_chebyshev_band():
    lo, hi = chebyshev_band([1.0, 2.0], [0.5, 0.0], 2)
    np.testing.assert_allclose(lo, [0.0, 2.0])
    np.testing.assert_allclose(hi, [2.0, 2.0])
    with pytest.raises(ValidationError):
        chebyshev_band([1.0], [1.0, 2.0])


def test_ensemble_forecast(two_tone):
    # ratios below 0.9 keep at least 39 Hankel columns, enough for the four tone modes
    cfg = ShdmdConfig(n_realizations=8, seed=1, l_d_ratio_range=(0.125, 0.9))
    result = shdmd_forecast(two_tone, cfg, PERIOD, t_end=200.0, horizon=10.0)
    assert result.ensemble_size == 8
    assert result.n_failed == 0
    assert result.mean.values.shape == (1, 100)
    assert result.mean.t0 == pytest.approx(200.1)
    assert np.all(result.std.values >= 0)
    assert np.all(result.lower.values <= result.mean.values)
    assert np.all(result.upper.values >= result.mean.values)
    # every member reproduces the noiseless tones
    assert np.max(np.abs(result.mean.values - two_tone.values[:, 2001:2101])) < 1e-3
    assert np.all(ensemble_coverage(result) >= 0.75)

    frame = result.to_frame()
    assert list(frame.columns) == ["time", "x_mean", "x_std", "x_lo", "x_hi"]
    assert len(result.realizations_frame()) == 8


def test_ensemble_is_schedule_independent(two_tone):
    cfg = ShdmdConfig(n_realizations=6, seed=4)
    serial = shdmd_forecast(two_tone, cfg, PERIOD, t_end=200.0, horizon=5.0, workers=1)
    again = shdmd_forecast(two_tone, cfg, PERIOD, t_end=200.0, horizon=5.0, workers=1)
    pooled = shdmd_forecast(two_tone, cfg, PERIOD, t_end=200.0, horizon=5.0, workers=3)
    np.testing.assert_array_equal(serial.mean.values, again.mean.values)
    np.testing.assert_array_equal(serial.members, pooled.members)
    assert [r.n_tr for r in serial.realizations] == [r.n_tr for r in pooled.realizations]


def test_single_realization_has_zero_spread(two_tone):
    result = shdmd_forecast(two_tone, ShdmdConfig(n_realizations=1), PERIOD, t_end=200.0, horizon=2.0)
    np.testing.assert_array_equal(result.std.values, 0.0)
    np.testing.assert_array_equal(result.lower.values, result.mean.values)


def test_longest_draw_must_fit(two_tone):
    with pytest.raises(WindowError):
        shdmd_forecast(two_tone, ShdmdConfig(n_realizations=4), PERIOD, t_end=30.0, horizon=2.0)


def test_all_failed_realizations_raise():
    flat = MultivariateSeries(("x",), 0.1, np.ones((1, 2000)))
    with pytest.raises(EnsembleError):
        shdmd_forecast(flat, ShdmdConfig(n_realizations=3), PERIOD, t_end=190.0, horizon=1.0)


def test_noisy_ensemble_spreads_and_covers(two_tone, rng):
    noisy = two_tone.with_values(two_tone.values + 0.3 * rng.standard_normal(two_tone.values.shape))
    cfg = ShdmdConfig(n_realizations=12, seed=3, l_tr_range=(4.0, 8.0), l_d_ratio_range=(0.125, 0.5))
    result = shdmd_forecast(noisy, cfg, PERIOD, t_end=200.0, horizon=10.0)
    assert result.ensemble_size == 12
    assert np.all(np.isfinite(result.mean.values))
    assert result.std.values.max() > 0
    assert np.all(ensemble_coverage(result) >= 0.75)


def test_ensemble_mean_scales_with_the_data(two_tone):
    cfg = ShdmdConfig(n_realizations=5, seed=1, l_d_ratio_range=(0.125, 0.9))
    base = shdmd_forecast(two_tone, cfg, PERIOD, t_end=200.0, horizon=5.0)
    scaled = shdmd_forecast(two_tone.with_values(1000.0 * two_tone.values), cfg, PERIOD, t_end=200.0, horizon=5.0)
    np.testing.assert_allclose(scaled.mean.values / 1000.0, base.mean.values, rtol=0, atol=1e-9)
    np.testing.assert_allclose(scaled.std.values / 1000.0, base.std.values, rtol=0, atol=1e-9)
