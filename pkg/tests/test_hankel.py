import numpy as np
import pytest

from dmd_forecasting import config
from dmd_forecasting.dmd import RankPolicy, SnapshotPair, fit_exact_dmd, forecast
from dmd_forecasting.errors import ShapeError, ValidationError, WindowError, ZeroVarianceError
from dmd_forecasting.hankel import (
    HdmdConfig,
    build_hankel_pair,
    fit_hdmd,
    hankel_columns,
    load_forecaster,
    predict,
    predict_steps,
    to_samples,
    training_window,
)
from dmd_forecasting.series import MultivariateSeries, zscore_apply, zscore_fit

T = config.REFERENCE_PERIOD


def _frequencies(model):
    return np.abs(np.angle(model.eigenvalues)) / (2 * np.pi * model.dt)


def test_reference_grid_sample_counts():
    assert [to_samples(l * T, 0.1) for l in config.LTR_LEVELS] == [73, 146, 293, 585, 1170]
    assert [to_samples(l * T, 0.1) for l in config.LD_LEVELS] == [37, 73, 146, 293, 585, 1170]


def test_recommended_setting_delay_count():
    cfg = HdmdConfig.from_lengths(10 * T, 0.5625 * 10 * T, 0.1)
    assert (cfg.n_tr, cfg.n_d) == (731, 411)


def test_floor_rounding_takes_integer_part():
    assert to_samples(8 * T, 0.1, "floor") == 585
    assert to_samples(4 * T, 0.1, "floor") == 292
    assert to_samples(0.3, 0.1, "floor") == 3
    with pytest.raises(ValidationError):
        to_samples(1.0, 0.1, "ceil")


def test_hankel_layout_newest_block_on_top():
    data = np.arange(10.0)[None, :]
    pair = build_hankel_pair(data, 2)
    assert pair.X.shape == (3, 7)
    np.testing.assert_array_equal(pair.X[0], np.arange(2, 9))
    np.testing.assert_array_equal(pair.X[1], np.arange(1, 8))
    np.testing.assert_array_equal(pair.X[2], np.arange(0, 7))
    np.testing.assert_array_equal(pair.Xp[0], np.arange(3, 10))
    np.testing.assert_array_equal(pair.Xp[2], np.arange(1, 8))


def test_hankel_multichannel_blocks():
    data = np.vstack([np.arange(6.0), 10 + np.arange(6.0)])
    pair = build_hankel_pair(data, 1)
    assert pair.X.shape == (4, 4)
    np.testing.assert_array_equal(pair.X[:2, 0], [1.0, 11.0])
    np.testing.assert_array_equal(pair.X[2:, 0], [0.0, 10.0])


def test_hankel_minimum_size():
    assert build_hankel_pair(np.arange(4.0)[None, :], 2).n_cols == 1
    with pytest.raises(ShapeError, match="at least 4"):
        build_hankel_pair(np.arange(3.0)[None, :], 2)


def test_config_without_hankel_column_is_rejected():
    assert hankel_columns(10, 9) == 0
    with pytest.raises(ShapeError):
        HdmdConfig(10, 9)
    with pytest.raises(ShapeError):
        HdmdConfig(1, 0)


def test_plain_dmd_sees_one_latent_direction(two_tone):
    pair = SnapshotPair.from_sequence(two_tone.values[:, :1000], two_tone.dt)
    model = fit_exact_dmd(pair)
    assert model.rank == 1
    assert np.count_nonzero(np.abs(model.eigenvalues.imag) > 1e-9) <= 1


def test_delay_embedding_recovers_latent_oscillators(two_tone):
    forecaster = fit_hdmd(two_tone, HdmdConfig(1000, 40), t_end=99.9)
    model = forecaster.model
    assert model.rank == 4
    freqs = np.sort(_frequencies(model))
    np.testing.assert_allclose(freqs, [0.10, 0.10, 0.23, 0.23], atol=1e-6)

    prediction = predict_steps(forecaster, 200)
    assert prediction.t0 == pytest.approx(100.0)
    expected = two_tone.values[:, 1000:1200]
    assert np.max(np.abs(prediction.values - expected)) < 1e-3


def test_predict_converts_horizon_to_steps(two_tone):
    forecaster = fit_hdmd(two_tone, HdmdConfig(500, 20), t_end=80.0)
    assert predict(forecaster, 4.05).n_samples == 40
    with pytest.raises(ValidationError):
        predict(forecaster, 0.01)


def test_training_window_must_fit(two_tone):
    assert training_window(two_tone, 100, 9.9) == (0, 100)
    with pytest.raises(WindowError):
        training_window(two_tone, 100, 5.0)
    with pytest.raises(WindowError):
        fit_hdmd(two_tone, HdmdConfig(100, 10), t_end=5.0)


def test_zscore_uses_training_window_only(two_tone):
    shifted = two_tone.with_values(two_tone.values + np.where(np.arange(two_tone.n_samples) > 1500, 50.0, 0.0))
    forecaster = fit_hdmd(shifted, HdmdConfig(1000, 40), t_end=99.9)
    assert abs(forecaster.stats.mean[0]) < 1e-10


def test_constant_channel_with_fallback_passes_through():
    t = np.arange(800) * 0.1
    series = MultivariateSeries(("flat", "wave"), 0.1, [np.full(t.size, 3.0), np.sin(2 * np.pi * 0.1 * t)])
    with pytest.raises(ZeroVarianceError):
        fit_hdmd(series, HdmdConfig(500, 20), t_end=49.9)

    forecaster = fit_hdmd(series, HdmdConfig(500, 20, std_fallback=1.0), t_end=49.9)
    prediction = predict_steps(forecaster, 100)
    np.testing.assert_allclose(prediction.values[0], 3.0, atol=1e-8)
    np.testing.assert_allclose(prediction.values[1], series.values[1, 500:600], atol=1e-6)
    assert any("flat" in w for w in forecaster.warnings)


def test_forecaster_export(tmp_path, two_tone):
    forecaster = fit_hdmd(two_tone, HdmdConfig(1000, 40), t_end=99.9)
    doc = forecaster.to_dict()
    assert doc["n_tr"] == 1000 and doc["n_d"] == 40
    assert doc["channels"] == ["x"]
    assert doc["t_end"] == pytest.approx(99.9)
    forecaster.save(tmp_path / "forecaster.json")
    assert (tmp_path / "forecaster.json").exists()
    assert forecaster.augmented_dim == 41


def test_saved_forecaster_reloads_bitwise(tmp_path, two_tone):
    hdmd_config = HdmdConfig(1000, 40, RankPolicy.tolerance(1.2345678901234e-10), std_fallback=0.5, growth_guard=1.02)
    forecaster = fit_hdmd(two_tone, hdmd_config, t_end=99.9)
    path = tmp_path / "forecaster.json"
    forecaster.save(path)

    loaded = load_forecaster(path)
    assert loaded.config == hdmd_config
    assert loaded.channels == forecaster.channels
    assert loaded.t_end == forecaster.t_end
    assert loaded.warnings == forecaster.warnings
    restored = predict_steps(loaded, 200)
    original = predict_steps(forecaster, 200)
    assert restored.t0 == original.t0
    np.testing.assert_array_equal(restored.values, original.values)


def test_zero_delays_reduce_to_plain_dmd(sine_pairs):
    forecaster = fit_hdmd(sine_pairs, HdmdConfig(1000, 0), t_end=99.9)

    window = sine_pairs.window(0, 1000)
    stats = zscore_fit(window)
    normalized = zscore_apply(window, stats)
    plain = SnapshotPair.from_sequence(normalized.values, sine_pairs.dt)
    hankel = build_hankel_pair(normalized, 0)
    np.testing.assert_array_equal(hankel.X, plain.X)
    np.testing.assert_array_equal(hankel.Xp, plain.Xp)

    model = fit_exact_dmd(plain)
    expected = forecast(model, 50) * stats.std[:, None] + stats.mean[:, None]
    np.testing.assert_allclose(predict_steps(forecaster, 50).values, expected, atol=1e-10)


def test_hankel_pair_is_shifted_by_one_sample(rng):
    pair = build_hankel_pair(rng.standard_normal((2, 30)), 3)
    np.testing.assert_array_equal(pair.Xp[:, :-1], pair.X[:, 1:])


def test_hankel_hand_enumeration():
    pair = build_hankel_pair(np.arange(1.0, 6.0)[None, :], 1)
    np.testing.assert_array_equal(pair.X, [[2, 3, 4], [1, 2, 3]])
    np.testing.assert_array_equal(pair.Xp, [[3, 4, 5], [2, 3, 4]])


def test_forecast_continues_from_the_last_training_sample(two_tone):
    forecaster = fit_hdmd(two_tone, HdmdConfig(1000, 40), t_end=102.5)
    end = two_tone.index_of(102.5)
    training = two_tone.values[0, end - 999: end + 1]
    first = predict_steps(forecaster, 1).values[0, 0]
    assert first == pytest.approx(two_tone.values[0, end + 1], abs=1e-3)
    assert abs(first - training[-1]) <= np.max(np.abs(np.diff(training))) + 1e-3
