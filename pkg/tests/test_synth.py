import json

import numpy as np
import pytest

from dmd_forecasting.dmd import SnapshotPair, fit_exact_dmd
from dmd_forecasting.errors import ValidationError
from dmd_forecasting.hankel import HdmdConfig, fit_hdmd
from dmd_forecasting.modal import reference_period
from dmd_forecasting.series import load_csv, save_csv
from dmd_forecasting.synth import DEMO_CHANNELS, SynthSpec, demo_dataset, generate


def test_spec_validation():
    with pytest.raises(ValidationError):
        SynthSpec(kind="chaotic")
    with pytest.raises(ValidationError):
        SynthSpec(frequencies=(5.0,), dt=0.1)
    with pytest.raises(ValidationError):
        SynthSpec(duration=1.0, dt=0.1)
    with pytest.raises(ValidationError):
        SynthSpec(noise_std=-0.1)
    with pytest.raises(ValidationError):
        SynthSpec(frequencies=(0.1, 0.2), amplitudes=(1.0,))


def test_generation_is_seeded():
    spec = SynthSpec(kind="multi_sine", dimension=3, frequencies=(0.1, 0.23), noise_std=0.2, duration=50.0, seed=5)
    a, _ = generate(spec)
    b, _ = generate(spec)
    np.testing.assert_array_equal(a.values, b.values)
    c, _ = generate(SynthSpec(kind="multi_sine", dimension=3, frequencies=(0.1, 0.23), noise_std=0.2,
                              duration=50.0, seed=6))
    assert not np.array_equal(a.values, c.values)


def test_noiseless_series_equals_ground_truth():
    series, truth = generate(SynthSpec(dimension=2, frequencies=(0.1,), duration=30.0))
    np.testing.assert_array_equal(series.values, truth.clean)


def test_single_tone_period():
    series, _ = generate(SynthSpec(frequencies=(0.1367,), duration=409.5))
    assert series.n_samples == 4096
    peak = reference_period(series.values[0], series.dt)
    assert abs(peak.frequency_hz - 0.1367) <= peak.resolution
    assert peak.period_s == pytest.approx(7.3143, abs=0.01)


def test_linear_system_eigenvalues_are_recovered():
    target = 0.95 * np.exp(0.2j)
    series, truth = generate(SynthSpec(kind="linear_lti", frequencies=(), eigenvalues=(target,), duration=20.0))
    assert series.n_channels == 2
    model = fit_exact_dmd(SnapshotPair.from_sequence(series.values, series.dt))
    found = np.sort_complex(model.eigenvalues)
    np.testing.assert_allclose(found, np.sort_complex(truth.eigenvalues), atol=1e-8)
    np.testing.assert_allclose(found, np.sort_complex([target, np.conj(target)]), atol=1e-8)


def test_latent_scalar_needs_delays():
    series, truth = generate(SynthSpec(kind="latent_scalar", frequencies=(0.10, 0.23), duration=99.9))
    assert series.n_channels == 1
    plain = fit_exact_dmd(SnapshotPair.from_sequence(series.values, series.dt))
    assert plain.rank <= 2
    forecaster = fit_hdmd(series, HdmdConfig(1000, 3), t_end=99.9)
    freqs = np.abs(np.angle(forecaster.model.eigenvalues)) / (2 * np.pi * series.dt)
    np.testing.assert_allclose(np.sort(freqs), [0.10, 0.10, 0.23, 0.23], atol=1e-6)
    assert not truth.nonlinear


def test_saturating_channels_are_clipped():
    spec = SynthSpec(kind="saturating", dimension=2, frequencies=(0.1, 0.05), duration=100.0, clip_fraction=0.5)
    series, truth = generate(spec)
    assert truth.nonlinear
    assert "reduced predictability" in truth.notes[0]
    peak = np.abs(series.values).max(axis=1)
    # the clip level is reached and held
    for row, top in zip(series.values, peak):
        assert np.count_nonzero(np.isclose(np.abs(row), top)) > 10


def test_demo_dataset_layout():
    series, truth = demo_dataset(duration=600.0)
    assert series.channels == DEMO_CHANNELS
    assert series.n_channels == 15
    assert series.n_samples == 6001
    assert truth.nonlinear
    noisy, _ = demo_dataset(duration=600.0, noise_std=0.3)
    assert np.std(noisy.values - series.values) == pytest.approx(0.3, rel=0.05)


def test_csv_round_trip(tmp_path):
    series, _ = generate(SynthSpec(dimension=3, frequencies=(0.05, 0.2), noise_std=0.1, duration=60.0, seed=2))
    save_csv(series, tmp_path / "synth.csv")
    loaded = load_csv(tmp_path / "synth.csv", dt_target=series.dt)
    np.testing.assert_array_equal(loaded.values, series.values)
    assert loaded.channels == series.channels


def test_spec_from_json(tmp_path):
    spec = SynthSpec(kind="linear_lti", frequencies=(), eigenvalues=(0.9 * np.exp(0.4j),), duration=20.0, seed=9)
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec.to_dict()))
    assert SynthSpec.from_json(path) == spec
