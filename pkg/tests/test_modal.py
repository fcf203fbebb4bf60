import json

import numpy as np
import pytest

from dmd_forecasting.dmd import SnapshotPair, fit_exact_dmd
from dmd_forecasting.errors import DegenerateDataError, ValidationError
from dmd_forecasting.modal import (
    SpectralSpec,
    group_conjugate_pairs,
    modal_energy_ranking,
    reference_period,
)


def _report(series):
    pair = SnapshotPair.from_sequence(series.values, series.dt)
    model = fit_exact_dmd(pair)
    return modal_energy_ranking(model, pair, series.channels)


def test_energy_follows_squared_amplitude(sine_pairs):
    report = _report(sine_pairs)
    energies = [e.energy for e in report.entries]
    np.testing.assert_allclose(energies, [0.4, 0.4, 0.1, 0.1], atol=1e-8)
    np.testing.assert_allclose([e.frequency_hz for e in report.entries], [0.10, 0.10, 0.23, 0.23], atol=1e-9)
    assert report.cumulative_energy[-1] == pytest.approx(1.0)
    assert np.all(np.diff(report.cumulative_energy) >= 0)


def test_conjugate_partners_share_a_pair(sine_pairs):
    entries = _report(sine_pairs).entries
    assert entries[0].pair_id == entries[1].pair_id
    assert entries[2].pair_id == entries[3].pair_id
    assert entries[0].pair_id != entries[2].pair_id
    assert entries[0].eigenvalue.imag > 0
    assert entries[0].period_s == pytest.approx(10.0, abs=1e-6)


def test_participation_points_at_driving_channels(sine_pairs):
    first = _report(sine_pairs).entries[0]
    np.testing.assert_allclose(first.participation, [2 ** -0.5, 2 ** -0.5, 0.0, 0.0], atol=1e-8)


def test_report_exports(tmp_path, sine_pairs):
    report = _report(sine_pairs)
    report.save_json(tmp_path / "modal.json")
    doc = json.loads((tmp_path / "modal.json").read_text())
    assert doc["channels"] == ["a", "b", "c", "d"]
    assert len(doc["modes"]) == 4
    table = report.to_table(top_channels=2)
    assert table.splitlines()[0].split()[0] == "rank"
    assert "a (" in table


def test_group_conjugate_pairs():
    grouping = group_conjugate_pairs([1 + 1j, 0.5, 1 - 1j])
    assert grouping.groups == ((0, 2), (1,))
    assert grouping.unmatched == ()
    assert grouping.pair_ids(3).tolist() == [0, 1, 0]

    lonely = group_conjugate_pairs([0.3 + 0.4j, 0.9])
    assert lonely.unmatched == (0,)


def test_reference_period_from_spectral_peak():
    t = np.arange(4096) * 0.1
    peak = reference_period(np.sin(2 * np.pi * 0.1367 * t), 0.1)
    assert abs(peak.frequency_hz - 0.1367) <= peak.resolution / 2
    assert peak.period_s == pytest.approx(7.3143, abs=0.01)
    assert peak.resolution == pytest.approx(10 / 512)


def test_reference_period_errors():
    with pytest.raises(DegenerateDataError):
        reference_period(np.full(1000, 3.0), 0.1)
    with pytest.raises(ValidationError):
        reference_period(np.arange(10.0), 0.1)
    with pytest.raises(ValidationError):
        SpectralSpec(overlap=1.0)


def test_ranking_is_scale_free(sine_pairs):
    base = _report(sine_pairs).entries
    scaled = _report(sine_pairs.with_values(1000.0 * sine_pairs.values)).entries
    np.testing.assert_allclose([e.eigenvalue for e in scaled], [e.eigenvalue for e in base], atol=1e-9)
    np.testing.assert_allclose([e.frequency_hz for e in scaled], [e.frequency_hz for e in base], atol=1e-9)
    np.testing.assert_allclose([e.energy for e in scaled], [e.energy for e in base], atol=1e-9)


def test_reference_period_stable_when_record_doubles():
    t = np.arange(8192) * 0.1
    x = np.sin(2 * np.pi * 0.1367 * t)
    short = reference_period(x[:4096], 0.1)
    full = reference_period(x, 0.1)
    assert full.resolution == pytest.approx(short.resolution / 2)
    assert abs(full.frequency_hz - short.frequency_hz) <= short.resolution
