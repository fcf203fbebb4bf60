"""Multichannel time-series container and the preprocessing front end.

Everything here is a pure function of its inputs: ingestion from CSV, linear
resampling onto a uniform grid, z-score normalisation and zero-phase FIR
low-pass filtering.
"""
import logging
import math
import re
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.signal import firwin

from dmd_forecasting import config
from dmd_forecasting.errors import ParseError, ValidationError, WindowError, ZeroVarianceError

logger = logging.getLogger(__name__)

# Relative slack used when deciding whether a time lands on a grid point.
_GRID_EPS = 1e-9


def _frozen(values):
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MultivariateSeries:
    channels: tuple
    dt: float
    values: np.ndarray  # (n_channels, n_samples), one row per channel
    t0: float = 0.0

    def __post_init__(self):
        channels = tuple(str(c) for c in self.channels)
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[None, :]
        if values.ndim != 2:
            raise ValidationError(f"values must be a 2-D matrix, got {values.ndim} dimensions")
        if not self.dt > 0:
            raise ValidationError(f"dt must be positive, got {self.dt}")
        if values.shape[0] != len(channels):
            raise ValidationError(f"{len(channels)} channel names for {values.shape[0]} rows")
        if values.shape[1] < 1:
            raise ValidationError("a series needs at least one sample")
        if len(set(channels)) != len(channels):
            raise ValidationError(f"duplicate channel names in {channels}")
        if not np.all(np.isfinite(values)):
            raise ValidationError("series values must be finite (no missing samples)")
        values.setflags(write=False)
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "t0", float(self.t0))

    @property
    def n_channels(self):
        return self.values.shape[0]

    @property
    def n_samples(self):
        return self.values.shape[1]

    @property
    def times(self):
        return self.t0 + np.arange(self.n_samples) * self.dt

    @property
    def duration(self):
        return (self.n_samples - 1) * self.dt

    def index_of(self, t):
        """Sample index of time `t`, snapped to the nearest grid point."""
        return int(round((t - self.t0) / self.dt))

    def window(self, start, stop):
        """Samples [start, stop) as a new series."""
        if start < 0 or stop > self.n_samples or stop <= start:
            raise WindowError(
                f"window [{start}, {stop}) outside a series of {self.n_samples} samples"
            )
        return MultivariateSeries(self.channels, self.dt, self.values[:, start:stop],
                                  self.t0 + start * self.dt)

    def with_values(self, values):
        return MultivariateSeries(self.channels, self.dt, values, self.t0)

    def channel(self, name):
        return self.values[self.channels.index(name)]

    def to_frame(self):
        df = pd.DataFrame(self.values.T, columns=list(self.channels))
        df.insert(0, "time", self.times)
        return df


@dataclass(frozen=True)
class ZScoreStats:
    channels: tuple
    mean: np.ndarray
    std: np.ndarray
    # Channels whose std came from the constant-channel fallback.
    fallback_channels: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen(self.mean))
        object.__setattr__(self, "std", _frozen(self.std))
        if np.any(self.std <= 0):
            raise ValidationError("z-score standard deviations must be positive")

    def to_dict(self):
        return {
            "channels": list(self.channels),
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "fallback_channels": list(self.fallback_channels),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(data["channels"]), data["mean"], data["std"],
                   tuple(data.get("fallback_channels", ())))


@dataclass(frozen=True)
class FilterSpec:
    cutoff_hz: float = config.DEFAULT_CUTOFF_HZ
    n_taps: int = config.DEFAULT_FILTER_TAPS

    def __post_init__(self):
        if not self.cutoff_hz > 0:
            raise ValidationError(f"cutoff must be positive, got {self.cutoff_hz} Hz")
        if self.n_taps < 3 or self.n_taps % 2 == 0:
            raise ValidationError(f"kernel length must be odd and >= 3, got {self.n_taps}")

    def validate_for(self, dt):
        nyquist = 0.5 / dt
        if self.cutoff_hz >= nyquist:
            raise ValidationError(
                f"cutoff {self.cutoff_hz} Hz is not below the Nyquist frequency {nyquist} Hz"
            )

    def taps(self, dt):
        self.validate_for(dt)
        # Hamming-windowed sinc, unit DC gain
        return firwin(self.n_taps, self.cutoff_hz, fs=1.0 / dt, window="hamming", scale=True)


def grid_size(span, dt):
    """Number of points of a grid with step `dt` that fit inside `span` seconds."""
    return int(math.floor(span / dt + _GRID_EPS)) + 1


def resample_uniform(t, v, dt_target, t_end=None):
    """Piecewise-linear interpolation of samples `v` taken at `t` onto a uniform grid.

    The grid starts at t[0] with step `dt_target` and stops at the last point
    not beyond `t_end` (default t[-1]). `v` may be 1-D or (channels, samples).
    Requests reaching past the data raise instead of extrapolating.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    if not dt_target > 0:
        raise ValidationError(f"dt_target must be positive, got {dt_target}")
    if t.ndim != 1 or t.size < 2:
        raise ValidationError("resampling needs at least two time stamps")
    if v.shape[-1] != t.size:
        raise ValidationError(f"{t.size} time stamps for {v.shape[-1]} samples")
    if np.any(np.diff(t) <= 0):
        raise ValidationError("time stamps must be strictly increasing")

    stop = t[-1] if t_end is None else float(t_end)
    if stop > t[-1] + _GRID_EPS * dt_target:
        raise WindowError(f"grid end {stop} s lies past the last sample at {t[-1]} s")

    n = grid_size(stop - t[0], dt_target)
    grid = np.minimum(t[0] + np.arange(n) * dt_target, t[-1])
    if v.ndim == 1:
        return np.interp(grid, t, v)
    return np.vstack([np.interp(grid, t, row) for row in v])


def load_csv(path, dt_target=config.DEFAULT_DT):
    """Read a `time,<ch1>,<ch2>,...` CSV file and resample it to a uniform grid."""
    try:
        # round_trip parsing keeps every written float bit-exact
        df = pd.read_csv(path, skipinitialspace=True, float_precision="round_trip")
    except FileNotFoundError:
        raise ValidationError(f"{path} does not exist")
    except pd.errors.EmptyDataError:
        raise ValidationError(f"{path} is empty")
    except pd.errors.ParserError as exc:
        match = re.search(r"line (\d+)", str(exc))
        raise ParseError(str(exc), line=int(match.group(1)) if match else None) from exc

    if df.shape[1] < 2:
        raise ValidationError(f"{path} needs a time column and at least one channel")
    if len(df) == 0:
        raise ValidationError(f"{path} has a header but no samples")

    # columns that did not parse as numbers are coerced only to locate the bad cell
    numeric = df.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().any(axis=1).to_numpy()
    if bad.any():
        row = int(np.argmax(bad))
        column = numeric.columns[numeric.iloc[row].isna().to_numpy()][0]
        # +2: header line and 1-based numbering
        raise ParseError(f"non-numeric or missing value in column '{column}'", line=row + 2)

    t = numeric.iloc[:, 0].to_numpy(dtype=float)
    values = numeric.iloc[:, 1:].to_numpy(dtype=float).T
    channels = tuple(df.columns[1:])
    if t.size < 2:
        raise ValidationError(f"{path} needs at least two samples")
    steps = np.diff(t)
    if np.any(steps <= 0):
        row = int(np.argmax(steps <= 0))
        raise ValidationError(f"time stamps must be strictly increasing (line {row + 3})")

    if np.allclose(steps, dt_target, rtol=0.0, atol=_GRID_EPS * dt_target):
        resampled = values
    else:
        logger.info("Resampling %s from irregular stamps onto dt=%s s", path, dt_target)
        resampled = resample_uniform(t, values, dt_target)
    return MultivariateSeries(channels, dt_target, resampled, t[0])


def save_csv(series, path):
    """Write a series in the format `load_csv` reads."""
    series.to_frame().to_csv(path, index=False)


def zscore_fit(series, std_fallback=None):
    """Per-channel mean and population standard deviation.

    A constant channel raises unless `std_fallback` is given, in which case
    that value is used as its std.
    """
    if series.n_samples < 2:
        raise ValidationError("z-score fit needs at least two samples per channel")
    mean = series.values.mean(axis=1)
    std = series.values.std(axis=1)
    scale = np.maximum(np.abs(mean), 1.0)
    constant = std <= 1e-12 * scale
    fallback = []
    for i in np.flatnonzero(constant):
        name = series.channels[i]
        if std_fallback is None:
            raise ZeroVarianceError(name)
        logger.warning("Channel '%s' is constant; using fallback std %s", name, std_fallback)
        std[i] = std_fallback
        fallback.append(name)
    return ZScoreStats(series.channels, mean, std, tuple(fallback))


def _check_stats(series, stats):
    if tuple(stats.channels) != tuple(series.channels):
        raise ValidationError(f"statistics for {stats.channels} applied to {series.channels}")


def zscore_apply(series, stats):
    _check_stats(series, stats)
    return series.with_values((series.values - stats.mean[:, None]) / stats.std[:, None])


def zscore_invert(series, stats):
    _check_stats(series, stats)
    return series.with_values(series.values * stats.std[:, None] + stats.mean[:, None])


def lowpass_filter(series, spec=None):
    """Zero-phase FIR low-pass filtering of every channel independently.

    The symmetric kernel is centred on each output sample, so there is no
    group delay; edges are extended by reflection to keep the length.
    """
    spec = spec or FilterSpec()
    taps = spec.taps(series.dt)
    half = (spec.n_taps - 1) // 2
    mode = "reflect" if series.n_samples > 1 else "edge"
    padded = np.pad(series.values, ((0, 0), (half, half)), mode=mode)
    filtered = np.vstack([np.convolve(row, taps, mode="valid") for row in padded])
    return series.with_values(filtered)
