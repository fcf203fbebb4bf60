"""Delay embedding and the Hankel-DMD forecaster.

The augmented state stacks the current snapshot on top of `n_d` copies
delayed by one sample each; the newest copy is the top block. Training
windows end at `t_end`; forecasts start one sample later.
"""
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from dmd_forecasting import config
from dmd_forecasting.dmd import (
    DmdModel,
    RankPolicy,
    SnapshotPair,
    fit_exact_dmd,
    forecast,
    unstable_modes,
)
from dmd_forecasting.errors import ShapeError, ValidationError, WindowError
from dmd_forecasting.series import MultivariateSeries, ZScoreStats, zscore_apply, zscore_fit

logger = logging.getLogger(__name__)

_COUNT_EPS = 1e-9


def to_samples(length, dt, rounding="nearest"):
    """Convert a length in seconds to a sample count.

    'nearest' gives the reference grid counts (4 x 7.3143 s -> 293);
    'floor' takes the integer part, as the stochastic draws do.
    """
    ratio = length / dt
    if rounding == "nearest":
        return int(math.floor(ratio + 0.5))
    if rounding == "floor":
        return int(math.floor(ratio + _COUNT_EPS))
    raise ValidationError(f"unknown rounding '{rounding}'")


def hankel_columns(n_tr, n_d):
    return n_tr - 1 - n_d


@dataclass(frozen=True)
class HdmdConfig:
    n_tr: int
    n_d: int = 0
    rank_policy: RankPolicy = field(default_factory=RankPolicy.tolerance)
    # std used for constant training channels; None rejects them
    std_fallback: float = None
    growth_guard: float = config.GROWTH_GUARD

    def __post_init__(self):
        if self.n_tr < 2:
            raise ShapeError(f"training window needs at least 2 samples, got {self.n_tr}")
        if self.n_d < 0:
            raise ShapeError(f"delay depth must be >= 0, got {self.n_d}")
        if hankel_columns(self.n_tr, self.n_d) < 1:
            raise ShapeError(
                f"n_tr={self.n_tr} with n_d={self.n_d} leaves no Hankel column; "
                f"need n_tr >= {self.n_d + 2}"
            )

    @classmethod
    def from_lengths(cls, l_tr, l_d, dt, rounding="nearest", **kwargs):
        return cls(to_samples(l_tr, dt, rounding), to_samples(l_d, dt, rounding), **kwargs)

    def lengths(self, dt):
        return self.n_tr * dt, self.n_d * dt


def build_hankel_pair(series, n_d):
    """Hankel snapshot matrices with `n_d` one-sample delays.

    Block b of X-hat (b = 0 on top) holds x_{d+1-b} ... x_{m-1-b}; X-hat' is
    the same matrix advanced by one sample.
    """
    data = series.values if isinstance(series, MultivariateSeries) else np.atleast_2d(series)
    dt = series.dt if isinstance(series, MultivariateSeries) else 1.0
    m = data.shape[1]
    if n_d < 0:
        raise ShapeError(f"delay depth must be >= 0, got {n_d}")
    if m < n_d + 2:
        raise ShapeError(f"{m} samples cannot hold {n_d} delays; at least {n_d + 2} are required")
    cols = m - 1 - n_d
    X = np.vstack([data[:, n_d - b: n_d - b + cols] for b in range(n_d + 1)])
    Xp = np.vstack([data[:, n_d - b + 1: n_d - b + 1 + cols] for b in range(n_d + 1)])
    return SnapshotPair(X, Xp, dt)


@dataclass(frozen=True)
class HdmdForecaster:
    config: HdmdConfig
    model: DmdModel
    stats: ZScoreStats
    channels: tuple
    dt: float
    t_end: float
    warnings: tuple = ()

    @property
    def n_channels(self):
        return len(self.channels)

    @property
    def augmented_dim(self):
        return self.n_channels * (self.config.n_d + 1)

    def to_dict(self):
        doc = self.model.to_dict()
        doc.update({
            "channels": list(self.channels),
            "n_tr": self.config.n_tr,
            "n_d": self.config.n_d,
            "rank_policy": str(self.config.rank_policy),
            "std_fallback": self.config.std_fallback,
            "growth_guard": self.config.growth_guard,
            "t_end": self.t_end,
            "zscore": self.stats.to_dict(),
            "warnings": list(self.warnings),
        })
        return doc

    @classmethod
    def from_dict(cls, data):
        hdmd_config = HdmdConfig(
            n_tr=data["n_tr"],
            n_d=data["n_d"],
            rank_policy=RankPolicy.parse(data["rank_policy"]),
            std_fallback=data.get("std_fallback"),
            growth_guard=data.get("growth_guard", config.GROWTH_GUARD),
        )
        return cls(
            config=hdmd_config,
            model=DmdModel.from_dict(data),
            stats=ZScoreStats.from_dict(data["zscore"]),
            channels=tuple(data["channels"]),
            dt=data["dt"],
            t_end=data["t_end"],
            warnings=tuple(data.get("warnings", ())),
        )

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)


def load_forecaster(path):
    """A forecaster written by `HdmdForecaster.save`."""
    with open(path) as f:
        return HdmdForecaster.from_dict(json.load(f))


def training_window(series, n_tr, t_end):
    """Index range [start, stop) of the n_tr samples ending at t_end."""
    end = series.index_of(t_end)
    start = end - n_tr + 1
    if start < 0 or end >= series.n_samples:
        raise WindowError(
            f"training window of {n_tr} samples ending at t={t_end:g} s does not fit in "
            f"[{series.t0:g}, {series.t0 + series.duration:g}] s"
        )
    return start, end + 1


def fit_hdmd(series, config, t_end):
    start, stop = training_window(series, config.n_tr, t_end)
    window = series.window(start, stop)
    stats = zscore_fit(window, std_fallback=config.std_fallback)
    normalized = zscore_apply(window, stats)
    pair = build_hankel_pair(normalized, config.n_d)
    model = fit_exact_dmd(pair, config.rank_policy)

    notes = list(model.flags)
    unstable = unstable_modes(model, config.growth_guard)
    if unstable.size:
        notes.append(f"{unstable.size} unstable mode(s) above |lambda| = {config.growth_guard}")
    if stats.fallback_channels:
        notes.append(f"constant channels {list(stats.fallback_channels)} used the std fallback")
    return HdmdForecaster(
        config=config,
        model=model,
        stats=stats,
        channels=series.channels,
        dt=series.dt,
        t_end=window.t0 + (window.n_samples - 1) * window.dt,
        warnings=tuple(notes),
    )


def predict_steps(forecaster, n_steps):
    """Physical-unit forecast of the undelayed state for n_steps samples after t_end."""
    augmented = forecast(forecaster.model, n_steps, forecaster.config.growth_guard)
    top = augmented[: forecaster.n_channels]
    values = top * forecaster.stats.std[:, None] + forecaster.stats.mean[:, None]
    return MultivariateSeries(forecaster.channels, forecaster.dt, values,
                              forecaster.t_end + forecaster.dt)


def predict(forecaster, horizon):
    if horizon < forecaster.dt * (1 - _COUNT_EPS):
        raise ValidationError(f"horizon {horizon} s is shorter than one sample ({forecaster.dt} s)")
    return predict_steps(forecaster, to_samples(horizon, forecaster.dt, "floor"))
