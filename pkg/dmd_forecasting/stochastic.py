"""Stochastic Hankel-DMD: a Monte-Carlo ensemble over the training length and
delay depth, summarised by its mean, population std and a Chebyshev band.

All (n_tr, n_d) draws are taken from the seeded generator before any fit runs,
so the result does not depend on how the fits are scheduled.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from tqdm import tqdm

from dmd_forecasting import config
from dmd_forecasting.dmd import RankPolicy
from dmd_forecasting.errors import EnsembleError, HdmdError, ValidationError, WindowError
from dmd_forecasting.hankel import HdmdConfig, fit_hdmd, hankel_columns, predict_steps, to_samples
from dmd_forecasting.series import MultivariateSeries

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ShdmdConfig:
    n_realizations: int = config.SHDMD_REALIZATIONS
    # training length ~ U(lo, hi) in reference periods
    l_tr_range: tuple = config.SHDMD_LTR_RANGE
    # delay ~ U(lo, hi) as a fraction of the drawn training length
    l_d_ratio_range: tuple = config.SHDMD_LD_RATIO_RANGE
    coverage: float = config.COVERAGE_FACTOR
    seed: int = 0
    max_retries: int = 100
    rank_policy: RankPolicy = field(default_factory=RankPolicy.tolerance)
    std_fallback: float = None
    growth_guard: float = config.GROWTH_GUARD
    max_failure_fraction: float = 0.5

    def __post_init__(self):
        if len(self.l_tr_range) != 2 or len(self.l_d_ratio_range) != 2:
            raise ValidationError("ranges are (lo, hi) pairs")
        lo, hi = self.l_tr_range
        r_lo, r_hi = self.l_d_ratio_range
        if self.n_realizations < 1:
            raise ValidationError(f"need at least one realization, got {self.n_realizations}")
        if not 0 < lo <= hi:
            raise ValidationError(f"training-length range must satisfy 0 < lo <= hi, got {self.l_tr_range}")
        if not 0 < r_lo <= r_hi <= 1:
            raise ValidationError(f"delay-ratio range must satisfy 0 < lo <= hi <= 1, got {self.l_d_ratio_range}")
        if not self.coverage > 0:
            raise ValidationError(f"coverage factor must be positive, got {self.coverage}")


@dataclass(frozen=True)
class Realization:
    index: int
    n_tr: int
    n_d: int
    l_tr: float
    l_d: float
    error: str = None
    warnings: tuple = ()

    @property
    def ok(self):
        return self.error is None


@dataclass(frozen=True)
class StochasticForecast:
    mean: MultivariateSeries
    std: MultivariateSeries
    lower: MultivariateSeries
    upper: MultivariateSeries
    coverage: float
    realizations: tuple
    members: np.ndarray  # (ensemble size, channels, samples), successful realizations only

    @property
    def ensemble_size(self):
        return self.members.shape[0]

    @property
    def n_failed(self):
        return sum(1 for r in self.realizations if not r.ok)

    def to_frame(self):
        df = pd.DataFrame({"time": self.mean.times})
        for i, ch in enumerate(self.mean.channels):
            df[f"{ch}_mean"] = self.mean.values[i]
            df[f"{ch}_std"] = self.std.values[i]
            df[f"{ch}_lo"] = self.lower.values[i]
            df[f"{ch}_hi"] = self.upper.values[i]
        return df

    def realizations_frame(self):
        return pd.DataFrame([{
            "index": r.index,
            "l_tr": r.l_tr,
            "l_d": r.l_d,
            "n_tr": r.n_tr,
            "n_d": r.n_d,
            "error": r.error or "",
            "warnings": "; ".join(r.warnings),
        } for r in self.realizations])

    def save_csv(self, path):
        self.to_frame().to_csv(path, index=False)


def sample_hyperparams(rng, shdmd_config, reference_period, dt):
    """Draw one (n_tr, n_d) pair; counts are the integer parts of l / dt."""
    if not reference_period > 0:
        raise ValidationError(f"reference period must be positive, got {reference_period}")
    lo, hi = shdmd_config.l_tr_range
    r_lo, r_hi = shdmd_config.l_d_ratio_range
    for _ in range(shdmd_config.max_retries):
        l_tr = rng.uniform(lo, hi) * reference_period
        l_d = rng.uniform(r_lo, r_hi) * l_tr
        n_tr = to_samples(l_tr, dt, "floor")
        n_d = to_samples(l_d, dt, "floor")
        if n_tr >= 2 and hankel_columns(n_tr, n_d) >= 1:
            return n_tr, n_d
    raise ValidationError(
        f"no valid (n_tr, n_d) pair after {shdmd_config.max_retries} draws; "
        f"widen the ranges or lower dt"
    )


def draw_ensemble(shdmd_config, reference_period, dt):
    rng = np.random.default_rng(shdmd_config.seed)
    return [sample_hyperparams(rng, shdmd_config, reference_period, dt)
            for _ in range(shdmd_config.n_realizations)]


def chebyshev_band(mean, std, k=config.COVERAGE_FACTOR):
    """mean -/+ k * std; k = 2 covers at least 75% of any distribution."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    if mean.shape != std.shape:
        raise ValidationError(f"mean {mean.shape} and std {std.shape} differ in shape")
    if not k > 0:
        raise ValidationError(f"coverage factor must be positive, got {k}")
    return mean - k * std, mean + k * std


def ensemble_coverage(result, k=None):
    """Per-channel fraction of ensemble-member samples inside mean -/+ k * std."""
    k = result.coverage if k is None else k
    lower, upper = chebyshev_band(result.mean.values, result.std.values, k)
    slack = 1e-12 * max(np.abs(result.members).max(), 1.0)
    inside = (result.members >= lower - slack) & (result.members <= upper + slack)
    return inside.mean(axis=(0, 2))


def _run_realization(series, shdmd_config, t_end, n_steps, index, n_tr, n_d):
    dt = series.dt
    info = dict(index=index, n_tr=n_tr, n_d=n_d, l_tr=n_tr * dt, l_d=n_d * dt)
    try:
        hdmd_config = HdmdConfig(n_tr, n_d, shdmd_config.rank_policy,
                                 shdmd_config.std_fallback, shdmd_config.growth_guard)
        forecaster = fit_hdmd(series, hdmd_config, t_end)
        prediction = predict_steps(forecaster, n_steps)
    except HdmdError as exc:
        logger.warning("Realization %d (n_tr=%d, n_d=%d) dropped: %s", index, n_tr, n_d, exc)
        return Realization(error=str(exc), **info), None
    return Realization(warnings=forecaster.warnings, **info), prediction.values


def shdmd_forecast(series, shdmd_config, reference_period, t_end, horizon, workers=1, progress=False):
    n_steps = to_samples(horizon, series.dt, "floor")
    if n_steps < 1:
        raise ValidationError(f"horizon {horizon} s is shorter than one sample ({series.dt} s)")

    draws = draw_ensemble(shdmd_config, reference_period, series.dt)
    available = series.index_of(t_end) + 1
    longest = max(n_tr for n_tr, _ in draws)
    if longest > available or available > series.n_samples:
        raise WindowError(
            f"the longest drawn training window ({longest} samples) does not fit before t={t_end:g} s "
            f"({available} samples available)"
        )

    def run(item):
        index, (n_tr, n_d) = item
        return _run_realization(series, shdmd_config, t_end, n_steps, index, n_tr, n_d)

    items = list(enumerate(draws))
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        # map keeps submission order, so the reduction below is schedule-independent
        outcomes = list(tqdm(pool.map(run, items), total=len(items),
                             desc="SHDMD realizations", disable=not progress))

    realizations = tuple(r for r, _ in outcomes)
    members = [values for _, values in outcomes if values is not None]
    failed = len(realizations) - len(members)
    if not members or failed > shdmd_config.max_failure_fraction * len(realizations):
        raise EnsembleError(f"{failed} of {len(realizations)} realizations failed")
    if failed:
        logger.warning("Ensemble reduced to %d of %d realizations", len(members), len(realizations))

    members = np.stack(members)
    mean = members.mean(axis=0)
    std = members.std(axis=0)
    lower, upper = chebyshev_band(mean, std, shdmd_config.coverage)

    t_first = series.t0 + series.index_of(t_end) * series.dt + series.dt

    def as_series(values):
        return MultivariateSeries(series.channels, series.dt, values, t_first)

    return StochasticForecast(
        mean=as_series(mean),
        std=as_series(std),
        lower=as_series(lower),
        upper=as_series(upper),
        coverage=shdmd_config.coverage,
        realizations=realizations,
        members=members,
    )
