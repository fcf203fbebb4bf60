"""Experiment harness: full-factorial sweeps over the Hankel-DMD training and
delay lengths, shared random test instants, boxplot summaries, paired
filtered/unfiltered and deterministic/stochastic comparisons, and the
files a run leaves behind.

Work items are independent fits. They run in a thread pool and are reduced
in submission order, so results never depend on scheduling.
"""
import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from tqdm import tqdm

from dmd_forecasting import config
from dmd_forecasting.dmd import RankPolicy
from dmd_forecasting.errors import HdmdError, ValidationError, WindowError
from dmd_forecasting.hankel import HdmdConfig, fit_hdmd, hankel_columns, predict_steps, to_samples
from dmd_forecasting.series import FilterSpec, lowpass_filter
from dmd_forecasting.stochastic import ShdmdConfig, shdmd_forecast
from evaluation.metrics import evaluate_all

logger = logging.getLogger(__name__)

METRICS = ("nrmse", "nammae", "jsd")


@dataclass(frozen=True)
class Cell:
    l_tr: float  # multiples of the reference period
    l_d: float
    n_tr: int
    n_d: int
    skip_reason: str = None

    @property
    def skipped(self):
        return self.skip_reason is not None


@dataclass(frozen=True)
class SweepPlan:
    ltr_levels: tuple = config.LTR_LEVELS
    ld_levels: tuple = config.LD_LEVELS
    lte_levels: tuple = config.LTE_LEVELS
    n_instants: int = config.N_TEST_INSTANTS
    seed: int = 0
    filtered: bool = True
    bins: int = config.JSD_BINS
    reference_period: float = config.REFERENCE_PERIOD
    filter_spec: FilterSpec = field(default_factory=FilterSpec)
    rank_policy: RankPolicy = field(default_factory=RankPolicy.tolerance)
    std_fallback: float = None
    growth_guard: float = config.GROWTH_GUARD

    def __post_init__(self):
        for name in ("ltr_levels", "ld_levels", "lte_levels"):
            levels = tuple(float(v) for v in getattr(self, name))
            if not levels or any(v <= 0 for v in levels):
                raise ValidationError(f"{name} must be a non-empty list of positive values")
            object.__setattr__(self, name, levels)
        if self.n_instants < 1:
            raise ValidationError(f"need at least one test instant, got {self.n_instants}")
        if not self.reference_period > 0:
            raise ValidationError(f"reference period must be positive, got {self.reference_period}")
        if self.bins < 2:
            raise ValidationError(f"JSD needs at least 2 bins, got {self.bins}")

    @classmethod
    def full_grid(cls, **overrides):
        """The default 5 x 6 grid, three test lengths and 250 instants."""
        return cls(**overrides)

    def cells(self, dt):
        """All (l_tr, l_d) cells in grid order; cells without a Hankel column are skipped."""
        out = []
        for l_tr in self.ltr_levels:
            for l_d in self.ld_levels:
                n_tr = to_samples(l_tr * self.reference_period, dt)
                n_d = to_samples(l_d * self.reference_period, dt)
                reason = None
                if hankel_columns(n_tr, n_d) < 1:
                    reason = f"n_tr - 1 - n_d = {hankel_columns(n_tr, n_d)} < 1"
                out.append(Cell(l_tr, l_d, n_tr, n_d, reason))
        return out

    def test_samples(self, dt):
        return [to_samples(l_te * self.reference_period, dt) for l_te in self.lte_levels]

    def to_dict(self):
        return {
            "ltr_levels": list(self.ltr_levels),
            "ld_levels": list(self.ld_levels),
            "lte_levels": list(self.lte_levels),
            "n_instants": self.n_instants,
            "seed": self.seed,
            "filtered": self.filtered,
            "bins": self.bins,
            "reference_period": self.reference_period,
            "cutoff_hz": self.filter_spec.cutoff_hz,
            "filter_taps": self.filter_spec.n_taps,
            "rank_policy": str(self.rank_policy),
            "std_fallback": self.std_fallback,
            "growth_guard": self.growth_guard,
        }


@dataclass(frozen=True)
class BoxplotStats:
    q1: float
    median: float
    q3: float
    whisker_lo: float
    whisker_hi: float
    n_outliers: int
    n: int


def boxplot_stats(samples):
    """Quartiles by linear interpolation; whiskers at the farthest points within 1.5 IQR."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValidationError("boxplot statistics need at least one sample")
    q1, median, q3 = np.percentile(x, [25, 50, 75])
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    whisker_lo = min(x[x >= lo_fence].min(), q1)
    whisker_hi = max(x[x <= hi_fence].max(), q3)
    n_outliers = int(np.count_nonzero((x < lo_fence) | (x > hi_fence)))
    return BoxplotStats(float(q1), float(median), float(q3),
                        float(whisker_lo), float(whisker_hi), n_outliers, int(x.size))


def dataset_hash(series):
    """SHA-256 of channel names, grid and values."""
    h = hashlib.sha256()
    h.update(json.dumps([list(series.channels), series.dt, series.t0]).encode())
    h.update(np.ascontiguousarray(series.values, dtype="<f8").tobytes())
    return h.hexdigest()


def random_test_instants(series, plan):
    """Seeded, sorted end-of-training times with room for every window of the plan.

    An instant at sample i needs max(n_tr) samples ending at i and max(n_te)
    samples after it.
    """
    n_tr_max = max(to_samples(l * plan.reference_period, series.dt) for l in plan.ltr_levels)
    n_te_max = max(plan.test_samples(series.dt))
    lo = n_tr_max - 1
    hi = series.n_samples - 1 - n_te_max
    if hi < lo:
        needed = (n_tr_max + n_te_max) * series.dt
        raise WindowError(
            f"series of {series.n_samples} samples is too short for the plan; "
            f"at least {n_tr_max + n_te_max} samples ({needed:g} s) are required"
        )
    rng = np.random.default_rng(plan.seed)
    indices = np.sort(rng.integers(lo, hi + 1, size=plan.n_instants))
    return series.t0 + indices * series.dt


@dataclass(frozen=True)
class SweepSample:
    cell: Cell
    instant: int  # position in the shared instant list
    t_end: float
    l_te: float
    report: object = None  # MetricsReport, None when the fit failed
    error: str = None

    @property
    def ok(self):
        return self.error is None


@dataclass(frozen=True)
class SweepResult:
    plan: SweepPlan
    instants: np.ndarray
    samples: tuple
    skipped: tuple  # skipped cells
    dataset_id: str = ""

    @property
    def n_failed(self):
        return sum(1 for s in self.samples if not s.ok)

    def samples_frame(self):
        rows = []
        for s in self.samples:
            avg = s.report.averaged if s.ok else dict.fromkeys(METRICS, np.nan)
            rows.append({
                "l_tr": s.cell.l_tr,
                "l_d": s.cell.l_d,
                "l_te": s.l_te,
                "instant": s.instant,
                "t_end": s.t_end,
                **avg,
                "error": s.error or "",
            })
        return pd.DataFrame(rows, columns=["l_tr", "l_d", "l_te", "instant", "t_end", *METRICS, "error"])

    def summary_frame(self):
        """One row per (cell, l_te, metric) with boxplot statistics of the successful samples."""
        df = self.samples_frame()
        rows = []
        for (l_tr, l_d, l_te), group in df.groupby(["l_tr", "l_d", "l_te"], sort=False):
            ok = group[group["error"] == ""]
            for metric in METRICS:
                row = {"l_tr": l_tr, "l_d": l_d, "l_te": l_te, "metric": metric,
                       "n_failed": int(len(group) - len(ok))}
                if len(ok):
                    row.update(vars(boxplot_stats(ok[metric])))
                rows.append(row)
        return pd.DataFrame(rows)

    def medians(self, metric="nrmse"):
        summary = self.summary_frame()
        summary = summary[summary["metric"] == metric]
        return summary.set_index(["l_tr", "l_d", "l_te"])["median"]

    def metric_correlation(self, l_te=None):
        """Pearson correlation between the channel-averaged metrics over all successful samples."""
        df = self.samples_frame()
        df = df[df["error"] == ""]
        if l_te is not None:
            df = df[df["l_te"] == l_te]
        return df[list(METRICS)].corr(method="pearson")

    def manifest(self):
        return {
            "plan": self.plan.to_dict(),
            "seed": self.plan.seed,
            "dataset_hash": self.dataset_id,
            "instants": [float(t) for t in self.instants],
            "skipped_cells": [{"l_tr": c.l_tr, "l_d": c.l_d, "n_tr": c.n_tr, "n_d": c.n_d,
                               "reason": c.skip_reason} for c in self.skipped],
            "n_samples": len(self.samples),
            "n_failed": self.n_failed,
        }

    def save(self, out_dir, prefix="sweep", extra=None):
        """Manifest, raw samples, boxplot summary and long-format .dat files for plotting."""
        os.makedirs(out_dir, exist_ok=True)
        manifest = self.manifest()
        manifest.update(extra or {})
        with open(os.path.join(out_dir, f"{prefix}_manifest.json"), "w") as f:
            json.dump(manifest, f, indent=2)
        samples = self.samples_frame()
        samples.to_csv(os.path.join(out_dir, f"{prefix}_samples.csv"), index=False)
        summary = self.summary_frame()
        summary.to_csv(os.path.join(out_dir, f"{prefix}_summary.csv"), index=False)

        # whitespace-separated, one file per metric
        for metric in METRICS:
            rows = summary[summary["metric"] == metric].drop(columns=["metric"])
            rows.to_csv(os.path.join(out_dir, f"{prefix}_boxplot_{metric}.dat"),
                        sep=" ", index=False, na_rep="nan")
        long = samples[samples["error"] == ""].melt(
            id_vars=["l_tr", "l_d", "l_te", "instant"], value_vars=list(METRICS),
            var_name="metric", value_name="value")
        long.to_csv(os.path.join(out_dir, f"{prefix}_long.dat"), sep=" ", index=False)
        return out_dir


def _evaluate_cell(series, plan, cell, instant, t_end, n_te_levels):
    """One fit, one forecast over the longest test window, one report per test length."""
    try:
        hdmd_config = HdmdConfig(cell.n_tr, cell.n_d, plan.rank_policy, plan.std_fallback, plan.growth_guard)
        forecaster = fit_hdmd(series, hdmd_config, t_end)
        n_te_max = max(n_te_levels)
        prediction = predict_steps(forecaster, n_te_max)
        start = series.index_of(t_end) + 1
        truth = series.window(start, start + n_te_max)
        samples = []
        for l_te, n_te in zip(plan.lte_levels, n_te_levels):
            report = evaluate_all(prediction.values[:, :n_te], truth.values[:, :n_te], plan.bins, series.channels)
            samples.append(SweepSample(cell, instant, t_end, l_te, report=report))
        return samples
    except HdmdError as exc:
        logger.warning("Cell (l_tr=%g, l_d=%g) at t=%g s failed: %s", cell.l_tr, cell.l_d, t_end, exc)
        return [SweepSample(cell, instant, t_end, l_te, error=str(exc)) for l_te in plan.lte_levels]


def prepare(series, plan):
    """The record the sweep fits and scores: filtered over its whole length when the plan says so."""
    if plan.filtered:
        return lowpass_filter(series, plan.filter_spec)
    return series


def run_sweep(series, plan, workers=1, progress=False, instants=None):
    """Fit and score every valid (l_tr, l_d) cell at every shared instant and test length."""
    dataset_id = dataset_hash(series)
    if instants is None:
        instants = random_test_instants(series, plan)
    data = prepare(series, plan)
    cells = plan.cells(series.dt)
    skipped = tuple(c for c in cells if c.skipped)
    for c in skipped:
        logger.warning("Skipping cell l_tr=%gT, l_d=%gT: %s", c.l_tr, c.l_d, c.skip_reason)
    n_te_levels = plan.test_samples(series.dt)

    items = [(cell, i, float(t)) for cell in cells if not cell.skipped for i, t in enumerate(instants)]

    def run(item):
        cell, i, t_end = item
        return _evaluate_cell(data, plan, cell, i, t_end, n_te_levels)

    logger.info("Sweep: %d cells (%d skipped) x %d instants x %d test lengths",
                len(cells) - len(skipped), len(skipped), len(instants), len(n_te_levels))
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        outcomes = list(tqdm(pool.map(run, items), total=len(items),
                             desc="Sweep", disable=not progress))
    samples = tuple(s for batch in outcomes for s in batch)
    result = SweepResult(plan, np.asarray(instants, dtype=float), samples, skipped, dataset_id)
    if result.n_failed:
        logger.warning("%d of %d sweep samples failed", result.n_failed, len(samples))
    return result


@dataclass(frozen=True)
class PairedComparison:
    """Two results over the same instants, summarised side by side."""
    first: SweepResult
    second: SweepResult
    labels: tuple = ("filtered", "unfiltered")

    def paired_medians(self, metric="nrmse"):
        a, b = self.labels
        return pd.DataFrame({a: self.first.medians(metric), b: self.second.medians(metric)})

    def save(self, out_dir):
        for label, result in zip(self.labels, (self.first, self.second)):
            result.save(out_dir, prefix=label)
        frames = [self.paired_medians(m).assign(metric=m) for m in METRICS]
        pd.concat(frames).reset_index().to_csv(os.path.join(out_dir, "paired_medians.csv"), index=False)
        return out_dir


def compare_filtered_unfiltered(series, plan, workers=1, progress=False):
    """The same sweep with the filter on and off over one shared set of instants."""
    instants = random_test_instants(series, plan)
    filtered = run_sweep(series, replace(plan, filtered=True), workers, progress, instants)
    unfiltered = run_sweep(series, replace(plan, filtered=False), workers, progress, instants)
    return PairedComparison(filtered, unfiltered, ("filtered", "unfiltered"))


@dataclass(frozen=True)
class StochasticComparison:
    samples: pd.DataFrame  # one row per (instant, l_te) with both methods' averaged metrics
    ltr: float
    ld_ratio: float
    n_realizations: int

    def medians(self):
        cols = [f"{method}_{m}" for method in ("hdmd", "shdmd") for m in METRICS]
        ok = self.samples[self.samples["error"] == ""]
        return ok.groupby("l_te")[cols].median()

    def save(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        self.samples.to_csv(os.path.join(out_dir, "det_vs_stochastic_samples.csv"), index=False)
        self.medians().to_csv(os.path.join(out_dir, "det_vs_stochastic_medians.csv"))
        return out_dir


def compare_deterministic_stochastic(series, plan, shdmd_config=None,
                                     ltr=config.RECOMMENDED_LTR, ld_ratio=config.RECOMMENDED_LD_RATIO,
                                     workers=1, progress=False, instants=None):
    """Deterministic HDMD at (ltr T, ld_ratio * l_tr) against the SHDMD mean on shared instants.

    The instant range is sized by the plan's training levels, which must cover
    both `ltr` and the upper end of the stochastic training range. A failed fit
    or score at one instant is recorded in that row's `error` column.
    """
    shdmd_config = shdmd_config or ShdmdConfig(seed=plan.seed, rank_policy=plan.rank_policy,
                                               std_fallback=plan.std_fallback,
                                               growth_guard=plan.growth_guard)
    longest = max(ltr, shdmd_config.l_tr_range[1])
    if max(plan.ltr_levels) < longest:
        plan = replace(plan, ltr_levels=tuple(plan.ltr_levels) + (longest,))
    if instants is None:
        instants = random_test_instants(series, plan)
    data = prepare(series, plan)
    T = plan.reference_period
    n_te_levels = plan.test_samples(series.dt)
    n_te_max = max(n_te_levels)
    hdmd_config = HdmdConfig.from_lengths(ltr * T, ld_ratio * ltr * T, series.dt,
                                          rank_policy=plan.rank_policy, std_fallback=plan.std_fallback,
                                          growth_guard=plan.growth_guard)

    def run(item):
        i, t_end = item
        try:
            start = data.index_of(t_end) + 1
            truth = data.window(start, start + n_te_max).values
            det = predict_steps(fit_hdmd(data, hdmd_config, t_end), n_te_max).values
            sto = shdmd_forecast(data, shdmd_config, T, t_end, n_te_max * data.dt).mean.values
            rows = []
            for l_te, n_te in zip(plan.lte_levels, n_te_levels):
                row = {"instant": i, "t_end": t_end, "l_te": l_te, "error": ""}
                for method, pred in (("hdmd", det), ("shdmd", sto)):
                    avg = evaluate_all(pred[:, :n_te], truth[:, :n_te], plan.bins, data.channels).averaged
                    row.update({f"{method}_{m}": v for m, v in avg.items()})
                rows.append(row)
            return rows
        except HdmdError as exc:
            logger.warning("Comparison at t=%g s failed: %s", t_end, exc)
            return [{"instant": i, "t_end": t_end, "l_te": l_te, "error": str(exc)}
                    for l_te in plan.lte_levels]

    items = list(enumerate(float(t) for t in instants))
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        outcomes = list(tqdm(pool.map(run, items), total=len(items),
                             desc="HDMD vs SHDMD", disable=not progress))
    columns = ["instant", "t_end", "l_te", "error"] + [f"{method}_{m}" for method in ("hdmd", "shdmd")
                                                       for m in METRICS]
    frame = pd.DataFrame([row for rows in outcomes for row in rows], columns=columns)
    return StochasticComparison(frame, ltr, ld_ratio, shdmd_config.n_realizations)
