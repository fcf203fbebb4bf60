"""Command-line entry point: analyze | forecast | sweep | synth.

Lengths accept unit suffixes: `10T` is ten reference periods, `0.5625R` (delay
only) is a fraction of the training length, a bare number is seconds.
Every command writes manifest.json next to its outputs.
"""
import argparse
import json
import logging
import os
import platform
import sys

import numpy as np
import pandas as pd
import scipy

from dmd_forecasting import config
from dmd_forecasting.dmd import RankPolicy
from dmd_forecasting.errors import HdmdError, ValidationError
from dmd_forecasting.hankel import HdmdConfig, build_hankel_pair, fit_hdmd, predict, to_samples
from dmd_forecasting.modal import modal_energy_ranking, reference_period
from dmd_forecasting.series import FilterSpec, load_csv, lowpass_filter, save_csv, zscore_apply
from dmd_forecasting.stochastic import ShdmdConfig, ensemble_coverage, shdmd_forecast
from dmd_forecasting.synth import KINDS, SynthSpec, demo_dataset, generate
from evaluation.harness import (
    SweepPlan,
    compare_deterministic_stochastic,
    compare_filtered_unfiltered,
    run_sweep,
)
from evaluation.metrics import evaluate_all

logger = logging.getLogger(__name__)

DECISIONS = {
    "grid_rounding": "nearest (l / dt)",
    "stochastic_rounding": "floor (l / dt)",
    "zscore": "population std of the training window",
    "metric_sigma": "population std of the truth window",
    "jsd_density": "shared-edge histograms over the union range",
    "quartiles": "linear interpolation between order statistics",
    "amplitudes": "least squares on the last training snapshot",
    "filter": ("zero-phase Hamming-windowed sinc, reflect-padded, whole record; "
               "the last (taps - 1) / 2 training samples see the start of the test window"),
}


def parse_length(text, period, base=None):
    """Seconds from '10T' (periods), '0.5625R' (fraction of `base`) or plain seconds."""
    text = str(text).strip()
    try:
        if text.endswith(("T", "t")):
            return float(text[:-1]) * period
        if text.endswith(("R", "r")):
            if base is None:
                raise ValidationError(f"'{text}': a ratio length needs a training length to refer to")
            return float(text[:-1]) * base
        return float(text)
    except ValueError:
        raise ValidationError(f"cannot parse length '{text}'; use e.g. 10T, 0.5625R or 73.1")


def _float_list(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ValidationError(f"cannot parse list '{text}'")


def _versions():
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
    }


def write_manifest(out_dir, args, **content):
    doc = {
        "command": args.command,
        "argv": getattr(args, "argv", []),
        "seed": getattr(args, "seed", None),
        "versions": _versions(),
        "decisions": DECISIONS,
    }
    doc.update(content)
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, default=str)
    return path


def load_source(args):
    """The series named by --data, --synth_spec or --demo, plus its provenance."""
    if args.data:
        return load_csv(args.data, dt_target=args.dt), {"data": os.path.abspath(args.data)}
    if args.synth_spec:
        spec = SynthSpec.from_json(args.synth_spec)
        series, _ = generate(spec)
        return series, {"synth_spec": spec.to_dict()}
    series, _ = demo_dataset(duration=args.demo_duration, dt=args.dt, noise_std=args.demo_noise, seed=args.seed)
    return series, {"demo": {"duration": args.demo_duration, "noise_std": args.demo_noise, "seed": args.seed}}


def preprocess(series, args):
    if args.no_filter:
        return series
    return lowpass_filter(series, FilterSpec(args.cutoff, args.taps))


def resolve_period(series, args):
    """The reference period in seconds, estimated from a channel's spectral peak when 'auto'."""
    if str(args.te_period).lower() != "auto":
        return float(args.te_period), None
    channel = args.te_channel or ("wave" if "wave" in series.channels else series.channels[0])
    if channel not in series.channels:
        raise ValidationError(f"unknown channel '{channel}' for the period estimate")
    peak = reference_period(series.channel(channel), series.dt)
    print(f"Reference period from '{channel}': {peak.period_s:.4f} s ({peak.frequency_hz:.4f} Hz)")
    return peak.period_s, {"channel": channel, "frequency_hz": peak.frequency_hz,
                           "period_s": peak.period_s, "resolution_hz": peak.resolution}


def cmd_analyze(args):
    series, source = load_source(args)
    data = preprocess(series, args)
    period, estimate = resolve_period(data, args)
    n_tr = data.n_samples if args.ltr is None else to_samples(parse_length(args.ltr, period), data.dt)
    l_tr = n_tr * data.dt
    n_d = to_samples(parse_length(args.ld, period, l_tr), data.dt) if args.ld else 0
    t_end = data.t0 + data.duration if args.t_end is None else args.t_end
    hdmd_config = HdmdConfig(n_tr, n_d, RankPolicy.parse(args.rank), args.std_fallback)

    forecaster = fit_hdmd(data, hdmd_config, t_end)
    start = data.index_of(forecaster.t_end) - n_tr + 1
    window = zscore_apply(data.window(start, start + n_tr), forecaster.stats)
    report = modal_energy_ranking(forecaster.model, build_hankel_pair(window, n_d), data.channels)

    os.makedirs(args.out, exist_ok=True)
    report.save_json(os.path.join(args.out, "modal_report.json"))
    report.save_table(os.path.join(args.out, "modal_table.txt"))
    forecaster.save(os.path.join(args.out, "model.json"))
    write_manifest(args.out, args, source=source, reference_period=period, period_estimate=estimate,
                   n_tr=n_tr, n_d=n_d, t_end=forecaster.t_end, rank=forecaster.model.rank,
                   warnings=list(forecaster.warnings) + list(report.flags))
    print(report.to_table())
    print(f"Modal report saved to {args.out}")
    return 0


def cmd_forecast(args):
    series, source = load_source(args)
    data = preprocess(series, args)
    period, estimate = resolve_period(data, args)
    horizon = parse_length(args.horizon, period)
    t_end = args.t_end
    if t_end is None:
        # leave room for the horizon so the forecast can be scored
        t_end = data.t0 + data.duration - to_samples(horizon, data.dt, "floor") * data.dt
    os.makedirs(args.out, exist_ok=True)
    content = dict(source=source, reference_period=period, period_estimate=estimate,
                   t_end=t_end, horizon=horizon)

    if args.stochastic:
        shdmd_config = ShdmdConfig(
            n_realizations=args.realizations,
            l_tr_range=_float_list(args.ltr_range),
            l_d_ratio_range=_float_list(args.ld_ratio_range),
            coverage=args.coverage,
            seed=args.seed,
            rank_policy=RankPolicy.parse(args.rank),
            std_fallback=args.std_fallback,
        )
        result = shdmd_forecast(data, shdmd_config, period, t_end, horizon,
                                workers=args.workers, progress=True)
        result.save_csv(os.path.join(args.out, "stochastic_forecast.csv"))
        result.realizations_frame().to_csv(os.path.join(args.out, "realizations.csv"), index=False)
        prediction = result.mean
        coverage = ensemble_coverage(result)
        content.update(n_realizations=args.realizations, ensemble_size=result.ensemble_size,
                       n_failed=result.n_failed, coverage_factor=args.coverage,
                       band_coverage=dict(zip(data.channels, coverage.tolist())))
        print(f"Ensemble of {result.ensemble_size} realizations ({result.n_failed} failed); "
              f"minimum coverage within mean +/- {args.coverage:g} std: {coverage.min():.3f}")
    else:
        l_tr = parse_length(args.ltr, period)
        l_d = parse_length(args.ld, period, l_tr)
        hdmd_config = HdmdConfig.from_lengths(l_tr, l_d, data.dt, rank_policy=RankPolicy.parse(args.rank),
                                              std_fallback=args.std_fallback)
        forecaster = fit_hdmd(data, hdmd_config, t_end)
        prediction = predict(forecaster, horizon)
        save_csv(prediction, os.path.join(args.out, "forecast.csv"))
        forecaster.save(os.path.join(args.out, "model.json"))
        content.update(n_tr=hdmd_config.n_tr, n_d=hdmd_config.n_d, warnings=list(forecaster.warnings))
        print(f"Hankel-DMD with n_tr = {hdmd_config.n_tr}, n_d = {hdmd_config.n_d}, "
              f"rank {forecaster.model.rank}")

    start = data.index_of(t_end) + 1
    if start + prediction.n_samples <= data.n_samples:
        truth = data.window(start, start + prediction.n_samples)
        try:
            report = evaluate_all(prediction, truth)
        except HdmdError as exc:
            # the forecast stands; only its score is unavailable
            logger.error("Scoring the forecast failed: %s", exc)
            content["metrics"] = {"error": str(exc)}
            print(f"Forecast not scored: {exc}")
        else:
            with open(os.path.join(args.out, "metrics.json"), "w") as f:
                json.dump(report.to_dict(), f, indent=2)
            content["metrics"] = report.averaged
            print(", ".join(f"{k.upper()} = {v:.4g}" for k, v in report.averaged.items()))
    write_manifest(args.out, args, **content)
    print(f"Forecast saved to {args.out}")
    return 0


def cmd_sweep(args):
    series, source = load_source(args)
    # the period estimate looks at filtered data; the sweep filters on its own
    period, estimate = resolve_period(preprocess(series, args), args)
    plan = SweepPlan(
        ltr_levels=_float_list(args.ltr_levels),
        ld_levels=_float_list(args.ld_levels),
        lte_levels=_float_list(args.lte_levels),
        n_instants=args.instants,
        seed=args.seed,
        filtered=not args.no_filter,
        bins=args.bins,
        reference_period=period,
        filter_spec=FilterSpec(args.cutoff, args.taps),
        rank_policy=RankPolicy.parse(args.rank),
        std_fallback=args.std_fallback,
    )
    os.makedirs(args.out, exist_ok=True)
    cells = plan.cells(series.dt)
    content = dict(source=source, reference_period=period, period_estimate=estimate,
                   cells=[{"l_tr": c.l_tr, "l_d": c.l_d, "n_tr": c.n_tr, "n_d": c.n_d,
                           "skipped": c.skip_reason} for c in cells])

    if args.compare_filter:
        comparison = compare_filtered_unfiltered(series, plan, args.workers, progress=True)
        comparison.save(args.out)
        print(comparison.paired_medians("nrmse").to_string())
        result = comparison.first
    else:
        result = run_sweep(series, plan, args.workers, progress=True)
        result.save(args.out, extra={"source": source})
        print(result.summary_frame().query("metric == 'nrmse'")
              [["l_tr", "l_d", "l_te", "median", "q1", "q3"]].to_string(index=False))
    for cell in result.skipped:
        print(f"Skipped l_tr = {cell.l_tr:g}T, l_d = {cell.l_d:g}T: {cell.skip_reason}")
    content.update(dataset_hash=result.dataset_id, n_samples=len(result.samples), n_failed=result.n_failed)

    if args.compare_stochastic:
        comparison = compare_deterministic_stochastic(
            series, plan,
            ShdmdConfig(n_realizations=args.realizations, seed=args.seed,
                        rank_policy=plan.rank_policy, std_fallback=plan.std_fallback),
            workers=args.workers, progress=True)
        comparison.save(args.out)
        print(comparison.medians().to_string())
    write_manifest(args.out, args, **content)
    print(f"Sweep results saved to {args.out}")
    return 0


def cmd_synth(args):
    if args.spec:
        spec = SynthSpec.from_json(args.spec)
        series, truth = generate(spec)
        described = spec.to_dict()
    elif args.kind == "demo":
        series, truth = demo_dataset(args.duration, args.dt, args.noise, args.seed)
        described = {"kind": "demo", "duration": args.duration, "dt": args.dt,
                     "noise_std": args.noise, "seed": args.seed}
    else:
        spec = SynthSpec(kind=args.kind, dimension=args.dimension, frequencies=_float_list(args.frequencies),
                         noise_std=args.noise, duration=args.duration, dt=args.dt, seed=args.seed)
        series, truth = generate(spec)
        described = spec.to_dict()

    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, args.name)
    save_csv(series, path)
    with open(os.path.join(args.out, "ground_truth.json"), "w") as f:
        json.dump(truth.to_dict(), f, indent=2)
    write_manifest(args.out, args, spec=described, dataset=path)
    print(f"{series.n_channels} channels x {series.n_samples} samples saved to {path}")
    return 0


def _add_source(parser):
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--data", help="CSV file with a time column and one column per channel.")
    source.add_argument("--synth_spec", help="JSON synthetic-system description to generate the data from.")
    source.add_argument("--demo", action="store_true", help="Use the built-in 15-channel demo record.")
    parser.add_argument("--demo_duration", type=float, default=3600.0, help="Demo record length in seconds.")
    parser.add_argument("--demo_noise", type=float, default=0.0, help="White-noise std added to the demo record.")
    parser.add_argument("--dt", type=float, default=config.DEFAULT_DT, help=f"Sampling step in seconds (default: {config.DEFAULT_DT}).")


def _add_processing(parser):
    parser.add_argument("--no_filter", action="store_true", help="Skip the low-pass filter.")
    parser.add_argument("--cutoff", type=float, default=config.DEFAULT_CUTOFF_HZ, help="Filter cutoff in Hz.")
    parser.add_argument("--taps", type=int, default=config.DEFAULT_FILTER_TAPS, help="Filter kernel length (odd).")
    parser.add_argument("--te_period", default=str(config.REFERENCE_PERIOD), help="Reference period in seconds, or 'auto'.")
    parser.add_argument("--te_channel", help="Channel used when --te_period is auto (default: 'wave' or the first).")
    parser.add_argument("--rank", default="tol:1e-10", help="Rank policy: full, tol:<tau> or fixed:<r>.")
    parser.add_argument("--std_fallback", type=float, help="Std used for constant channels instead of failing.")
    parser.add_argument("--seed", type=int, default=0, help="Random seed.")
    parser.add_argument("--out", default=config.OUTPUT_DIR, help="Output directory.")


def build_parser():
    parser = argparse.ArgumentParser(description="Hankel-DMD analysis and forecasting of multichannel time series.")
    parser.add_argument("--log_file", default=config.LOG_FILE, help="Log file path.")
    sub = parser.add_subparsers(dest="command", required=True)

    analyze = sub.add_parser("analyze", help="Modal analysis of a record.")
    _add_source(analyze)
    _add_processing(analyze)
    analyze.add_argument("--ltr", help="Training length (default: the whole record).")
    analyze.add_argument("--ld", help="Delay length (default: none).")
    analyze.add_argument("--t_end", type=float, help="End of the training window in seconds.")
    analyze.set_defaults(func=cmd_analyze)

    forecast = sub.add_parser("forecast", help="Deterministic or stochastic forecast.")
    _add_source(forecast)
    _add_processing(forecast)
    forecast.add_argument("--workers", type=int, default=config.WORKERS, help="Worker threads.")
    forecast.add_argument("--ltr", default=f"{config.RECOMMENDED_LTR:g}T", help="Training length.")
    forecast.add_argument("--ld", default=f"{config.RECOMMENDED_LD_RATIO:g}R", help="Delay length.")
    forecast.add_argument("--horizon", default="4T", help="Forecast horizon.")
    forecast.add_argument("--t_end", type=float, help="End of the training window (default: leaves the horizon for scoring).")
    forecast.add_argument("--stochastic", action="store_true", help="Run the stochastic ensemble.")
    forecast.add_argument("--realizations", type=int, default=config.SHDMD_REALIZATIONS, help="Ensemble size.")
    forecast.add_argument("--ltr_range", default=",".join(f"{v:g}" for v in config.SHDMD_LTR_RANGE),
                          help="Training-length range in periods, 'lo,hi'.")
    forecast.add_argument("--ld_ratio_range", default=",".join(f"{v:g}" for v in config.SHDMD_LD_RATIO_RANGE),
                          help="Delay range as a fraction of the training length, 'lo,hi'.")
    forecast.add_argument("--coverage", type=float, default=config.COVERAGE_FACTOR, help="Band half-width in stds.")
    forecast.set_defaults(func=cmd_forecast)

    sweep = sub.add_parser("sweep", help="Full-factorial hyperparameter sweep.")
    _add_source(sweep)
    _add_processing(sweep)
    sweep.add_argument("--workers", type=int, default=config.WORKERS, help="Worker threads.")
    sweep.add_argument("--ltr_levels", default=",".join(f"{v:g}" for v in config.LTR_LEVELS), help="Training lengths in periods.")
    sweep.add_argument("--ld_levels", default=",".join(f"{v:g}" for v in config.LD_LEVELS), help="Delay lengths in periods.")
    sweep.add_argument("--lte_levels", default=",".join(f"{v:g}" for v in config.LTE_LEVELS), help="Test lengths in periods.")
    sweep.add_argument("--instants", type=int, default=config.N_TEST_INSTANTS, help="Number of random test instants.")
    sweep.add_argument("--bins", type=int, default=config.JSD_BINS, help="JSD histogram bins.")
    sweep.add_argument("--compare_filter", action="store_true", help="Run with and without the filter on shared instants.")
    sweep.add_argument("--compare_stochastic", action="store_true", help="Also compare deterministic HDMD with the ensemble mean.")
    sweep.add_argument("--realizations", type=int, default=config.SHDMD_REALIZATIONS, help="Ensemble size for the comparison.")
    sweep.set_defaults(func=cmd_sweep)

    synth = sub.add_parser("synth", help="Write a synthetic dataset.")
    synth.add_argument("--spec", help="JSON synthetic-system description.")
    synth.add_argument("--kind", default="demo", choices=KINDS + ("demo",), help="System kind.")
    synth.add_argument("--dimension", type=int, default=1, help="Number of channels.")
    synth.add_argument("--frequencies", default="0.1367", help="Comma-separated frequencies in Hz.")
    synth.add_argument("--noise", type=float, default=0.0, help="White-noise std.")
    synth.add_argument("--duration", type=float, default=3600.0, help="Duration in seconds.")
    synth.add_argument("--dt", type=float, default=config.DEFAULT_DT, help="Sampling step in seconds.")
    synth.add_argument("--seed", type=int, default=0, help="Random seed.")
    synth.add_argument("--name", default="dataset.csv", help="Output file name.")
    synth.add_argument("--out", default=config.OUTPUT_DIR, help="Output directory.")
    synth.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    args.argv = argv

    # Set up logging
    logging.basicConfig(
        filename=args.log_file,
        level=logging.INFO,
        format='%(asctime)s - %(levelname)s - %(message)s'
    )
    try:
        logging.info(f"Running {args.command} with arguments {argv}")
        code = args.func(args)
        logging.info(f"Successfully ran {args.command}")
        return code
    except HdmdError as e:
        logging.error(f"Error running {args.command}: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
