import argparse
import json
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.special import rel_entr

from dmd_forecasting import config
from dmd_forecasting.errors import ShapeError, ValidationError, ZeroVarianceError
from dmd_forecasting.series import MultivariateSeries

logger = logging.getLogger(__name__)

LN2 = float(np.log(2.0))

# This module scores a forecast against the measured signal over the same window.
# NRMSE and NAMMAE are normalised per channel by the population std of the truth window;
# JSD compares the value distributions of the two signals on shared histogram bins.
# Every metric is returned per channel together with its average over channels.


@dataclass(frozen=True)
class MetricsReport:
    channels: tuple
    nrmse: np.ndarray
    nammae: np.ndarray
    jsd: np.ndarray
    window_samples: int
    bins: int

    @property
    def n_channels(self):
        return len(self.channels)

    @property
    def averaged(self):
        return {
            "nrmse": float(np.mean(self.nrmse)),
            "nammae": float(np.mean(self.nammae)),
            "jsd": float(np.mean(self.jsd)),
        }

    def to_dict(self):
        return {
            "channels": list(self.channels),
            "per_channel": {
                "nrmse": self.nrmse.tolist(),
                "nammae": self.nammae.tolist(),
                "jsd": self.jsd.tolist(),
            },
            "averaged": self.averaged,
            "window_samples": self.window_samples,
            "bins": self.bins,
        }

    def to_frame(self):
        return pd.DataFrame({
            "channel": list(self.channels),
            "nrmse": self.nrmse,
            "nammae": self.nammae,
            "jsd": self.jsd,
        })


def _as_arrays(pred, truth, channels=None):
    """(pred values, truth values, channel names) as (channels, samples) float matrices."""
    if channels is not None:
        channels = tuple(channels)
    elif isinstance(truth, MultivariateSeries):
        channels = truth.channels
    elif isinstance(pred, MultivariateSeries):
        channels = pred.channels
    else:
        channels = None
    if isinstance(pred, MultivariateSeries) and isinstance(truth, MultivariateSeries):
        if pred.channels != truth.channels:
            raise ValidationError(f"prediction channels {pred.channels} differ from truth {truth.channels}")
    p = np.atleast_2d(np.asarray(getattr(pred, "values", pred), dtype=float))
    t = np.atleast_2d(np.asarray(getattr(truth, "values", truth), dtype=float))
    if p.shape != t.shape:
        raise ShapeError(f"prediction {p.shape} and truth {t.shape} differ in shape")
    if channels is None:
        channels = tuple(f"x{i + 1}" for i in range(t.shape[0]))
    elif len(channels) != t.shape[0]:
        raise ShapeError(f"{len(channels)} channel names for {t.shape[0]} channels")
    return p, t, tuple(channels)


def _truth_std(truth, channels):
    if truth.shape[1] < 2:
        raise ValidationError(f"metrics need a window of at least 2 samples, got {truth.shape[1]}")
    sigma = truth.std(axis=1)
    scale = np.maximum(np.abs(truth.mean(axis=1)), 1.0)
    for i in np.flatnonzero(sigma <= 1e-12 * scale):
        raise ZeroVarianceError(channels[i], context="truth channel")
    return sigma


def nrmse(pred, truth, channels=None):
    """Per-channel RMSE over the truth window's std, and its channel average."""
    p, t, channels = _as_arrays(pred, truth, channels)
    sigma = _truth_std(t, channels)
    per_channel = np.sqrt(np.mean((p - t) ** 2, axis=1)) / sigma
    return per_channel, float(per_channel.mean())


def nammae(pred, truth, channels=None):
    """Mean of the absolute min and max mismatches, over the truth window's std."""
    p, t, channels = _as_arrays(pred, truth, channels)
    sigma = _truth_std(t, channels)
    per_channel = (np.abs(p.min(axis=1) - t.min(axis=1))
                   + np.abs(p.max(axis=1) - t.max(axis=1))) / (2.0 * sigma)
    return per_channel, float(per_channel.mean())


def _jsd_channel(p, t, bins):
    lo = min(p.min(), t.min())
    hi = max(p.max(), t.max())
    if hi <= lo:
        # both signals sit in one point
        return 0.0
    edges = np.linspace(lo, hi, bins + 1)
    q, _ = np.histogram(p, bins=edges)
    r, _ = np.histogram(t, bins=edges)
    q = q / q.sum()
    r = r / r.sum()
    m = 0.5 * (q + r)
    value = 0.5 * rel_entr(q, m).sum() + 0.5 * rel_entr(r, m).sum()
    return float(np.clip(value, 0.0, LN2))


def jsd(pred, truth, bins=config.JSD_BINS):
    """Jensen-Shannon divergence between the value histograms of prediction and truth."""
    if bins < 2:
        raise ValidationError(f"JSD needs at least 2 bins, got {bins}")
    p, t, _ = _as_arrays(pred, truth)
    per_channel = np.array([_jsd_channel(p[i], t[i], bins) for i in range(t.shape[0])])
    return per_channel, float(per_channel.mean())


def evaluate_all(pred, truth, bins=config.JSD_BINS, channels=None):
    p, t, channels = _as_arrays(pred, truth, channels)
    return MetricsReport(
        channels=channels,
        nrmse=nrmse(p, t, channels)[0],
        nammae=nammae(p, t, channels)[0],
        jsd=jsd(p, t, bins)[0],
        window_samples=t.shape[1],
        bins=bins,
    )


def null_prediction(truth, mean=None):
    """Constant prediction at `mean` (default: the truth window mean).

    A constant prediction at the training mean is zero in normalised space;
    its NRMSE sits near 1 while NAMMAE and JSD expose it as uninformative.
    """
    t = np.atleast_2d(np.asarray(getattr(truth, "values", truth), dtype=float))
    level = t.mean(axis=1) if mean is None else np.asarray(mean, dtype=float)
    values = np.repeat(level[:, None], t.shape[1], axis=1)
    if isinstance(truth, MultivariateSeries):
        return truth.with_values(values)
    return values


def null_baseline(truth, mean=None, bins=config.JSD_BINS):
    return evaluate_all(null_prediction(truth, mean), truth, bins)


def _read_frame(path):
    df = pd.read_csv(path)
    return df.drop(columns=[c for c in df.columns if c.lower() == "time"])


def main():
    parser = argparse.ArgumentParser(description="Compute NRMSE, NAMMAE and JSD between a prediction and the measured signal.")

    # Input and output paths
    parser.add_argument("--pred_path", required=True, help="CSV file with the predicted time histories (time column optional).")
    parser.add_argument("--truth_path", required=True, help="CSV file with the measured time histories over the same window.")
    parser.add_argument("--bins", type=int, default=config.JSD_BINS, help=f"Histogram bins for the JSD (default: {config.JSD_BINS}).")
    parser.add_argument("--output_path", required=False, help="Optional JSON file for the metrics report.")
    parser.add_argument("--baseline", action="store_true", help="Also score the constant-mean baseline prediction.")

    args = parser.parse_args()

    # Align the prediction columns on the truth columns
    truth = _read_frame(args.truth_path)
    pred = _read_frame(args.pred_path)
    missing = [c for c in truth.columns if c not in pred.columns]
    if missing:
        raise ValidationError(f"prediction file lacks channels {missing}")
    n = min(len(truth), len(pred))
    channels = tuple(truth.columns)
    truth_values = truth.to_numpy(dtype=float)[:n].T
    pred_values = pred[list(channels)].to_numpy(dtype=float)[:n].T

    report = evaluate_all(MultivariateSeries(channels, 1.0, pred_values),
                          MultivariateSeries(channels, 1.0, truth_values), args.bins)
    print(report.to_frame().to_string(index=False))
    print(f"Averaged over {report.n_channels} channels and {report.window_samples} samples: "
          + ", ".join(f"{k.upper()} = {v:.4f}" for k, v in report.averaged.items()))

    doc = {"prediction": report.to_dict()}
    if args.baseline:
        baseline = null_baseline(truth_values, bins=args.bins)
        doc["baseline"] = baseline.to_dict()
        print("Constant-mean baseline: "
              + ", ".join(f"{k.upper()} = {v:.4f}" for k, v in baseline.averaged.items()))

    if args.output_path:
        with open(args.output_path, "w") as f:
            json.dump(doc, f, indent=2)
        print(f"Metrics saved to {args.output_path}")


if __name__ == "__main__":
    main()
