"""Modal analysis of a fitted DMD model: energy ranking, conjugate pairing,
per-channel participation and the reference period from a spectral peak."""
import json
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.signal import welch

from dmd_forecasting.errors import DegenerateDataError, ValidationError

logger = logging.getLogger(__name__)

PAIR_IMAG_TOL = 1e-9


@dataclass(frozen=True)
class ModalEntry:
    index: int  # position in the model's eigenvalue array
    eigenvalue: complex
    frequency_hz: float
    period_s: float
    energy: float
    participation: np.ndarray
    pair_id: int


@dataclass(frozen=True)
class ModalReport:
    entries: tuple
    channels: tuple
    cumulative_energy: np.ndarray
    flags: tuple = ()

    def to_dict(self):
        return {
            "channels": list(self.channels),
            "modes": [{
                "index": e.index,
                "eigenvalue": [e.eigenvalue.real, e.eigenvalue.imag],
                "frequency_hz": e.frequency_hz,
                "period_s": e.period_s,
                "energy": e.energy,
                "participation": e.participation.tolist(),
                "pair_id": e.pair_id,
            } for e in self.entries],
            "cumulative_energy": self.cumulative_energy.tolist(),
            "flags": list(self.flags),
        }

    def save_json(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)

    def to_table(self, top_channels=3):
        """Plain-text table: rank, pair, frequency, period, energy, dominant channels."""
        lines = [f"{'rank':>4} {'pair':>4} {'freq [Hz]':>10} {'period [s]':>11} "
                 f"{'energy':>8} {'cum.':>6}  top channels"]
        for rank, (entry, cum) in enumerate(zip(self.entries, self.cumulative_energy), start=1):
            top = np.argsort(-entry.participation, kind="stable")[:top_channels]
            names = ", ".join(f"{self.channels[i]} ({entry.participation[i]:.2f})" for i in top)
            period = f"{entry.period_s:11.3f}" if np.isfinite(entry.period_s) else f"{'inf':>11}"
            lines.append(f"{rank:>4} {entry.pair_id:>4} {entry.frequency_hz:10.4f} {period} "
                         f"{entry.energy:8.4f} {cum:6.3f}  {names}")
        return "\n".join(lines) + "\n"

    def save_table(self, path, top_channels=3):
        with open(path, "w") as f:
            f.write(self.to_table(top_channels))


@dataclass(frozen=True)
class ConjugateGrouping:
    groups: tuple  # tuples of eigenvalue indices, pairs or singletons
    unmatched: tuple = ()

    def pair_ids(self, n):
        ids = np.empty(n, dtype=int)
        for gid, group in enumerate(self.groups):
            ids[list(group)] = gid
        return ids


@dataclass(frozen=True)
class SpectralSpec:
    segment_fraction: float = 1 / 8
    overlap: float = 0.5
    window: str = "hann"

    def __post_init__(self):
        if not 0 < self.segment_fraction <= 1:
            raise ValidationError(f"segment fraction must lie in (0, 1], got {self.segment_fraction}")
        if not 0 <= self.overlap < 1:
            raise ValidationError(f"overlap must lie in [0, 1), got {self.overlap}")


@dataclass(frozen=True)
class SpectrumPeak:
    frequency_hz: float
    period_s: float
    frequencies: np.ndarray = field(repr=False)
    power: np.ndarray = field(repr=False)

    @property
    def resolution(self):
        return self.frequencies[1] - self.frequencies[0]


def group_conjugate_pairs(eigenvalues, tol=PAIR_IMAG_TOL, match_tol=1e-6):
    """Pair each complex eigenvalue with its nearest unused conjugate."""
    lam = np.asarray(eigenvalues, dtype=complex)
    used = np.zeros(lam.size, dtype=bool)
    groups, unmatched = [], []
    for i in range(lam.size):
        if used[i]:
            continue
        used[i] = True
        if abs(lam[i].imag) <= tol:
            groups.append((i,))
            continue
        candidates = np.flatnonzero(~used)
        if candidates.size:
            distance = np.abs(lam[candidates] - np.conj(lam[i]))
            j = candidates[np.argmin(distance)]
            if distance.min() <= match_tol * max(1.0, abs(lam[i])):
                used[j] = True
                groups.append((i, int(j)))
                continue
        logger.warning("Eigenvalue %s has no conjugate partner", lam[i])
        unmatched.append(i)
        groups.append((i,))
    return ConjugateGrouping(tuple(groups), tuple(unmatched))


def modal_energy_ranking(model, training, channels=None):
    """Rank modes by the mean squared modulus of their modal coordinates.

    Coordinates come from a least-squares projection of every training
    snapshot onto the modes. Participation is reported for the first
    len(channels) rows of each mode (the undelayed block of a Hankel model).
    """
    coords, _, rank, _ = scipy.linalg.lstsq(model.modes, training.X.astype(complex))
    flags = []
    if rank < model.rank:
        flags.append(f"rank-deficient mode basis ({rank} < {model.rank}); minimum-norm projection")

    energy = np.mean(np.abs(coords) ** 2, axis=1)
    total = energy.sum()
    if not total > 0:
        raise DegenerateDataError("training snapshots have no energy in the mode basis")
    energy = energy / total

    freq = np.abs(np.angle(model.eigenvalues)) / (2 * np.pi * model.dt)
    order = np.lexsort((-model.eigenvalues.imag, freq, -np.round(energy, 10)))
    grouping = group_conjugate_pairs(model.eigenvalues)
    pair_ids = grouping.pair_ids(model.rank)
    if grouping.unmatched:
        flags.append(f"{len(grouping.unmatched)} complex eigenvalue(s) without a conjugate partner")

    channels = tuple(channels) if channels is not None else tuple(
        f"x{i}" for i in range(model.state_dim))
    participation = np.abs(model.modes[: len(channels)])

    entries = []
    for k in order:
        f = float(freq[k])
        entries.append(ModalEntry(
            index=int(k),
            eigenvalue=complex(model.eigenvalues[k]),
            frequency_hz=f,
            period_s=1.0 / f if f > 0 else float("inf"),
            energy=float(energy[k]),
            participation=participation[:, k],
            pair_id=int(pair_ids[k]),
        ))
    return ModalReport(tuple(entries), channels, np.cumsum(energy[order]), tuple(flags))


def reference_period(values, dt, spec=None):
    """Dominant period of a single channel from the peak of a Welch periodogram."""
    spec = spec or SpectralSpec()
    x = np.asarray(values, dtype=float).ravel()
    if x.size < 16:
        raise ValidationError(f"spectral estimation needs at least 16 samples, got {x.size}")
    nperseg = max(8, int(x.size * spec.segment_fraction))
    freqs, power = welch(x, fs=1.0 / dt, window=spec.window, nperseg=nperseg,
                         noverlap=int(nperseg * spec.overlap), detrend="constant")
    positive = power[1:]
    if positive.size == 0 or not positive.max() > 1e-20 * max(np.abs(x).max() ** 2, 1e-300):
        raise DegenerateDataError("flat spectrum: no peak above zero frequency")
    peak = int(np.argmax(positive)) + 1
    f_hat = float(freqs[peak])
    return SpectrumPeak(f_hat, 1.0 / f_hat, freqs, power)
