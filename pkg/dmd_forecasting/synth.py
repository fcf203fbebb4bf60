"""Synthetic systems with known modal content, used as oracles in place of
measured floating-turbine records."""
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from dmd_forecasting import config
from dmd_forecasting.errors import ValidationError
from dmd_forecasting.series import MultivariateSeries

logger = logging.getLogger(__name__)

KINDS = ("linear_lti", "multi_sine", "latent_scalar", "saturating")

# Latent oscillators of the demo record: slow drift, mooring, turbine,
# incoming wave and tendon responses.
DEMO_FREQUENCIES = (0.0053, 0.0217, 0.0394, 0.1367, 0.1818)
DEMO_CHANNELS = (
    "T1", "T5", "T6", "M3",
    "surge", "sway", "heave", "roll", "pitch", "yaw", "acc_z",
    "power", "rpm", "wind",
    "wave",
)


@dataclass(frozen=True)
class SynthSpec:
    kind: str = "multi_sine"
    dimension: int = 1
    frequencies: tuple = (0.1367,)
    damping: tuple = ()  # 1/s per frequency, empty = undamped
    amplitudes: tuple = ()  # per frequency, empty = all ones
    noise_std: float = 0.0
    duration: float = 600.0
    dt: float = config.DEFAULT_DT
    seed: int = 0
    # discrete-time eigenvalues for linear_lti; complex ones bring their conjugate
    eigenvalues: tuple = ()
    clip_fraction: float = 0.6  # saturating: clip at this fraction of the peak

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown system kind '{self.kind}', expected one of {KINDS}")
        if not self.dt > 0:
            raise ValidationError(f"dt must be positive, got {self.dt}")
        if self.duration / self.dt < 16:
            raise ValidationError("duration must cover at least 16 samples")
        if self.noise_std < 0:
            raise ValidationError(f"noise std must be >= 0, got {self.noise_std}")
        nyquist = 0.5 / self.dt
        for f in self.frequencies:
            if not 0 <= f < nyquist:
                raise ValidationError(f"frequency {f} Hz is not below the Nyquist frequency {nyquist} Hz")
        for name in ("damping", "amplitudes"):
            values = getattr(self, name)
            if values and len(values) != len(self.frequencies):
                raise ValidationError(f"{name} needs one entry per frequency")
        if self.dimension < 1:
            raise ValidationError(f"dimension must be >= 1, got {self.dimension}")
        if not 0 < self.clip_fraction <= 1:
            raise ValidationError(f"clip fraction must lie in (0, 1], got {self.clip_fraction}")
        if self.kind == "linear_lti" and not (self.eigenvalues or self.frequencies):
            raise ValidationError("linear_lti needs eigenvalues or frequencies")

    @property
    def n_samples(self):
        return int(np.floor(self.duration / self.dt + 1e-9)) + 1

    def to_dict(self):
        doc = asdict(self)
        doc["eigenvalues"] = [[complex(z).real, complex(z).imag] for z in self.eigenvalues]
        return doc

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        eig = data.pop("eigenvalues", ())
        data["eigenvalues"] = tuple(complex(*z) if isinstance(z, (list, tuple)) else complex(z)
                                    for z in eig)
        for key in ("frequencies", "damping", "amplitudes"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)

    @classmethod
    def from_json(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


@dataclass(frozen=True)
class GroundTruth:
    clean: np.ndarray  # noise-free signal, same shape as the series values
    eigenvalues: np.ndarray  # discrete-time, at the generated dt
    frequencies_hz: np.ndarray
    nonlinear: bool = False
    notes: tuple = field(default=())

    def to_dict(self):
        return {
            "eigenvalues": [[z.real, z.imag] for z in self.eigenvalues],
            "frequencies_hz": self.frequencies_hz.tolist(),
            "nonlinear": self.nonlinear,
            "notes": list(self.notes),
        }


def _amplitudes(spec):
    return np.array(spec.amplitudes or (1.0,) * len(spec.frequencies), dtype=float)


def _damping(spec):
    return np.array(spec.damping or (0.0,) * len(spec.frequencies), dtype=float)


def _oscillator_eigenvalues(spec):
    """Discrete eigenvalue pairs exp((-damping +/- 2 pi i f) dt) of the sinusoid terms."""
    lam = []
    for f, d in zip(spec.frequencies, _damping(spec)):
        z = np.exp((-d + 2j * np.pi * f) * spec.dt)
        lam.extend([z, np.conj(z)] if f > 0 else [z.real])
    return np.array(lam, dtype=complex)


def _sines(spec, t, rng, n_out):
    """Random-phase, random-mix sums of the configured damped sinusoids, one row per output."""
    amps, damp = _amplitudes(spec), _damping(spec)
    out = np.zeros((n_out, t.size))
    for row in range(n_out):
        phases = rng.uniform(0, 2 * np.pi, len(spec.frequencies))
        weights = np.ones(len(spec.frequencies)) if n_out == 1 else rng.uniform(0.5, 1.5, len(spec.frequencies))
        for f, a, d, ph, w in zip(spec.frequencies, amps, damp, phases, weights):
            out[row] += w * a * np.exp(-d * t) * np.sin(2 * np.pi * f * t + ph)
    return out


def _linear_lti(spec, rng):
    lam = np.array(spec.eigenvalues, dtype=complex) if spec.eigenvalues else _oscillator_eigenvalues(spec)
    blocks, spectrum = [], []
    for z in lam:
        if abs(z.imag) > 0:
            if any(np.isclose(z, np.conj(s)) for s in spectrum):
                continue
            r, th = abs(z), np.angle(z)
            blocks.append(r * np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]]))
            spectrum.extend([z, np.conj(z)])
        else:
            blocks.append(np.array([[z.real]]))
            spectrum.append(complex(z.real))
    n = sum(b.shape[0] for b in blocks)
    B = np.zeros((n, n))
    i = 0
    for b in blocks:
        k = b.shape[0]
        B[i:i + k, i:i + k] = b
        i += k
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    A = Q @ B @ Q.T
    x = np.empty((n, spec.n_samples))
    x[:, 0] = rng.standard_normal(n)
    for j in range(1, spec.n_samples):
        x[:, j] = A @ x[:, j - 1]
    return x, np.array(spectrum, dtype=complex)


def generate(spec):
    """Series plus ground truth for a synthetic system; noise is seeded."""
    rng = np.random.default_rng(spec.seed)
    t = np.arange(spec.n_samples) * spec.dt
    nonlinear = False
    notes = []

    if spec.kind == "linear_lti":
        clean, eigenvalues = _linear_lti(spec, rng)
    elif spec.kind == "latent_scalar":
        clean = _sines(spec, t, rng, 1)
        eigenvalues = _oscillator_eigenvalues(spec)
        notes.append(f"{len(spec.frequencies)} oscillators observed through one channel")
    else:
        clean = _sines(spec, t, rng, spec.dimension)
        eigenvalues = _oscillator_eigenvalues(spec)
        if spec.kind == "saturating":
            level = spec.clip_fraction * np.abs(clean).max(axis=1, keepdims=True)
            clean = np.clip(clean, -level, level)
            nonlinear = True
            notes.append("nonlinear - reduced predictability expected")

    values = clean
    if spec.noise_std > 0:
        values = clean + rng.normal(0.0, spec.noise_std, clean.shape)
    channels = [f"x{i + 1}" for i in range(values.shape[0])]
    truth = GroundTruth(clean, eigenvalues, np.array(spec.frequencies, dtype=float),
                        nonlinear, tuple(notes))
    logger.info("Generated %s system: %d channels x %d samples", spec.kind, *values.shape)
    return MultivariateSeries(channels, spec.dt, values), truth


def demo_dataset(duration=3600.0, dt=config.DEFAULT_DT, noise_std=0.0, seed=0):
    """15-channel quasi-periodic record shaped like a floating-turbine state.

    Force-like, motion-like and wave channels are random mixtures of the
    latent oscillators; the three turbine-like channels saturate.
    """
    base = SynthSpec(kind="multi_sine", dimension=1, frequencies=DEMO_FREQUENCIES,
                     amplitudes=(0.8, 0.5, 0.4, 1.0, 0.6), duration=duration, dt=dt, seed=seed)
    rng = np.random.default_rng(seed)
    t = np.arange(base.n_samples) * dt
    clean = _sines(base, t, rng, len(DEMO_CHANNELS))

    # the wave channel is dominated by the incoming-wave oscillator
    wave = DEMO_CHANNELS.index("wave")
    clean[wave] = 1.5 * np.sin(2 * np.pi * DEMO_FREQUENCIES[3] * t + rng.uniform(0, 2 * np.pi)) \
        + 0.2 * clean[wave]
    for name in ("power", "rpm", "wind"):
        i = DEMO_CHANNELS.index(name)
        level = 0.6 * np.abs(clean[i]).max()
        clean[i] = np.clip(clean[i], -level, level)

    values = clean + rng.normal(0.0, noise_std, clean.shape) if noise_std > 0 else clean
    lam = _oscillator_eigenvalues(base)
    truth = GroundTruth(clean, lam, np.array(DEMO_FREQUENCIES), nonlinear=True,
                        notes=("power, rpm, wind saturate - reduced predictability expected",))
    return MultivariateSeries(DEMO_CHANNELS, dt, values), truth
