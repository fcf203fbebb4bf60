"""Exact dynamic mode decomposition.

The surrogate A with X' ~ A X is never formed. X is reduced with a truncated
SVD, A is projected onto the leading left singular vectors, and the exact
modes are rebuilt from X' and the eigenvectors of the projected operator.
Forecasts use discrete powers of the eigenvalues.
"""
import json
import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from dmd_forecasting import config
from dmd_forecasting.errors import DegenerateDataError, NumericError, ShapeError, ValidationError

logger = logging.getLogger(__name__)

# Singular values at or below this are treated as exact zeros.
SINGULAR_FLOOR = 1e-12
# Eigenvalues with a smaller modulus are considered zero.
ZERO_EIGENVALUE = 1e-12


class UnstableModeWarning(UserWarning):
    pass


class ZeroEigenvalueWarning(UserWarning):
    pass


@dataclass(frozen=True)
class RankPolicy:
    """How many singular values of X are kept: all, above tau*sigma_max, or a fixed number."""

    kind: str = "tolerance"
    value: float = config.RANK_TOLERANCE

    def __post_init__(self):
        if self.kind == "tolerance" and not 0 < self.value < 1:
            raise ValidationError(f"rank tolerance must lie in (0, 1), got {self.value}")
        if self.kind == "fixed" and (int(self.value) != self.value or self.value < 1):
            raise ValidationError(f"fixed rank must be a positive integer, got {self.value}")
        if self.kind not in ("full", "tolerance", "fixed"):
            raise ValidationError(f"unknown rank policy '{self.kind}'")

    @classmethod
    def full(cls):
        return cls("full", 0.0)

    @classmethod
    def tolerance(cls, tau=config.RANK_TOLERANCE):
        return cls("tolerance", float(tau))

    @classmethod
    def fixed(cls, r):
        return cls("fixed", int(r))

    @classmethod
    def parse(cls, text):
        """'full', 'tol:1e-10' or 'fixed:6'."""
        kind, _, value = text.partition(":")
        if kind == "full":
            return cls.full()
        if kind in ("tol", "tolerance"):
            return cls.tolerance(float(value) if value else config.RANK_TOLERANCE)
        if kind == "fixed" and value:
            return cls.fixed(int(value))
        raise ValidationError(f"cannot parse rank policy '{text}'")

    def __str__(self):
        if self.kind == "full":
            return "full"
        if self.kind == "fixed":
            return f"fixed:{int(self.value)}"
        return f"tol:{float(self.value)!r}"

    def select(self, singular_values):
        positive = int(np.count_nonzero(singular_values > 0))
        if self.kind == "full":
            return positive
        if self.kind == "fixed":
            return min(int(self.value), positive)
        return int(np.count_nonzero(singular_values > self.value * singular_values[0]))


@dataclass(frozen=True)
class SnapshotPair:
    X: np.ndarray
    Xp: np.ndarray
    dt: float

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Xp = np.asarray(self.Xp, dtype=float)
        if X.ndim == 1:
            X, Xp = X[None, :], Xp[None, :]
        if X.shape != Xp.shape:
            raise ShapeError(f"X is {X.shape} but X' is {Xp.shape}")
        # one column is the smallest Hankel pair a valid delay configuration yields
        if X.shape[1] < 1:
            raise ShapeError("snapshot matrices need at least one column")
        if not self.dt > 0:
            raise ValidationError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Xp", Xp)

    @classmethod
    def from_sequence(cls, data, dt):
        """Plain (undelayed) pair from a (state, time) matrix."""
        data = np.atleast_2d(np.asarray(data, dtype=float))
        return cls(data[:, :-1], data[:, 1:], dt)

    @property
    def state_dim(self):
        return self.X.shape[0]

    @property
    def n_cols(self):
        return self.X.shape[1]


@dataclass(frozen=True)
class DmdModel:
    eigenvalues: np.ndarray  # discrete-time
    modes: np.ndarray  # (state_dim, rank), unit-norm columns
    amplitudes: np.ndarray
    dt: float
    recon_error: float = float("nan")
    singular_values: np.ndarray = field(default_factory=lambda: np.empty(0))
    flags: tuple = ()

    @property
    def rank(self):
        return self.eigenvalues.size

    @property
    def state_dim(self):
        return self.modes.shape[0]

    def to_dict(self):
        return {
            "dt": self.dt,
            "rank": self.rank,
            "eigenvalues": _complex_list(self.eigenvalues),
            "modes": [_complex_list(row) for row in self.modes],
            "amplitudes": _complex_list(self.amplitudes),
            "recon_error": self.recon_error,
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, data):
        modes = np.array([[complex(re, im) for re, im in row] for row in data["modes"]],
                         dtype=complex).reshape(-1, data["rank"])
        return cls(
            eigenvalues=np.array([complex(re, im) for re, im in data["eigenvalues"]], dtype=complex),
            modes=modes,
            amplitudes=np.array([complex(re, im) for re, im in data["amplitudes"]], dtype=complex),
            dt=data["dt"],
            recon_error=data.get("recon_error", float("nan")),
            flags=tuple(data.get("flags", ())),
        )


def _complex_list(values):
    return [[float(z.real), float(z.imag)] for z in np.asarray(values, dtype=complex)]


def save_model(model, path, **extra):
    doc = model.to_dict()
    doc.update(extra)
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)


def load_model(path):
    with open(path) as f:
        return DmdModel.from_dict(json.load(f))


def _solve(modes, data):
    """Least-squares (minimum-norm) coordinates of `data` in the mode basis."""
    try:
        coeffs, _, rank, _ = scipy.linalg.lstsq(modes, data.astype(complex))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericError(f"least-squares solve failed: {exc}") from exc
    return coeffs, int(rank)


def _order(eigenvalues, coords, dt):
    """Descending modal energy, ties broken by ascending |Im omega|."""
    energy = np.mean(np.abs(coords) ** 2, axis=1)
    total = energy.sum()
    if total > 0:
        energy = energy / total
    # rounding lets conjugate partners tie so the pair stays adjacent
    rounded = np.round(energy, 10)
    freq = np.abs(np.angle(eigenvalues)) / dt
    return np.lexsort((-eigenvalues.imag, freq, -rounded))


def fit_exact_dmd(pair, rank_policy=None):
    """Fit an exact-DMD model to a snapshot pair.

    Amplitudes are initialised with the last column of X', the final measured
    snapshot, so `forecast` continues from the end of the data.
    """
    rank_policy = rank_policy or RankPolicy.tolerance()
    try:
        U, s, Vh = scipy.linalg.svd(pair.X, full_matrices=False, lapack_driver="gesvd")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericError(f"SVD did not converge: {exc}") from exc

    if s.size == 0 or s[0] <= SINGULAR_FLOOR:
        raise DegenerateDataError(
            f"all singular values of the {pair.X.shape} snapshot matrix are below {SINGULAR_FLOOR}"
        )
    s[s <= SINGULAR_FLOOR] = 0.0
    r = rank_policy.select(s)
    U_r, s_r, V_r = U[:, :r], s[:r], Vh[:r].conj().T

    # X' V Sigma^-1 is shared by the projected operator and the exact modes
    XpVS = pair.Xp @ V_r / s_r
    A_tilde = U_r.conj().T @ XpVS
    try:
        eigenvalues, W = scipy.linalg.eig(A_tilde)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericError(f"eigendecomposition did not converge: {exc}") from exc

    modes = XpVS @ W
    # exact modes vanish for zero eigenvalues; fall back to the projected ones
    zero = np.abs(eigenvalues) < ZERO_EIGENVALUE
    if np.any(zero):
        modes[:, zero] = U_r @ W[:, zero]
    norms = np.linalg.norm(modes, axis=0)
    norms[norms == 0] = 1.0
    modes = modes / norms

    flags = []
    coords, basis_rank = _solve(modes, pair.X)
    if basis_rank < r:
        flags.append(f"rank-deficient mode basis ({basis_rank} < {r})")

    order = _order(eigenvalues, coords, pair.dt)
    eigenvalues, coords = eigenvalues[order], coords[order]
    # C order matches a model rebuilt from JSON, so reloaded forecasts are bitwise equal
    modes = np.ascontiguousarray(modes[:, order])

    one_step = modes @ (eigenvalues[:, None] * coords)
    norm = np.linalg.norm(pair.Xp)
    recon_error = float(np.linalg.norm(pair.Xp - one_step) / norm) if norm > 0 else 0.0

    model = DmdModel(
        eigenvalues=eigenvalues,
        modes=modes,
        amplitudes=np.zeros(r, dtype=complex),
        dt=pair.dt,
        recon_error=recon_error,
        singular_values=s,
        flags=tuple(flags),
    )
    logger.debug("Exact DMD: rank %d of %d, reconstruction error %.3e", r, s.size, recon_error)
    return initialize(model, pair.Xp[:, -1])


def amplitudes(model, x_init):
    """Least-squares solution of modes @ b = x_init."""
    x_init = np.asarray(x_init, dtype=float).ravel()
    if x_init.size != model.state_dim:
        raise ShapeError(f"initial state has {x_init.size} entries, model state has {model.state_dim}")
    b, _ = _solve(model.modes, x_init)
    return b


def initialize(model, x_init):
    """Copy of `model` whose amplitudes start the forecast from `x_init`."""
    x_init = np.asarray(x_init, dtype=float).ravel()
    if x_init.size != model.state_dim:
        raise ShapeError(f"initial state has {x_init.size} entries, model state has {model.state_dim}")
    b, basis_rank = _solve(model.modes, x_init)
    flags = tuple(f for f in model.flags if not f.startswith("minimum-norm amplitudes"))
    if basis_rank < model.rank:
        flags += (f"minimum-norm amplitudes (mode basis rank {basis_rank} < {model.rank})",)
    return replace(model, amplitudes=b, flags=flags)


def continuous_eigenvalues(model):
    """omega_k = ln(lambda_k) / dt on the principal branch; zero eigenvalues are dropped."""
    lam = np.asarray(model.eigenvalues, dtype=complex)
    zero = np.abs(lam) < ZERO_EIGENVALUE
    if np.any(zero):
        message = f"{int(zero.sum())} zero eigenvalue(s) excluded from continuous spectrum"
        logger.warning(message)
        warnings.warn(message, ZeroEigenvalueWarning, stacklevel=2)
    return np.log(lam[~zero]) / model.dt


def unstable_modes(model, growth_guard=config.GROWTH_GUARD):
    """Indices of eigenvalues whose modulus exceeds the growth guard."""
    return np.flatnonzero(np.abs(model.eigenvalues) > growth_guard)


def forecast(model, n_steps, growth_guard=config.GROWTH_GUARD):
    """Real part of modes @ diag(lambda^s) @ b for s = 1..n_steps."""
    if n_steps < 1:
        raise ValidationError(f"n_steps must be >= 1, got {n_steps}")
    unstable = unstable_modes(model, growth_guard)
    if unstable.size:
        message = (f"{unstable.size} mode(s) with |lambda| > {growth_guard}; "
                   f"largest {np.abs(model.eigenvalues).max():.4f}")
        logger.warning(message)
        warnings.warn(message, UnstableModeWarning, stacklevel=2)

    steps = np.arange(1, n_steps + 1)
    powers = model.eigenvalues[:, None] ** steps[None, :]
    states = model.modes @ (model.amplitudes[:, None] * powers)
    scale = max(np.abs(states.real).max(), np.finfo(float).tiny)
    if np.abs(states.imag).max() > 1e-8 * scale:
        logger.debug("Forecast carries an imaginary residue of %.2e", np.abs(states.imag).max())
    return states.real
