import numpy as np
import pytest

from dmd_forecasting.series import MultivariateSeries


@pytest.fixture
def two_tone():
    """One channel observing two oscillators (0.10 Hz and 0.23 Hz), 300 s at dt = 0.1 s."""
    dt = 0.1
    t = np.arange(3001) * dt
    x = np.sin(2 * np.pi * 0.10 * t) + 0.5 * np.sin(2 * np.pi * 0.23 * t + 0.3)
    return MultivariateSeries(("x",), dt, x[None, :])


@pytest.fixture
def sine_pairs():
    """Four channels: a cos/sin pair at 0.10 Hz with amplitude 2 and one at 0.23 Hz with amplitude 1."""
    dt = 0.1
    t = np.arange(2000) * dt
    values = np.vstack([
        2 * np.cos(2 * np.pi * 0.10 * t),
        2 * np.sin(2 * np.pi * 0.10 * t),
        np.cos(2 * np.pi * 0.23 * t),
        np.sin(2 * np.pi * 0.23 * t),
    ])
    return MultivariateSeries(("a", "b", "c", "d"), dt, values)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
