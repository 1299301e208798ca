"""Bundled and synthetic datasets for the experiment harness."""

from __future__ import annotations

from importlib import resources

import numpy as np

from .gp import TimeSeries
from .kernels import NoiseModel, SMComponent, SMKernel
from. import gp as _gp


def load_sunspots() -> TimeSeries:
    """Yearly mean sunspot numbers, 1700-2008; time unit is years."""
    with resources.files(__package__).joinpath("data/sunspots.csv").open("rb") as fh:
        raw = np.genfromtxt(fh, delimiter=",", skip_header=1)
    return TimeSeries(raw[:, 0], raw[:, 1])


def two_tone_series(n: int = 240, t_min: float = -10.0, t_max: float = 10.0,
                    noise_std: float = 1.0, seed=0) -> TimeSeries:
    """Evenly sampled 10 cos(2 pi 0.5 t) - 5 sin(2 pi 1.0 t) plus Gaussian noise."""
    rng = np.random.default_rng(seed)
    t = np.linspace(t_min, t_max, n)
    y = 10.0 * np.cos(2.0 * np.pi * 0.5 * t) - 5.0 * np.sin(2.0 * np.pi * 1.0 * t)
    if noise_std > 0.0:
        y = y + rng.normal(0.0, noise_std, size=n)
    return TimeSeries(t, y)


def surrogate_pair(seed=0, n: int = 400, span: float = 40.0, noise_std: float = 0.3):
    """Two GP draws with distinct spectral-mixture spectra.

    Returns ``(train_series, test_series)``: the first carries energy at one
    frequency band, the second at another, so a model trained on the first
    must not simply replay its own spectrum on the second.
    """
    t = np.linspace(-span / 2.0, span / 2.0, n)
    kern_a = SMKernel((SMComponent(1.0, 0.05, 0.20),))
    kern_b = SMKernel((SMComponent(1.0, 0.05, 0.35),))
    noise = NoiseModel(noise_std**2)
    ya = _gp.sample_prior(kern_a, noise, t, 1, seed=np.random.default_rng((seed, 0)))[0]
    yb = _gp.sample_prior(kern_b, noise, t, 1, seed=np.random.default_rng((seed, 1)))[0]
    return TimeSeries(t, ya), TimeSeries(t, yb)


def uneven_subsample(data: TimeSeries, fraction: float, seed=0) -> TimeSeries:
    """Seeded uniform subsample without replacement; order restored by time."""
    if not (0.0 < fraction <= 1.0):
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    k = max(3, int(round(fraction * data.n)))
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(data.n, size=k, replace=False))
    return TimeSeries(data.times[idx], data.values[idx])
