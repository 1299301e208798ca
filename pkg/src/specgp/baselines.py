"""Classical spectral estimators emitting the common estimate format.

Lomb-Scargle handles uneven sampling; the periodogram and MUSIC require a
uniform grid.  All three are point estimators, so the variance columns of
their estimates are zero.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import NonUniformSamplingError, NumericalError, UsageError
from .gp import TimeSeries
from .spectrum import SpectrumEstimate

logger = logging.getLogger(__name__)

# Pseudospectrum ceiling: exact subspace orthogonality divides by ~0.
MUSIC_CEILING = 1e12


@dataclass(frozen=True)
class LSConfig:
    """Least-squares periodogram settings."""

    grid: np.ndarray
    fit_mean: bool = True
    normalization: str = "none"  # "standard" normalizes by the data variance

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float).ravel()
        if grid.size == 0:
            raise UsageError("frequency grid must be nonempty")
        if np.any(grid < 0.0):
            raise UsageError("frequency grid must be nonnegative")
        if grid.size > 1 and np.any(np.diff(grid) <= 0.0):
            raise UsageError("frequency grid must be strictly increasing")
        if self.normalization not in ("standard", "none"):
            raise UsageError(f"unknown normalization {self.normalization!r}")
        grid.setflags(write=False)
        object.__setattr__(self, "grid", grid)


@dataclass(frozen=True)
class MUSICConfig:
    """Subspace pseudospectrum settings: model order p, embedding dimension m."""

    model_order: int
    embedding_dim: int

    def __post_init__(self):
        p, m = self.model_order, self.embedding_dim
        if not (isinstance(p, int) and isinstance(m, int)):
            raise UsageError("model order and embedding dimension must be integers")
        if not (1 <= p < m):
            raise UsageError(f"need 1 <= model_order < embedding_dim, got p={p}, m={m}")


def lomb_scargle(data: TimeSeries, cfg: LSConfig) -> SpectrumEstimate:
    """Least-squares power of a per-frequency sine/cosine pair.

    Uses the phase-shift formulation: each frequency gets the offset tau
    that makes the cosine and sine columns orthogonal, so the two
    least-squares amplitudes decouple.  The result is invariant to
    translating the time axis.  Degenerate columns contribute zero power
    (with a warning when a whole frequency is degenerate).
    """
    if data.n < 3:
        raise UsageError(f"least-squares periodogram needs at least 3 points, got {data.n}")
    t = data.times
    y = data.values - data.values.mean() if cfg.fit_mean else data.values.copy()
    omega = 2.0 * np.pi * cfg.grid[:, None]  # (M, 1) against times (N,)

    with np.errstate(invalid="ignore", divide="ignore"):
        s2 = np.sum(np.sin(2.0 * omega * t), axis=1)
        c2 = np.sum(np.cos(2.0 * omega * t), axis=1)
        tau = np.arctan2(s2, c2) / np.where(cfg.grid > 0.0, 4.0 * np.pi * cfg.grid, 1.0)
        arg = omega * t - (omega * tau[:, None])
        cos_col = np.cos(arg)
        sin_col = np.sin(arg)
        cc = np.sum(cos_col**2, axis=1)
        ss = np.sum(sin_col**2, axis=1)
        yc = cos_col @ y
        ys = sin_col @ y
        tiny = data.n * np.finfo(float).eps**0.5
        pow_c = np.where(cc > tiny, yc**2 / np.where(cc > tiny, cc, 1.0), 0.0)
        pow_s = np.where(ss > tiny, ys**2 / np.where(ss > tiny, ss, 1.0), 0.0)
    degenerate = (cc <= tiny) & (ss <= tiny)
    if np.any(degenerate):
        warnings.warn(f"{int(degenerate.sum())} degenerate grid frequencies set to zero power")
    power = 0.5 * (pow_c + pow_s)
    if cfg.normalization == "standard":
        denom = float(np.var(data.values, ddof=1)) if data.n > 1 else 1.0
        if denom > 0.0:
            power = power / denom
    zeros = np.zeros_like(power)
    return SpectrumEstimate(cfg.grid, zeros, zeros.copy(), zeros.copy(), zeros.copy(), power, "ls")


def _uniform_spacing(data: TimeSeries) -> float:
    dt = np.diff(data.times)
    if dt.size == 0:
        raise UsageError("need at least 2 points")
    mean_dt = float(dt.mean())
    if np.max(np.abs(dt - mean_dt)) > 1e-9 * abs(mean_dt):
        raise NonUniformSamplingError(
            "sampling is not uniform; use lomb_scargle for uneven time series"
        )
    return mean_dt


def periodogram(data: TimeSeries, zero_pad_factor: int = 1) -> SpectrumEstimate:
    """|DFT|^2 / N on the FFT grid of a uniformly sampled series.

    Zero padding refines the grid without changing the information content;
    Hermitian symmetry is folded away so only nonnegative frequencies are
    returned.  With this normalization the bin-average of the power equals
    the mean square of the data (discrete Parseval identity).
    """
    if data.n < 2:
        raise UsageError(f"periodogram needs at least 2 points, got {data.n}")
    if zero_pad_factor < 1:
        raise UsageError("zero_pad_factor must be >= 1")
    dt = _uniform_spacing(data)
    m = data.n * int(zero_pad_factor)
    spec = np.fft.rfft(data.values, n=m)
    power = np.abs(spec) ** 2 / data.n
    freqs = np.fft.rfftfreq(m, d=dt)
    zeros = np.zeros_like(power)
    return SpectrumEstimate(freqs, zeros, zeros.copy(), zeros.copy(), zeros.copy(), power, "periodogram")


def music(data: TimeSeries, cfg: MUSICConfig, grid) -> SpectrumEstimate:
    """MUSIC pseudospectrum 1 / ||E_n^H a(xi)||^2 on the given grid.

    The noise subspace E_n comes from the eigendecomposition of the
    forward-backward autocorrelation estimate over m-dimensional embeddings
    of the series.  Values are capped at ``MUSIC_CEILING``: at exact
    subspace orthogonality the denominator underflows to zero.
    """
    grid = np.asarray(grid, dtype=float).ravel()
    if grid.size == 0:
        raise UsageError("frequency grid must be nonempty")
    p, m = cfg.model_order, cfg.embedding_dim
    if m > data.n // 2:
        raise UsageError(f"embedding dimension {m} exceeds N/2 = {data.n // 2}")
    dt = _uniform_spacing(data)
    y = data.values
    n_rows = data.n - m + 1
    idx = np.arange(m)[None, :] + np.arange(n_rows)[:, None]
    x = y[idx]
    r = x.T @ x / n_rows
    exchange = np.eye(m)[::-1]
    r = 0.5 * (r + exchange @ r.T @ exchange)
    try:
        _, vecs = np.linalg.eigh(r)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"autocorrelation eigendecomposition failed: {exc}") from None
    noise_subspace = vecs[:, : m - p]  # eigh sorts ascending
    steering = np.exp(-2j * np.pi * np.outer(grid * dt, np.arange(m)))
    proj = steering.conj() @ noise_subspace
    denom = np.sum(np.abs(proj) ** 2, axis=1)
    with np.errstate(divide="ignore"):
        pseudo = np.where(denom > 0.0, 1.0 / np.where(denom > 0.0, denom, 1.0), np.inf)
    pseudo = np.minimum(pseudo, MUSIC_CEILING)
    zeros = np.zeros_like(pseudo)
    return SpectrumEstimate(grid, zeros, zeros.copy(), zeros.copy(), zeros.copy(), pseudo, "music")
