"""Gaussian-process regression over time series.

Provides the negative log marginal likelihood and its analytic gradient in
log-hyperparameter space, prior sampling, and a multi-start training loop
(gradient descent with backtracking) for spectral-mixture kernels.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .exceptions import UsageError
from .kernels import NoiseModel, SMComponent, SMKernel, StationaryKernel, gram_cholesky, kernel_spec_to_dict

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeSeries:
    """Observation times and values; times are sorted and strictly increasing."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).ravel()
        y = np.asarray(self.values, dtype=float).ravel()
        if t.size != y.size:
            raise UsageError(f"times ({t.size}) and values ({y.size}) differ in length")
        if t.size < 1:
            raise UsageError("a time series needs at least one observation")
        order = np.argsort(t, kind="stable")
        t, y = t[order], y[order]
        dup = np.flatnonzero(np.diff(t) == 0.0)
        if dup.size:
            raise UsageError(f"duplicate timestamp {t[dup[0]]!r} in time series")
        t.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", y)

    @property
    def n(self) -> int:
        return self.times.size

    @property
    def span(self) -> float:
        return float(self.times[-1] - self.times[0])

    @property
    def midpoint(self) -> float:
        return float(0.5 * (self.times[0] + self.times[-1]))

    def shifted(self, offset: float) -> "TimeSeries":
        """Same observations on a translated time axis."""
        return TimeSeries(self.times + offset, self.values)

    def demeaned(self) -> "TimeSeries":
        return TimeSeries(self.times, self.values - self.values.mean())

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.times.tobytes())
        h.update(self.values.tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class FreeParams:
    """Which hyperparameter groups the optimizer may move (in log space)."""

    sigma2: bool = True
    gamma: bool = True
    theta: bool = True
    noise: bool = True


def _pack(kernel: SMKernel, noise: NoiseModel, free: FreeParams) -> np.ndarray:
    vec = []
    for c in kernel.components:
        if free.sigma2:
            vec.append(np.log(c.sigma2))
        if free.gamma:
            vec.append(np.log(c.gamma))
        if free.theta:
            if c.theta <= 0.0:
                raise UsageError("cannot train theta in log space from theta == 0; fix it or start positive")
            vec.append(np.log(c.theta))
    if free.noise:
        if noise.sigma_n2 <= 0.0:
            raise UsageError("cannot train noise in log space from sigma_n2 == 0")
        vec.append(np.log(noise.sigma_n2))
    return np.asarray(vec, dtype=float)


def _unpack(vec: np.ndarray, kernel: SMKernel, noise: NoiseModel, free: FreeParams):
    i = 0
    comps = []
    for c in kernel.components:
        s2, ga, th = c.sigma2, c.gamma, c.theta
        if free.sigma2:
            s2 = float(np.exp(vec[i])); i += 1
        if free.gamma:
            ga = float(np.exp(vec[i])); i += 1
        if free.theta:
            th = float(np.exp(vec[i])); i += 1
        comps.append(SMComponent(s2, ga, th))
    new_noise = noise
    if free.noise:
        new_noise = NoiseModel(float(np.exp(vec[i]))); i += 1
    if i != vec.size:
        raise UsageError(f"parameter vector has {vec.size} entries, expected {i}")
    return SMKernel(tuple(comps)), new_noise


def nlml(kernel: StationaryKernel, noise: NoiseModel, data: TimeSeries) -> float:
    """Negative log marginal likelihood 0.5 (y' G^-1 y + log|G| + N log 2pi)."""
    y = data.values
    _, chol, _ = gram_cholesky(kernel, noise, data.times)
    alpha = cho_solve((chol, True), y)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return float(0.5 * (y @ alpha + logdet + data.n * np.log(2.0 * np.pi)))


def _sm_gram_derivatives(kernel: SMKernel, noise: NoiseModel, lags: np.ndarray, free: FreeParams):
    """Yield dG/d(log parameter) matrices in packing order."""
    for c in kernel.components:
        envelope = c.sigma2 * np.exp(-c.gamma * lags**2)
        cosine = np.cos(2.0 * np.pi * c.theta * lags)
        comp = envelope * cosine
        if free.sigma2:
            yield comp
        if free.gamma:
            yield -c.gamma * lags**2 * comp
        if free.theta:
            yield -2.0 * np.pi * c.theta * lags * envelope * np.sin(2.0 * np.pi * c.theta * lags)
    if free.noise:
        yield noise.sigma_n2 * np.eye(lags.shape[0])


def _nlml_with_gradient(kernel: SMKernel, noise: NoiseModel, data: TimeSeries, free: FreeParams):
    """Value and gradient from a single Gram factorization."""
    if not isinstance(kernel, SMKernel):
        raise UsageError("analytic gradient is implemented for spectral-mixture kernels")
    y = data.values
    _, chol, _ = gram_cholesky(kernel, noise, data.times)
    alpha = cho_solve((chol, True), y)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    value = float(0.5 * (y @ alpha + logdet + data.n * np.log(2.0 * np.pi)))
    ginv = cho_solve((chol, True), np.eye(data.n))
    h = ginv - np.outer(alpha, alpha)
    lags = data.times[:, None] - data.times[None, :]
    grad = [0.5 * np.sum(h * dg) for dg in _sm_gram_derivatives(kernel, noise, lags, free)]
    return value, np.asarray(grad, dtype=float)


def nlml_gradient(kernel: SMKernel, noise: NoiseModel, data: TimeSeries, free: FreeParams = FreeParams()) -> np.ndarray:
    """Gradient of :func:`nlml` with respect to the packed log parameters."""
    return _nlml_with_gradient(kernel, noise, data, free)[1]


def sample_prior(kernel: StationaryKernel, noise: NoiseModel, times, n_paths: int, seed) -> np.ndarray:
    """Draw ``n_paths`` joint samples of noisy observations at ``times``.

    Uses the Cholesky factor of the Gram matrix (noise included), so a draw
    is a sample of y rather than of the latent signal.
    """
    times = np.asarray(times, dtype=float)
    if n_paths == 0:
        return np.empty((0, times.size))
    _, chol, _ = gram_cholesky(kernel, noise, times)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_paths, times.size))
    return z @ chol.T


@dataclass(frozen=True)
class TrainConfig:
    """Settings for :func:`train`."""

    free: FreeParams = FreeParams()
    n_restarts: int = 5
    max_iter: int = 1000
    tol_nlml: float = 1e-8
    tol_grad: float = 1e-6
    seed: int = 0
    ls_seeding: bool = True
    step0: float = 1.0
    backtrack: float = 0.5
    armijo: float = 1e-4
    max_backtracks: int = 40


@dataclass(frozen=True)
class TrainedGP:
    """Immutable trained model with the cached Gram factorization.

    ``alpha`` solves Gram @ alpha = values; spectrum inference reuses it and
    the Cholesky factor so that conditioning on the data costs a single
    O(N^3) factorization regardless of how many spectra are queried.
    """

    kernel: StationaryKernel
    noise: NoiseModel
    data: TimeSeries
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float
    nlml: float
    converged: bool = True
    message: str = ""
    trace: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))

    @classmethod
    def from_fixed(cls, kernel: StationaryKernel, noise: NoiseModel, data: TimeSeries) -> "TrainedGP":
        """Build the cache for hand-set hyperparameters (no optimization)."""
        _, chol, jitter = gram_cholesky(kernel, noise, data.times)
        alpha = cho_solve((chol, True), data.values)
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        val = float(0.5 * (data.values @ alpha + logdet + data.n * np.log(2.0 * np.pi)))
        return cls(kernel, noise, data, chol, alpha, jitter, val)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Apply Gram^-1 to ``rhs`` using the cached factor."""
        return cho_solve((self.chol, True), rhs)

    def half_solve(self, rhs: np.ndarray) -> np.ndarray:
        """Apply L^-1 (lower Cholesky) to ``rhs``; squared norms give quadratic forms."""
        return solve_triangular(self.chol, rhs, lower=True)

    def to_dict(self) -> dict:
        return {
            "kernel": kernel_spec_to_dict(self.kernel, self.noise),
            "data_fingerprint": self.data.fingerprint(),
            "n": self.data.n,
            "nlml": self.nlml,
            "converged": self.converged,
            "message": self.message,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        buf.write("iteration,nlml,step_size\n")
        for it, val, step in self.trace:
            buf.write(f"{int(it)},{val!r},{step!r}\n")
        return buf.getvalue()


def _descend(fun, fun_grad, x0: np.ndarray, cfg: TrainConfig):
    """Backtracking gradient descent; returns (x, f, trace, converged, msg).

    The line search evaluates the objective only; gradients are computed
    once per accepted step.  The accepted step size seeds the next search
    (doubled, capped at step0) so well-scaled problems rarely backtrack.
    """
    x = np.asarray(x0, dtype=float).copy()
    f, g = fun_grad(x)
    trace = [(0, f, 0.0)]
    converged, msg = False, "max iterations reached"
    step_seed = cfg.step0
    for it in range(1, cfg.max_iter + 1):
        gnorm = float(np.linalg.norm(g))
        if gnorm < cfg.tol_grad:
            converged, msg = True, "gradient norm below tolerance"
            break
        # cap the first trial so a raw log-space step cannot explode
        step = min(step_seed, cfg.step0, 1.0 / gnorm)
        accepted = False
        for _ in range(cfg.max_backtracks):
            x_new = x - step * g
            try:
                f_new = fun(x_new)
            except FloatingPointError:
                f_new = np.inf
            if np.isfinite(f_new) and f_new <= f - cfg.armijo * step * gnorm**2:
                accepted = True
                break
            step *= cfg.backtrack
        if not accepted:
            converged, msg = True, "no descent step found (at numerical optimum)"
            break
        step_seed = 2.0 * step
        improvement = f - f_new
        x, f = x_new, f_new
        _, g = fun_grad(x)
        trace.append((it, f, step))
        if improvement < cfg.tol_nlml:
            converged, msg = True, "objective improvement below tolerance"
            break
    return x, f, np.asarray(trace, dtype=float), converged, msg


def _ls_peak_frequencies(data: TimeSeries, q: int) -> np.ndarray:
    """Quick least-squares periodogram pass; returns the top-q peak frequencies."""
    from .baselines import LSConfig, lomb_scargle

    nyq = data.n / (2.0 * data.span) if data.span > 0 else 1.0
    grid = np.linspace(nyq / 2000.0, nyq, 2000)
    est = lomb_scargle(data.demeaned(), LSConfig(grid=grid, fit_mean=True))
    p = est.psd_mean
    interior = (p[1:-1] > p[:-2]) & (p[1:-1] >= p[2:])
    idx = np.flatnonzero(interior) + 1
    if idx.size == 0:
        idx = np.array([int(np.argmax(p))])
    top = idx[np.argsort(p[idx])[::-1]][:q]
    peaks = grid[top]
    if peaks.size < q:
        peaks = np.concatenate([peaks, np.full(q - peaks.size, nyq / 4.0)])
    return peaks


def train(data: TimeSeries, init: SMKernel, noise_init: NoiseModel, config: TrainConfig = TrainConfig()) -> TrainedGP:
    """Fit spectral-mixture hyperparameters by multi-start descent on the NLML.

    The returned model never has a worse NLML than the initialization; if no
    restart improves on it, the initialization itself is returned.
    Non-convergence of the best run is reported in ``converged``/``message``
    and logged, never silent.
    """
    if not isinstance(init, SMKernel):
        raise UsageError("training is implemented for spectral-mixture kernels")
    free = config.free
    rng = np.random.default_rng(config.seed)

    def fun(vec):
        k, nz = _unpack(vec, init, noise_init, free)
        return nlml(k, nz, data)

    def fun_grad(vec):
        k, nz = _unpack(vec, init, noise_init, free)
        return _nlml_with_gradient(k, nz, data, free)

    pack_init = init
    if free.theta and any(c.theta <= 0.0 for c in init.components):
        # log-space training cannot start at zero frequency; nudge it
        pack_init = SMKernel(tuple(
            SMComponent(c.sigma2, c.gamma, max(c.theta, 1e-12)) for c in init.components
        ))
    starts = [_pack(pack_init, noise_init, free)]
    if config.ls_seeding and free.theta:
        peaks = _ls_peak_frequencies(data, init.q)
        seeded = SMKernel(tuple(
            SMComponent(c.sigma2, c.gamma, max(float(th), 1e-12))
            for c, th in zip(init.components, peaks)
        ))
        starts.append(_pack(seeded, noise_init, free))
    nyq = data.n / (2.0 * data.span) if data.span > 0 else 1.0
    var_y = float(np.var(data.values)) or 1.0
    while len(starts) < max(1, config.n_restarts):
        comps = []
        for c in init.components:
            s2 = (var_y / init.q) * float(np.exp(rng.normal(0.0, 0.5))) if free.sigma2 else c.sigma2
            ga = c.gamma * float(np.exp(rng.normal(0.0, 0.5))) if free.gamma else c.gamma
            th = float(np.exp(rng.uniform(np.log(1e-3 * nyq), np.log(nyq)))) if free.theta else c.theta
            comps.append(SMComponent(s2, ga, th))
        nz = NoiseModel(noise_init.sigma_n2 * float(np.exp(rng.normal(0.0, 0.5)))) if free.noise else noise_init
        starts.append(_pack(SMKernel(tuple(comps)), nz, free))

    best = None
    for x0 in starts:
        try:
            x, f, trace, converged, msg = _descend(fun, fun_grad, x0, config)
        except Exception as exc:  # degenerate restart; skip it, keep the run alive
            logger.warning("restart failed (%s); skipping", exc)
            continue
        if best is None or f < best[1]:
            best = (x, f, trace, converged, msg)
    if best is None:
        raise UsageError("all training restarts failed; check the initialization")

    x, f, trace, converged, msg = best
    f_init = nlml(init, noise_init, data)
    if f > f_init:
        x, f = _pack(init, noise_init, free), f_init
        trace = np.asarray([(0, f_init, 0.0)])
        converged, msg = True, "initialization already optimal among candidates"
    kernel, noise = _unpack(x, init, noise_init, free)
    if not converged:
        logger.warning("training did not converge: %s", msg)
    _, chol, jitter = gram_cholesky(kernel, noise, data.times)
    alpha = cho_solve((chol, True), data.values)
    return TrainedGP(kernel, noise, data, chol, alpha, jitter, float(f), converged, msg, trace)
