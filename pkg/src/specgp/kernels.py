"""Stationary covariance kernels with analytic spectral densities.

Every kernel is a positive-definite function of the lag, K(tau), together
with its Fourier transform in cycles-per-unit-time convention,

    density(xi) = integral K(tau) exp(-j 2 pi xi tau) dtau,

which is even, nonnegative and integrates to K(0).  The spectral-mixture
family is the exactly supported case for spectrum inference; the remaining
kernels (sinc, Laplace, Matern-3/2) plug into the small-window
approximation path.  Kernels are immutable and all evaluations are pure.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import GramFactorizationError, UsageError

logger = logging.getLogger(__name__)

# Diagonal jitter policy for Gram factorizations, relative to K(0):
# start small, escalate by 10x, give up past the ceiling.
JITTER_START = 1e-10
JITTER_CEILING = 1e-4


@dataclass(frozen=True)
class NoiseModel:
    """Observation-noise variance.

    Kept separate from the kernel on purpose: it enters the Gram diagonal
    only and never the spectral density.
    """

    sigma_n2: float = 0.0

    def __post_init__(self):
        if not (self.sigma_n2 >= 0.0):
            raise UsageError(f"noise variance must be >= 0, got {self.sigma_n2}")


class StationaryKernel:
    """Interface: stationary covariance K(tau) with spectral density."""

    #: True only when the local-spectrum statistics are available in closed
    #: form for this kernel (the spectral-mixture family).
    supports_exact_spectrum: bool = False

    def eval(self, tau):
        """Covariance at lag ``tau`` (scalar or array)."""
        raise NotImplementedError

    def spectral_density(self, xi):
        """Fourier transform of ``eval`` at frequency ``xi`` (cycles/unit time)."""
        raise NotImplementedError

    def spectral_lengthscale(self) -> float:
        """Smallest frequency scale over which the density varies.

        Used to decide whether the narrow-window delta approximation of the
        local-spectrum statistics is trustworthy.
        """
        raise NotImplementedError

    def variance(self) -> float:
        return float(np.asarray(self.eval(0.0)))


@dataclass(frozen=True)
class SMComponent:
    """One spectral-mixture component: weight, decay rate, centre frequency."""

    sigma2: float
    gamma: float
    theta: float

    def __post_init__(self):
        if not (self.sigma2 > 0.0):
            raise UsageError(f"component weight sigma2 must be > 0, got {self.sigma2}")
        if not (self.gamma > 0.0):
            raise UsageError(f"component rate gamma must be > 0, got {self.gamma}")
        if not (self.theta >= 0.0):
            raise UsageError(f"component frequency theta must be >= 0, got {self.theta}")


@dataclass(frozen=True)
class SMKernel(StationaryKernel):
    """Spectral-mixture kernel: sum of Gaussian-decayed cosines,

        K(tau) = sum_q sigma2_q exp(-gamma_q tau^2) cos(2 pi theta_q tau),

    whose spectral density is a symmetrized Gaussian mixture centred at
    +-theta_q with width set by gamma_q.
    """

    components: tuple[SMComponent, ...]

    supports_exact_spectrum = True

    def __post_init__(self):
        comps = tuple(
            c if isinstance(c, SMComponent) else SMComponent(*c) for c in self.components
        )
        if len(comps) < 1:
            raise UsageError("spectral-mixture kernel needs at least one component")
        object.__setattr__(self, "components", comps)

    @property
    def q(self) -> int:
        return len(self.components)

    def eval(self, tau):
        tau = np.asarray(tau, dtype=float)
        out = np.zeros_like(tau)
        for c in self.components:
            out = out + c.sigma2 * np.exp(-c.gamma * tau**2) * np.cos(2.0 * np.pi * c.theta * tau)
        return out

    def spectral_density(self, xi):
        xi = np.asarray(xi, dtype=float)
        out = np.zeros_like(xi)
        for c in self.components:
            amp = 0.5 * c.sigma2 * math.sqrt(math.pi / c.gamma)
            for th in (c.theta, -c.theta):
                out = out + amp * np.exp(-np.pi**2 * (xi - th) ** 2 / c.gamma)
        return out

    def spectral_lengthscale(self) -> float:
        return min(math.sqrt(c.gamma) / math.pi for c in self.components)


def squared_exponential(sigma2: float, gamma: float) -> SMKernel:
    """Squared-exponential kernel as the zero-frequency spectral mixture."""
    return SMKernel((SMComponent(sigma2, gamma, 0.0),))


@dataclass(frozen=True)
class SincKernel(StationaryKernel):
    """Band-limited kernel: sinc envelope modulated to a centre frequency.

    K(tau) = sigma2 sinc(delta tau) cos(2 pi theta tau); the density is a
    pair of rectangles of width ``delta`` centred at +-theta.
    """

    sigma2: float
    theta: float
    delta: float

    def __post_init__(self):
        if not (self.sigma2 > 0.0 and self.delta > 0.0 and self.theta >= 0.0):
            raise UsageError("sinc kernel needs sigma2 > 0, delta > 0, theta >= 0")

    def eval(self, tau):
        tau = np.asarray(tau, dtype=float)
        return self.sigma2 * np.sinc(self.delta * tau) * np.cos(2.0 * np.pi * self.theta * tau)

    def spectral_density(self, xi):
        xi = np.asarray(xi, dtype=float)
        half = 0.5 * self.delta
        box = lambda z: (np.abs(z) <= half).astype(float)  # noqa: E731
        return self.sigma2 / (2.0 * self.delta) * (box(xi - self.theta) + box(xi + self.theta))

    def spectral_lengthscale(self) -> float:
        return self.delta


@dataclass(frozen=True)
class LaplaceKernel(StationaryKernel):
    """Exponential (Ornstein-Uhlenbeck) kernel with Lorentzian density."""

    sigma2: float
    lengthscale: float

    def __post_init__(self):
        if not (self.sigma2 > 0.0 and self.lengthscale > 0.0):
            raise UsageError("laplace kernel needs sigma2 > 0, lengthscale > 0")

    def eval(self, tau):
        tau = np.asarray(tau, dtype=float)
        return self.sigma2 * np.exp(-np.abs(tau) / self.lengthscale)

    def spectral_density(self, xi):
        xi = np.asarray(xi, dtype=float)
        ell = self.lengthscale
        return self.sigma2 * 2.0 * ell / (1.0 + (2.0 * np.pi * xi * ell) ** 2)

    def spectral_lengthscale(self) -> float:
        return 1.0 / (2.0 * math.pi * self.lengthscale)


@dataclass(frozen=True)
class Matern32Kernel(StationaryKernel):
    """Matern kernel with smoothness 3/2."""

    sigma2: float
    lengthscale: float

    def __post_init__(self):
        if not (self.sigma2 > 0.0 and self.lengthscale > 0.0):
            raise UsageError("matern32 kernel needs sigma2 > 0, lengthscale > 0")

    def eval(self, tau):
        r = np.sqrt(3.0) * np.abs(np.asarray(tau, dtype=float)) / self.lengthscale
        return self.sigma2 * (1.0 + r) * np.exp(-r)

    def spectral_density(self, xi):
        xi = np.asarray(xi, dtype=float)
        ell = self.lengthscale
        return self.sigma2 * 12.0 * np.sqrt(3.0) / ell**3 / (3.0 / ell**2 + (2.0 * np.pi * xi) ** 2) ** 2

    def spectral_lengthscale(self) -> float:
        return math.sqrt(3.0) / (2.0 * math.pi * self.lengthscale)


@dataclass(frozen=True)
class WhiteNoiseKernel(StationaryKernel):
    """Idealized white kernel: identity Gram, flat spectral density.

    Exists for the uninformative-prior consistency checks; the flat density
    does not integrate to K(0), so it is excluded from the quadrature
    invariants that apply to the proper kernels above.
    """

    sigma2: float = 1.0

    def __post_init__(self):
        if not (self.sigma2 > 0.0):
            raise UsageError("white kernel needs sigma2 > 0")

    def eval(self, tau):
        tau = np.asarray(tau, dtype=float)
        return np.where(tau == 0.0, self.sigma2, 0.0)

    def spectral_density(self, xi):
        xi = np.asarray(xi, dtype=float)
        return np.full_like(xi, self.sigma2)

    def spectral_lengthscale(self) -> float:
        return math.inf


def gram_matrix(kernel: StationaryKernel, noise: NoiseModel, times, jitter: float | None = None) -> np.ndarray:
    """Gram matrix K(t_i - t_j) + (sigma_n2 + jitter) on the diagonal."""
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 1:
        raise UsageError("times must be a nonempty 1-d array")
    if jitter is None:
        jitter = JITTER_START * kernel.variance()
    lags = times[:, None] - times[None, :]
    g = np.asarray(kernel.eval(lags), dtype=float)
    g[np.diag_indices_from(g)] += noise.sigma_n2 + jitter
    return g


def gram_cholesky(kernel: StationaryKernel, noise: NoiseModel, times):
    """Factor the Gram matrix, escalating jitter until Cholesky succeeds.

    Returns ``(gram, chol_lower, jitter_used)``.  Raises
    :class:`GramFactorizationError` once the jitter would exceed the
    ceiling; that signals degenerate hyperparameters, not a bug.
    """
    k0 = kernel.variance()
    jitter = JITTER_START * k0
    while True:
        g = gram_matrix(kernel, noise, times, jitter=jitter)
        try:
            chol = np.linalg.cholesky(g)
        except np.linalg.LinAlgError:
            jitter *= 10.0
            if jitter > JITTER_CEILING * k0:
                raise GramFactorizationError(
                    f"Gram matrix not factorizable up to jitter {JITTER_CEILING:g}*K(0); "
                    "hyperparameters are degenerate"
                ) from None
            logger.warning("Gram Cholesky failed, escalating jitter to %.3g", jitter)
            continue
        return g, chol, jitter


# --- JSON serialization of (kernel, noise) specifications ------------------

def kernel_spec_to_dict(kernel: StationaryKernel, noise: NoiseModel) -> dict:
    if isinstance(kernel, SMKernel):
        doc = {
            "type": "sm",
            "components": [
                {"sigma2": c.sigma2, "gamma": c.gamma, "theta": c.theta}
                for c in kernel.components
            ],
        }
    elif isinstance(kernel, SincKernel):
        doc = {"type": "sinc", "sigma2": kernel.sigma2, "theta": kernel.theta, "delta": kernel.delta}
    elif isinstance(kernel, LaplaceKernel):
        doc = {"type": "laplace", "sigma2": kernel.sigma2, "lengthscale": kernel.lengthscale}
    elif isinstance(kernel, Matern32Kernel):
        doc = {"type": "matern32", "sigma2": kernel.sigma2, "lengthscale": kernel.lengthscale}
    elif isinstance(kernel, WhiteNoiseKernel):
        doc = {"type": "white", "sigma2": kernel.sigma2}
    else:
        raise UsageError(f"cannot serialize kernel of type {type(kernel).__name__}")
    doc["noise_sigma2"] = noise.sigma_n2
    return doc


def kernel_spec_from_dict(doc: dict) -> tuple[StationaryKernel, NoiseModel]:
    try:
        ktype = doc["type"]
    except KeyError:
        raise UsageError("kernel spec missing 'type'") from None
    noise = NoiseModel(float(doc.get("noise_sigma2", 0.0)))
    if ktype == "sm":
        comps = tuple(
            SMComponent(float(c["sigma2"]), float(c["gamma"]), float(c["theta"]))
            for c in doc["components"]
        )
        return SMKernel(comps), noise
    if ktype == "sinc":
        return SincKernel(float(doc["sigma2"]), float(doc["theta"]), float(doc["delta"])), noise
    if ktype == "laplace":
        return LaplaceKernel(float(doc["sigma2"]), float(doc["lengthscale"])), noise
    if ktype == "matern32":
        return Matern32Kernel(float(doc["sigma2"]), float(doc["lengthscale"])), noise
    if ktype == "white":
        return WhiteNoiseKernel(float(doc.get("sigma2", 1.0))), noise
    raise UsageError(f"unknown kernel type {ktype!r}")


def kernel_spec_to_json(kernel: StationaryKernel, noise: NoiseModel) -> str:
    return json.dumps(kernel_spec_to_dict(kernel, noise))


def kernel_spec_from_json(text: str) -> tuple[StationaryKernel, NoiseModel]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"invalid kernel spec JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise UsageError("kernel spec JSON must be an object")
    return kernel_spec_from_dict(doc)
