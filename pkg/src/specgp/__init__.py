"""Spectral estimation with Gaussian-process posteriors over local spectra.

A stationary GP prior on the signal induces, after square-exponential
windowing, an exact Gaussian posterior over the spectrum's real and
imaginary parts given noisy (possibly uneven) samples; the posterior-mean
power spectral density is available in closed form and can be optimized to
find periodicities.  Classical estimators (Lomb-Scargle, periodogram,
MUSIC) share the same output format for comparison.
"""

from .baselines import LSConfig, MUSICConfig, lomb_scargle, music, periodogram
from .exceptions import (
    GramFactorizationError,
    IngestError,
    NonFiniteObjectiveError,
    NonUniformSamplingError,
    NumericalError,
    PosteriorVarianceError,
    SpecgpError,
    UsageError,
)
from .gp import (
    FreeParams,
    TimeSeries,
    TrainConfig,
    TrainedGP,
    nlml,
    nlml_gradient,
    sample_prior,
    train,
)
from .kernels import (
    LaplaceKernel,
    Matern32Kernel,
    NoiseModel,
    SincKernel,
    SMComponent,
    SMKernel,
    StationaryKernel,
    WhiteNoiseKernel,
    gram_cholesky,
    gram_matrix,
    kernel_spec_from_json,
    kernel_spec_to_json,
    squared_exponential,
)
from .optim import PowellResult, PowellState, find_psd_peaks, powell_minimize
from .spectrum import (
    SMSpectralTerms,
    SpectrumEstimate,
    SpectrumPosterior,
    WindowConfig,
    cross_cov_approx,
    cross_cov_exact_sm,
    default_freq_grid,
    default_window,
    delta_approx_valid,
    dtft_limit_mean,
    posterior,
    prior_cov_approx,
    prior_cov_exact_sm,
    pseudo_cov,
    psd_posterior_mean,
    real_imag_covs,
    sample_psd,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
