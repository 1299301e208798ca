"""Exception hierarchy.

``SpecgpError`` splits into usage problems (bad inputs, bad config) and
numerical failures; the CLI maps the former to exit code 1 and the latter
to exit code 2.
"""


class SpecgpError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(SpecgpError, ValueError):
    """Invalid user input: malformed files, inconsistent configuration."""


class IngestError(UsageError):
    """CSV ingestion failure; message carries the offending line number."""


class NumericalError(SpecgpError, RuntimeError):
    """A numerical routine failed in a way that invalidates the result."""


class GramFactorizationError(NumericalError):
    """Cholesky of a Gram matrix failed even after jitter escalation."""


class NonUniformSamplingError(UsageError):
    """Operation requires uniform sampling (use lomb_scargle instead)."""


class NonFiniteObjectiveError(NumericalError):
    """An objective returned NaN/inf; carries the offending point."""

    def __init__(self, point, value):
        self.point = point
        self.value = value
        super().__init__(f"objective returned non-finite value {value!r} at {point!r}")


class PosteriorVarianceError(NumericalError):
    """Posterior variance fell below the tolerated negative range."""
