"""Exception types raised by the numeric core and the CLI."""


class NetgpError(Exception):
    """Base class for all package-specific failures."""


class NotPositiveDefinite(NetgpError):
    """Cholesky factorization failed even at the maximum jitter level."""


class SingularSystem(NetgpError):
    """The structural solve (I - B) x = y failed or is numerically singular."""


class DimensionMismatch(NetgpError):
    """Input shapes are inconsistent or exceed a documented size guard."""


class ShapeMismatch(NetgpError):
    """Optimizer buffers and gradients do not share a common shape."""


class EigenFailure(NetgpError):
    """An eigendecomposition produced values outside the usable range."""


class UnstableInstance(NetgpError):
    """Planted-network resampling ran out of attempts below the spectral cap."""


class DegenerateTruth(NetgpError):
    """ROC scoring needs at least one positive and one negative arc."""


class TrainingAbort(NetgpError):
    """A numerical failure stopped the optimization loop.

    Carries the 1-based iteration index at which the failure occurred.
    """

    def __init__(self, iteration: int, reason: str):
        self.iteration = iteration
        self.reason = reason
        super().__init__(f"training aborted at iteration {iteration}: {reason}")


class ConfigError(NetgpError):
    """A run configuration file failed to parse or contained unknown keys."""
