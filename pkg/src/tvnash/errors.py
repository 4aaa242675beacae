"""Exception hierarchy."""


class TvNashError(Exception):
    """Base class for all package errors."""


class DimensionError(TvNashError, ValueError):
    """Input array does not match the game or graph dimensions."""

    def __init__(self, message, agent=None):
        super().__init__(message)
        self.agent = agent


class MonotonicityError(TvNashError):
    """The pseudo-gradient is not strongly monotone (mu <= 0)."""


class ConstantsOrderError(TvNashError, ValueError):
    """Regularity constants violate 0 < mu <= ell <= ell0."""


class GraphError(TvNashError, ValueError):
    """Graph fails a structural requirement (connectivity, stochasticity, balance)."""


class CertificateError(TvNashError):
    """A step-size certificate is invalid or internally inconsistent."""

    def __init__(self, message, bound=None):
        super().__init__(message)
        self.bound = bound


class OracleError(TvNashError):
    """The centralized equilibrium solver did not converge."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual
