"""Exception types shared across the package."""


class HessquotError(Exception):
    """Base class for all package errors."""


class GridMismatchError(HessquotError):
    """Fields passed to one operation live on different grids."""


class GeometryError(HessquotError):
    """A metric failed positive definiteness, or related geometric input is invalid."""


class AdmissibilityError(HessquotError):
    """An eigenvalue vector or candidate solution left the positive cone."""


class ConfigError(HessquotError):
    """A run configuration is malformed; the message names the offending key."""


class NonConvergenceError(HessquotError):
    """Newton or the homotopy failed to converge within its budget."""

    def __init__(self, message, last_t=None):
        super().__init__(message)
        self.last_t = last_t


class UnsupportedConfigurationError(HessquotError):
    """The requested analysis is only implemented for a restricted setting."""
