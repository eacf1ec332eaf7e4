"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: validation/configuration/domain
problems exit 1, I/O problems exit 2, anything else exits 3.
"""


class MarkerSimError(Exception):
    """Base class for all package errors."""


class DomainError(MarkerSimError, ValueError):
    """An input is outside the mathematical domain of an operation."""


class ConfigurationError(MarkerSimError, ValueError):
    """A camera/marker/job configuration is inconsistent or unusable."""


class ValidationError(MarkerSimError, ValueError):
    """A file or record does not match its declared schema."""


class ConvergenceError(MarkerSimError, ArithmeticError):
    """An iterative solve failed to reach its tolerance."""
