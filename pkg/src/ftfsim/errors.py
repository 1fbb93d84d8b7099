"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: usage problems exit 2, validation
problems exit 3, numerical failures exit 4.
"""


class FtfError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(FtfError):
    """Malformed or inconsistent device configuration."""


class ValidationError(FtfError):
    """Input violates a documented precondition or invariant."""


class DimensionError(ValidationError):
    """Requested Hilbert-space dimension exceeds the configured guard."""


class LabelingError(FtfError):
    """A required dressed state cannot be assigned to a bare label."""


class ConvergenceError(FtfError):
    """An iterative routine exhausted its budget without converging."""


class FitError(FtfError):
    """A curve fit failed or produced out-of-range parameters."""
