"""Exception hierarchy shared across the package."""


class MetaswarmError(Exception):
    """Base class for all package-specific errors."""


class AdmissibilityError(MetaswarmError):
    """Masses or kernel violate the conditions for a valid multi-spike state."""


class DivergenceError(MetaswarmError):
    """A simulated quantity became non-finite."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class GridCoverageError(MetaswarmError):
    """The grid does not cover the support of the requested profile."""


class EmptyWindowError(MetaswarmError):
    """No particles fall inside the requested histogram window."""


class ConvergenceError(MetaswarmError):
    """An iterative solve failed to converge."""


class DiagnosticError(MetaswarmError):
    """A trajectory diagnostic cannot be computed from the given samples."""


class ConfigurationError(MetaswarmError):
    """Invalid or inconsistent run configuration."""


class ConfigFileError(ConfigurationError):
    """The configuration file is missing or unreadable."""


class SchemaViolationError(ConfigurationError):
    """The configuration file does not match the schema."""
