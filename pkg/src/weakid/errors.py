"""Exception types shared across the package."""


class WeakidError(Exception):
    """Base class for all package-specific errors."""


class NearSingularError(WeakidError):
    """A matrix solve failed even after the ridge retry policy."""


class NotConvergedError(WeakidError):
    """An iterative fit exhausted its iteration budget."""


class SeparationError(WeakidError):
    """Probit likelihood is unbounded (perfect separation)."""


class ConfigError(WeakidError):
    """An instrument or run configuration is incompatible with the data."""


class SchemaError(WeakidError):
    """A required column is missing from the input file."""


class ParseError(WeakidError):
    """A cell could not be parsed as a number."""


class UnsupportedDesignError(WeakidError):
    """No embedded critical value exists for the requested design."""
