"""Exception hierarchy shared across the package."""


class ActiveRankError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(ActiveRankError):
    """A configuration value is missing, malformed, or out of range."""


class ValidationError(ActiveRankError):
    """An input violates a documented precondition."""


class ShapeError(ValidationError):
    """Array dimensions do not match the expected shapes."""


class NumericalError(ActiveRankError):
    """A computation produced NaN/Inf or received a non-finite input."""


class PairingError(ActiveRankError):
    """No admissible pair could be formed from the given ids."""


class OracleError(ActiveRankError):
    """An annotation query could not be answered."""


class ParseError(ActiveRankError):
    """A file could not be parsed; carries the offending location."""


class SchemaError(ActiveRankError):
    """Parsed data violates the dataset schema."""


class UndefinedMetricError(ActiveRankError):
    """A metric has an empty denominator and no defined value."""
