"""Exception hierarchy shared by the library and the command line."""


class OrometError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(OrometError, ValueError):
    """Bad input: out-of-range values, inconsistent arguments, bad overrides."""


class InvalidDatasetError(ValidationError):
    """A dataset violates a structural requirement (size, symmetry, ids)."""


class BelowThresholdError(ValidationError):
    """A threshold smaller than the dataset's minimal threshold was requested."""


class OracleScaleExceeded(ValidationError):
    """The exhaustive path oracle was asked to run on too large a graph."""


class UndefinedMetricError(ValidationError):
    """A class accuracy was requested for a class with no members."""


class ConvergenceError(OrometError):
    def __init__(self, message, grad_norm):
        super().__init__(f"{message} (final gradient norm {grad_norm:.3e})")
        self.grad_norm = grad_norm


class TransportError(OrometError):
    """Network failure talking to the SPARQL endpoint; retrying may help."""


class ParseError(OrometError):
    """Malformed input file or endpoint response."""


class SuspiciousQueryError(ParseError):
    """A query returned no rows, which for these datasets means the query is wrong."""
