"""Exception types shared across the package.

Exit-code mapping used by the CLI: ValidationError -> 2, everything else
derived from PrerandError -> 3.
"""


class PrerandError(Exception):
    """Base class for all package errors."""


class ValidationError(PrerandError):
    """Malformed configuration or arguments."""


class DomainError(PrerandError):
    """Point outside the chart on a non-periodic axis."""


class FieldError(PrerandError):
    """Field evaluator returned a non-finite value."""


class MetricError(PrerandError):
    """Riemannian part degenerate or not positive definite."""


class ConversionError(PrerandError):
    """Metric conversion precondition violated (carries a witness)."""


class NumericalError(PrerandError):
    """Integration or solver failure."""


class ConsistencyError(PrerandError):
    """Two independent routes disagreed beyond tolerance; indicates a bug."""
