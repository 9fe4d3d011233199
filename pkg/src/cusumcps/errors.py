"""Exception hierarchy.

Two families matter to callers: ``ValidationError`` for bad inputs or
configuration (CLI exit code 1) and ``NumericalError`` for algorithms that
could not produce a trustworthy answer (CLI exit code 2).
"""


class CusumCpsError(Exception):
    pass


class ValidationError(CusumCpsError, ValueError):
    pass


class NumericalError(CusumCpsError, ArithmeticError):
    pass


class DomainError(ValidationError):
    pass


class NegativeDistance(ValidationError):
    pass


class NotPositiveDefinite(ValidationError):
    pass


class SpectralRadiusNotLessThanOne(ValidationError):
    pass


class StateAboveThreshold(ValidationError):
    """A CUSUM attack was requested right after a false alarm (S > tau)."""


class ConfigError(ValidationError):
    pass


class NoConvergence(NumericalError):
    pass


class SingularInnovation(NumericalError):
    pass


class SingularSigma(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


class BracketFailure(NumericalError):
    """No threshold in the search range reaches the requested rate."""
