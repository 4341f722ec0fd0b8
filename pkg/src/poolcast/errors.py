"""Exception hierarchy shared by every module."""


class PoolcastError(Exception):
    """Base class for all library errors."""


class DomainError(PoolcastError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class SchemaError(PoolcastError, ValueError):
    """Input data or a model file does not follow the documented layout."""


class NumericError(PoolcastError, ArithmeticError):
    """A numerical procedure could not produce a trustworthy answer."""


class InfeasibleReportsError(NumericError):
    """Reported probabilities contradict the declared information structure."""


class UnsupportedVariantError(PoolcastError, NotImplementedError):
    """The requested operation has no implementation for this family."""


class DegenerateModelError(NumericError):
    """An information model yields a zero denominator or a singular matrix."""


class SeparationError(NumericError):
    """Fitted coefficients diverge because the likelihood is unbounded."""


class ConvergenceError(NumericError):
    """The optimizer stopped without meeting its gradient tolerance.

    The best iterate found is kept on ``best`` for inspection.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class UndefinedMetricError(PoolcastError, ValueError):
    """A score cannot be computed on the given rows."""


class UndefinedClassificationError(PoolcastError, ValueError):
    """Extremizing is undefined when the average equals the prior or the aggregate."""
