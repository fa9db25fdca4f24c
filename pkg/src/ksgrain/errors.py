"""Exception hierarchy.

Two families matter to callers: :class:`ValidationError` for bad inputs
(the CLI maps these to exit code 1) and :class:`NumericalError` for
computations that ran but could not produce a trustworthy answer (exit 2).
"""


class KsgrainError(Exception):
    pass


class ValidationError(KsgrainError, ValueError):
    pass


class NumericalError(KsgrainError, ArithmeticError):
    pass


class DegenerateBoundsError(ValidationError):
    pass


class ZeroCellError(ValidationError):
    pass


class OutOfRegionError(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class OrbitEscapeError(NumericalError):
    pass


class UndefinedDerivativeError(NumericalError):
    pass


class NonNormalizedError(ValidationError):
    pass


class WindowTooShortError(ValidationError):
    pass


class NoSaturationError(NumericalError):
    pass


class NonConvergenceError(NumericalError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class EvenDimensionError(ValidationError):
    pass


class GridMismatchError(ValidationError):
    pass


class EigensolverError(NumericalError):
    pass
