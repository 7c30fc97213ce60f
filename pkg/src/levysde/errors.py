"""Exception hierarchy shared by every stage of the pipeline."""


class LevySDEError(Exception):
    """Base class for all package errors."""


class DomainError(LevySDEError, ValueError):
    """Parameter vector lies outside the closed parameter box."""


class SingularScaleError(LevySDEError, ArithmeticError):
    """Scale coefficient (numerically) vanishes where its inverse is needed."""


class UnsupportedMoment(LevySDEError, ValueError):
    pass


class OriginError(LevySDEError, ValueError):
    """Lévy density requested at z = 0, where it is not defined."""


class NonFiniteState(LevySDEError, ArithmeticError):
    """Simulated path overflowed to a non-finite value."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class NoProgressError(LevySDEError, RuntimeError):
    """Estimating-equation solver could not make progress."""


class DimensionError(LevySDEError, ValueError):
    pass


class SingularGammaError(LevySDEError, ArithmeticError):
    pass


class NotPositiveDefiniteError(LevySDEError, ArithmeticError):
    pass


class SingularJacobianError(LevySDEError, ArithmeticError):
    pass


class StudyFailedError(LevySDEError, RuntimeError):
    """Too many replications of a Monte Carlo study failed."""
