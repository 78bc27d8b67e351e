"""Exception types raised across the package."""


class QusumError(Exception):
    """Base class for all package errors."""


class NotHermitian(QusumError, ValueError):
    pass


class ConvergenceFailure(QusumError, RuntimeError):
    pass


class DimensionOverflow(QusumError, ValueError):
    pass


class DimMismatch(QusumError, ValueError):
    pass


class LengthMismatch(DimMismatch):
    pass


class NotPositive(QusumError, ValueError):
    """Eigenvalues below the clamping tolerance."""


class BadSpec(QusumError, ValueError):
    pass


class CutoffTooSmall(QusumError, ValueError):
    pass


class NormalizationBroken(QusumError, ValueError):
    pass


class InvalidPovm(QusumError, ValueError):
    pass


class InvalidChannel(QusumError, ValueError):
    pass


class BadDims(QusumError, ValueError):
    pass


class SingularNormalizer(QusumError, ValueError):
    pass


class BudgetExhausted(QusumError, RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class AlreadyStopped(QusumError, RuntimeError):
    pass


class MisalignedChangePoint(QusumError, ValueError):
    pass


class HorizonNonpositive(QusumError, ValueError):
    pass


class ZeroDivergence(QusumError, ValueError):
    """Pre- and post-change outcome laws coincide, so nothing can be detected."""


class InsufficientSpread(QusumError, RuntimeError):
    pass
