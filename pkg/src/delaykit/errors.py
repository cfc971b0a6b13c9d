"""Exception hierarchy.

Every error raised deliberately by the package derives from ``DelayKitError``
so callers (the CLI in particular) can separate bad input from numerical
failure.
"""

from __future__ import annotations


class DelayKitError(Exception):
    """Base class for all package errors."""


class ModelError(DelayKitError, ValueError):
    """Invalid system description."""


class DimensionMismatch(ModelError):
    pass


class NegativeDelay(ModelError):
    pass


class NeutralZeroDelay(ModelError):
    pass


class DdaeMissingZeroDelay(ModelError):
    pass


class AdvancedSystem(ModelError):
    pass


class ImproperTransferFunction(ModelError):
    pass


class SingularA22(ModelError):
    pass


class NoPerformanceChannels(ModelError):
    pass


class NotSiso(ModelError):
    pass


class ShapeMismatch(ModelError):
    pass


class IndexOutOfRange(ModelError):
    pass


class UnsupportedUncertaintyKind(ModelError):
    pass


class NumericalError(DelayKitError, ArithmeticError):
    """A numerical procedure failed."""


class IterationFailure(NumericalError):
    pass


class OutOfInterval(NumericalError, ValueError):
    pass


class SingularAtS(NumericalError):
    pass


class NotStronglyStableDifference(NumericalError):
    pass


class LineSearchFailure(NumericalError):
    pass


class AllStartsFailed(NumericalError):
    pass


class DefectiveRoot(NumericalError):
    pass


class FailedStronglyStabilizing(NumericalError):
    pass


class NoSignChange(NumericalError):
    pass


class DelayKitWarning(UserWarning):
    """Numerical diagnostics that do not stop a computation."""


class NotStabilizing(DelayKitWarning):
    """Synthesis ended at a controller whose strong spectral abscissa is not negative."""
