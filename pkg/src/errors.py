from __future__ import annotations


class SpectraError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(SpectraError):
    pass


class NotPSD(SpectraError):
    pass


class AsymmetryTooLarge(SpectraError):
    pass


class DegenerateDesign(SpectraError):
    pass


class UnsupportedDesign(SpectraError):
    pass


class SingularResolvent(SpectraError):
    pass


class SingularSystem(SpectraError):
    pass


class NoConvergence(SpectraError):
    """Raised when the fixed-point iteration hits max_iters.

    `fixed_point` holds the last iterate (flagged converged=False) and
    `history` the residual trajectory, so callers can keep going.
    """

    def __init__(self, message: str, fixed_point=None, history: tuple[float, ...] = ()):
        super().__init__(message)
        self.fixed_point = fixed_point
        self.history = tuple(history)


class DomainViolation(SpectraError):
    pass


class ZeroDenominator(SpectraError):
    pass


class RangeMismatch(SpectraError):
    pass


class EigenFailure(SpectraError):
    pass


class ConfigError(SpectraError):
    pass


class MassDeficitWarning(UserWarning):
    pass
