"""Exception hierarchy shared by all covtest modules."""


class CovtestError(Exception):
    """Base class for every error raised by covtest."""


class NotSquare(CovtestError, ValueError):
    pass


class NotHermitian(CovtestError, ValueError):
    pass


class NoConvergence(CovtestError, ArithmeticError):
    pass


class NotPositiveDefinite(CovtestError, ValueError):
    """An eigenvalue fell at or below the positive-definiteness floor."""


class RankDeficient(CovtestError, ValueError):
    pass


class NonFinite(CovtestError, ValueError):
    pass


class GeometryMismatch(CovtestError, ValueError):
    pass


class NonPositiveOmega(CovtestError, ValueError):
    pass


class MalformedCoherence(CovtestError, ValueError):
    pass


class MalformedNormalizedCovariance(CovtestError, ValueError):
    pass


class PreconditionError(CovtestError, ValueError):
    """A detector or procedure was called outside its validity domain."""


class WrongGeometry(PreconditionError):
    pass


class InsufficientSamples(PreconditionError):
    pass


class InsufficientTrials(PreconditionError):
    pass


class UnsupportedDetector(PreconditionError):
    pass


class InvalidDof(CovtestError, ValueError):
    pass


class InvalidProbability(CovtestError, ValueError):
    pass


class DegenerateDraw(CovtestError, RuntimeError):
    pass


class RankDeficientBlock(CovtestError, ValueError):
    pass


class SimulationAborted(CovtestError, RuntimeError):
    """Too many Monte Carlo trials had to be redrawn."""

    def __init__(self, message, failures=()):
        super().__init__(message)
        self.failures = list(failures)


class MalformedInput(CovtestError, ValueError):
    """A data or configuration file could not be parsed."""
