"""Exception hierarchy.

``ConfigInvalid`` maps to CLI exit code 2; every other ``ArrivalError`` is a
numerical failure and maps to exit code 3.
"""


class ArrivalError(Exception):
    """Base class for all package errors."""


class ConfigInvalid(ArrivalError, ValueError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class DirectionalityViolation(ArrivalError, ValueError):
    pass


class LowMomentumViolation(ArrivalError, ValueError):
    pass


class EmptyGrid(ArrivalError, ValueError):
    pass


class OutOfSupport(ArrivalError, ValueError):
    pass


class QuadratureUnresolved(ArrivalError):
    pass


class WindowTooNarrow(ArrivalError):
    pass


class EmptyDistribution(ArrivalError):
    pass


class EvanescentOverflow(ArrivalError, FloatingPointError):
    pass


class NonFiniteSupport(ArrivalError, ValueError):
    pass


class GridMismatch(ArrivalError, ValueError):
    pass


class NotAsymptotic(ArrivalError, ValueError):
    def __init__(self, message, minimum_x=None):
        self.minimum_x = minimum_x
        super().__init__(message)


class AliasingRisk(ArrivalError):
    pass


class StabilityViolation(ArrivalError):
    pass


class ZeroThroughput(ArrivalError):
    pass


class UnitarityViolation(ArrivalError):
    pass
