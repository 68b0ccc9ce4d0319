"""Exception hierarchy shared by every module of the package."""


class GPAmisError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(GPAmisError, ValueError):
    pass


class NotSymmetric(GPAmisError, ValueError):
    pass


class NotPositiveDefinite(GPAmisError, ValueError):
    pass


class NoConvergence(GPAmisError, RuntimeError):
    pass


class OscillationDetected(NoConvergence):
    pass


class NonFiniteObjective(GPAmisError, FloatingPointError):
    pass


class NotNegativeDefinite(GPAmisError, ValueError):
    pass


class AllWeightsDegenerate(GPAmisError, FloatingPointError):
    pass


class ZeroTotalWeight(GPAmisError, ZeroDivisionError):
    pass


class TuningFailed(GPAmisError, RuntimeError):
    def __init__(self, message, alpha=None, cost=0):
        super().__init__(message)
        self.alpha = alpha
        self.cost = cost


class ShrinkageExhausted(GPAmisError, RuntimeError):
    pass


class MalformedRow(GPAmisError, ValueError):
    def __init__(self, path, line_number, message):
        super().__init__(f"{path}:{line_number}: {message}")
        self.path = path
        self.line_number = line_number


class EmptyDataset(GPAmisError, ValueError):
    pass


class GridBeforeFirstObservation(GPAmisError, ValueError):
    pass


class ConfigError(GPAmisError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "configuration error"
