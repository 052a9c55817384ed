"""
Exception hierarchy shared by every toolkit app
"""


class MoeToolkitError(Exception):
    """Base class for toolkit errors"""


class ConstraintViolation(MoeToolkitError, ValueError):
    """Input violates a probability, feasibility or index constraint"""

    def __init__(self, message, worst=None):
        super().__init__(message)
        self.worst = worst


class NumericalFailure(MoeToolkitError):
    """A residual or feasibility check failed after computation"""


class ConvergenceError(NumericalFailure):
    """An iterative routine stopped before reaching its tolerance"""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class CapacityExceeded(MoeToolkitError):
    """An exact enumeration would exceed the configured size cap"""
