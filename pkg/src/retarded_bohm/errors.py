"""Exception hierarchy shared by all modules."""


class RBTError(Exception):
    """Base class for every error raised by :mod:`retarded_bohm`."""


class DomainError(RBTError, ValueError):
    """Input outside the domain of an operation (coincident particles, r <= alpha, ...)."""


class SingularityError(RBTError, ArithmeticError):
    """Evaluation too close to a node, the polar axis or another removable-looking pole.

    ``last_state`` is filled in by the integrators with the last accepted state.
    """

    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class OrderingError(RBTError, ValueError):
    """History samples appended out of time order."""


class ExtrapolationError(RBTError, ValueError):
    """Interpolation requested outside the recorded history span."""


class InsufficientHistoryError(RBTError):
    """A retarded time falls outside the recorded history."""


class SolverError(RBTError, RuntimeError):
    """An iterative solver did not converge; ``residual`` holds the last residual."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class StiffnessError(RBTError, RuntimeError):
    """Adaptive step size underflowed."""

    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class ConfigError(RBTError, ValueError):
    """Experiment configuration failed validation; ``violations`` lists every problem found."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.violations))
