"""Exception hierarchy shared by all modules."""


class JointOptError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgument(JointOptError, ValueError):
    pass


class PreconditionViolation(JointOptError):
    pass


class ConvergenceFailure(JointOptError):
    """An iterative projection did not converge within its sweep cap."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class UnboundedSet(JointOptError):
    pass


class UnsupportedFeature(JointOptError):
    pass


class InfeasibleInterior(JointOptError):
    pass


class EmptyIntersection(JointOptError):
    pass


class NotStronglyConvex(JointOptError):
    pass


class OracleFailure(JointOptError):
    pass


class ConfigError(JointOptError):
    """Schema or validation failure; ``key`` names the offending config entry."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class RunError(JointOptError):
    """Wraps a component failure with the iteration at which it happened.

    ``trace`` holds the records collected before the failure so callers can
    flush a partial trace.
    """

    def __init__(self, iteration, cause, trace=None):
        super().__init__(f"iteration {iteration}: {type(cause).__name__}: {cause}")
        self.iteration = iteration
        self.cause = cause
        self.trace = trace
