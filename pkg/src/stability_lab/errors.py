"""Exception types shared across the package."""


class StabilityLabError(Exception):
    """Base class for all package errors."""


class CapExceededError(StabilityLabError):
    """A brute-force or enumeration budget was exceeded.

    ``best_lower_bound`` carries the largest value certified before the
    budget ran out (``None`` when nothing was certified).
    """

    def __init__(self, message, best_lower_bound=None):
        super().__init__(message)
        self.best_lower_bound = best_lower_bound


class DomainMismatchError(StabilityLabError):
    """A labeled example refers to a point outside the relevant domain."""


class RealizabilityViolationError(StabilityLabError):
    """A sample contradicts the realizability assumption of a learner."""


class EmpiricalLearnerViolationError(StabilityLabError):
    """No hypothesis met the empirical-loss guarantee that was promised."""


class WitnessValidationError(StabilityLabError):
    """A witness construction received structurally invalid inputs."""


class BoundaryPreconditionError(StabilityLabError):
    """The tested learner violates the empirical boundary conditions
    required before the hard-distribution search may start."""
