"""Exception hierarchy for the fogd package."""


class FogdError(Exception):
    """Base class for all errors raised by this package."""


class InputValidationError(FogdError, ValueError):
    """Invalid user-supplied input (node ids, partitions, dimensions, ...)."""


class AssemblyError(FogdError):
    """Dimension or structure mismatch while assembling a matrix or system."""


class SolverError(FogdError):
    """Linear solver failure (singular or near-singular factorization)."""

    def __init__(self, message, min_pivot=None, inertia=None):
        super().__init__(message)
        self.min_pivot = min_pivot
        self.inertia = inertia


class EvaluationError(FogdError):
    """Model callback returned a non-finite value."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class ModificationError(FogdError):
    """Adaptive Hessian modification exceeded the shift cap."""


class DegenerateSubdomainError(FogdError):
    """Subdomain too thin for its constraints; increase the overlap size b."""


class SubproblemRegularityError(SolverError):
    """Subproblem KKT factorization failed; regularity preconditions violated."""


class CompositionError(FogdError):
    """Missing or inconsistent subdomain solution pieces."""


class NonDescentError(FogdError):
    """Directional derivative of the merit function is nonnegative."""

    def __init__(self, message, directional_derivative=None):
        super().__init__(message)
        self.directional_derivative = directional_derivative


class LineSearchError(FogdError):
    """Armijo backtracking exhausted the backtrack budget."""


class InsufficientDataError(FogdError):
    """Not enough usable trace points for a rate estimate."""
