"""Exception hierarchy shared by the numerical routines."""


class CoalDualError(Exception):
    """Base class for all library errors."""


class DomainError(CoalDualError, ValueError):
    """An argument lies outside the domain of the requested quantity."""


class PoleError(DomainError):
    """A hypergeometric denominator parameter hits a pole before termination."""


class ConvergenceError(CoalDualError, ArithmeticError):
    """An iterative solver did not converge."""


class TruncationError(CoalDualError, ArithmeticError):
    """A series did not meet its tail criterion within the allowed number of terms."""


class PrecisionLoss(CoalDualError, ArithmeticError):
    """Cancellation in an alternating series exceeded the precision budget."""


class CombinatorialLimit(CoalDualError, OverflowError):
    """An enumeration would exceed the configured size cap."""


class NonTerminatingSeries(CoalDualError, ArithmeticError):
    """A non-terminating hypergeometric series failed to converge."""


class StepSizeError(CoalDualError, ValueError):
    """A simulation time step is too coarse for the configured model."""


class BranchError(CoalDualError, ValueError):
    """A square root would be taken of a negative quantity."""


class DivergentLambda(CoalDualError, OverflowError):
    """The total jump intensity of a discretized Levy measure is not finite."""
