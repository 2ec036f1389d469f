"""Exception hierarchy shared by every module."""


class PpiMpcError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(PpiMpcError, ValueError):
    pass


class InvalidModelError(InvalidArgumentError):
    pass


class EmptySetError(PpiMpcError):
    pass


class UnboundedSupportError(PpiMpcError):
    pass


class TighteningInfeasibleError(PpiMpcError):
    """A Pontryagin difference removed the origin from the interior.

    ``row`` is the index of the first constraint whose tightened offset
    dropped to zero or below.
    """

    def __init__(self, message, row, offsets=None, constraint=None):
        super().__init__(message)
        self.row = int(row)
        self.offsets = offsets
        self.constraint = constraint


class SynthesisError(PpiMpcError):
    def __init__(self, message, max_violation=None):
        super().__init__(message)
        self.max_violation = max_violation


class NonTerminationError(PpiMpcError):
    pass


class NumericFailureError(PpiMpcError):
    pass


class SolverError(PpiMpcError):
    """The solver stopped without a verdict (iteration limit, breakdown)."""

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class ControllerFailureError(PpiMpcError):
    def __init__(self, message, z=None, step=None):
        super().__init__(message)
        self.z = z
        self.step = step
