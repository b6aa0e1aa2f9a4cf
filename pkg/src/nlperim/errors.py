"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class PreconditionError(ValueError):
    """A documented precondition of an operation is violated."""


class UnsupportedKernelError(ValueError):
    """The kernel family cannot support the requested operation."""


class NumericError(ArithmeticError):
    """A numeric computation failed (non-convergence, NaN, overflow)."""
