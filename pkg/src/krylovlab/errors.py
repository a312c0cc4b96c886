"""Exception hierarchy shared by all krylovlab modules."""


class KrylovError(Exception):
    """Base class for every error raised by krylovlab."""


class InvalidInputError(KrylovError, ValueError):
    """Input violates a documented precondition."""


class DimensionMismatchError(InvalidInputError):
    pass


class NotPositiveDefiniteError(KrylovError, ValueError):
    """LDL^T elimination hit a pivot that is not safely positive."""

    def __init__(self, pivot_index: int, pivot: float):
        self.pivot_index = pivot_index
        self.pivot = pivot
        super().__init__(f"matrix is not positive definite: pivot {pivot_index} is {pivot!r}")


class DegenerateDirectionError(InvalidInputError):
    pass


class IncompleteBasisError(InvalidInputError):
    pass


class BreakdownError(KrylovError, ArithmeticError):
    """An iteration met a zero denominator it should never reach."""


class CurvatureError(BreakdownError):
    pass


class PreconditionError(InvalidInputError):
    pass
