"""Exception types raised across the package."""


class ConfigurationError(ValueError):
    """Inconsistent model dimensions or invalid filter/scenario settings."""


class NumericalError(ArithmeticError):
    """A matrix that must be invertible (e.g. an innovation covariance) is not."""


class InfeasibleAssignmentError(ValueError):
    """An assignment problem has no feasible solution.

    ``row`` holds the index of the first row with no admissible column when it
    can be identified, otherwise ``None``.
    """

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row


class ContractViolation(ValueError):
    """A documented precondition on the inputs does not hold."""
