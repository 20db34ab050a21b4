"""Exception types raised across the package."""


class NumericalIntegrityError(ArithmeticError):
    """A matrix factorization failed or a covariance lost positive semidefiniteness."""


class InvalidEnvironmentError(ValueError):
    """An environment description violates its schema or invariants.

    The offending key is kept on ``key`` so callers can report it.
    """

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class InsufficientInstancesError(ValueError):
    """Fewer than two instances carry a usable OLS estimate."""
