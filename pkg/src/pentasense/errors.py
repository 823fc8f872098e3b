class InvalidInputError(ValueError):
    """Raised when arguments violate a documented precondition."""


class AmbiguousSteadyStateError(ArithmeticError):
    """The rate generator has more than one stationary distribution."""


class NumericError(ArithmeticError):
    """A numerical routine produced a non-finite or otherwise unusable result."""


class ConfigError(ValueError):
    """Configuration file could not be parsed or failed schema validation."""

    def __init__(self, message: str, path: str | None = None):
        super().__init__(message)
        self.path = path
