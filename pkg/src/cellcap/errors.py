"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration value violates an invariant (CLI exit code 2)."""


class RequestError(ValueError):
    """A well-formed call asked for something the inputs cannot provide."""


class ToleranceError(ArithmeticError):
    """A numerical routine could not reach its requested tolerance."""
