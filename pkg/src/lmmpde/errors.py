"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid model, product, plan or experiment configuration."""


class IncompletePlanError(ConfigurationError):
    """An expansion combination was requested with term values missing."""


class NumericalError(RuntimeError):
    """A numerical routine failed (non-convergence, bad pivot, blow-up)."""
