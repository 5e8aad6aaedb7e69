"""Exception types raised across the package."""


class FQLError(Exception):
    """Base class for all package errors."""


class ConfigurationError(FQLError, ValueError):
    """Shapes, specs or hyperparameters are inconsistent."""


class TrainingError(FQLError, RuntimeError):
    """A numerical problem (non-finite loss, gradient or Q-value) during training."""


class DegenerateInputError(FQLError, ValueError):
    """An aggregate was requested over an empty collection."""


class InputError(FQLError, ValueError):
    """An environment received an invalid action or action set."""


class QueryError(FQLError, LookupError):
    """An environment query referred to an agent that cannot answer it."""
