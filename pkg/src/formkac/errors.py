"""Exception types shared across the package."""


class DomainError(ValueError):
    """A point lies outside the chart domain of a model."""


class PreconditionError(ValueError):
    """An operation was called on inputs that violate its stated hypothesis."""


class StepFailure(RuntimeError):
    """A development step left the chart and could not be recovered."""


class ConfigError(ValueError):
    """Invalid experiment configuration.

    ``line`` is the 1-based line in the config file the problem is anchored to,
    when one can be determined.
    """

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line

    def __str__(self):
        msg = super().__str__()
        if self.line is not None:
            return f"line {self.line}: {msg}"
        return msg
