"""Exception hierarchy shared by all modules."""


class SDFEELError(Exception):
    """Base class for errors raised by this package."""


class InvalidArgumentError(SDFEELError, ValueError):
    pass


class InvalidTopologyError(InvalidArgumentError):
    """Server graph is malformed or disconnected."""


class InvalidStateError(SDFEELError, RuntimeError):
    pass


class ConfigError(SDFEELError, ValueError):
    pass


class InadmissibleLearningRateError(SDFEELError, ValueError):
    """Learning rate violates the step-size conditions of the bound.

    The offending learning rate is kept on ``value``.
    """

    def __init__(self, message, value):
        super().__init__(message)
        self.value = value
