"""Exception types raised by the solver."""


class NumericalFailure(RuntimeError):
    """A hook or integrator produced a non-finite value or an unusable step.

    ``index`` names the offending vector component (or grid node) when known,
    ``iteration`` the inner/outer iteration in which the failure surfaced.
    """

    def __init__(self, message, index=None, iteration=None):
        super().__init__(message)
        self.index = index
        self.iteration = iteration


class InsufficientData(RuntimeError):
    """The estimator was asked for an estimate before its buffer filled."""


class ConfigError(ValueError):
    """An option key or value is invalid."""
