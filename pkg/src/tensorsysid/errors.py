"""Exception hierarchy shared by all modules."""


class TensorSysIdError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(TensorSysIdError, ValueError):
    """Array shapes do not agree with what an operation requires."""


class ModelEvaluationError(TensorSysIdError):
    """A model callback failed or returned a badly shaped value."""


class FiniteDifferenceError(TensorSysIdError):
    """A finite-difference stencil produced a non-finite value.

    Attributes
    ----------
    coordinate : tuple[str, int]
        Which coordinate was being perturbed, e.g. ``("x", 1)`` or ``("p", 0)``.
    """

    def __init__(self, message, coordinate=None):
        super().__init__(message)
        self.coordinate = coordinate


class IntegrationError(TensorSysIdError, ArithmeticError):
    """The augmented state became non-finite during integration.

    Attributes
    ----------
    time : float
        Start time of the substep that failed.
    interval : int
        Index ``h`` of the sample interval ``[t_h, t_{h+1}]``.
    substep : int
        Substep index inside that interval.
    """

    def __init__(self, message, time=None, interval=None, substep=None):
        super().__init__(message)
        self.time = time
        self.interval = interval
        self.substep = substep


class DataError(TensorSysIdError, ValueError):
    """Dataset file or dataset contents are invalid."""


class ConfigError(TensorSysIdError, ValueError):
    """Run configuration failed validation."""
