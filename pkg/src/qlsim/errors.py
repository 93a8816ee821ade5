"""Exception hierarchy shared by every module."""


class QlsimError(Exception):
    """Base class for all library errors."""


class ParameterError(QlsimError, ValueError):
    """An argument is outside its documented range."""


class ShapeError(QlsimError, ValueError):
    """Array dimensions are incompatible."""


class ContractError(QlsimError):
    """An input violates a structural contract (Hermiticity, unitarity, ...)."""


class DomainError(QlsimError, ValueError):
    """The mathematical operation is undefined for the input (e.g. singular matrix)."""


class NormalizationError(QlsimError, ValueError):
    """A normalization factor is smaller than the norm it must dominate."""


class ApproximationError(QlsimError):
    """A polynomial approximation failed its band check."""

    def __init__(self, message, achieved_error=None):
        super().__init__(message)
        self.achieved_error = achieved_error


class OvershootError(QlsimError):
    """Amplitude amplification would rotate past the target subspace."""

    def __init__(self, stage, steps, amplitude):
        super().__init__(
            f"overshoot at stage {stage}: (2r+1)a = {steps * amplitude:.6g} > 1"
        )
        self.stage = stage
        self.steps = steps
        self.amplitude = amplitude


class ResourceError(QlsimError):
    """A simulation would exceed the configured dimension cap."""


class ScheduleViolation(QlsimError):
    """A run departed from the schedule it was proven to follow."""


class DegenerateInstanceError(QlsimError, ValueError):
    """The instance has zero success amplitude and cannot be amplified."""


class PreconditionFailure(QlsimError):
    """A promised precondition on the input (estimate window, spectral gap) does not hold."""


class InvalidPreconditionerError(ParameterError):
    """The scaling parameter of a preconditioner falls outside (0, 1)."""
