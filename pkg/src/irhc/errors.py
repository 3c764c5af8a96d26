"""Exception types shared across the package."""


class IRHCError(Exception):
    """Base class for all errors raised by :mod:`irhc`."""


class DimensionError(IRHCError, ValueError):
    """A state or input vector does not have the expected dimension."""


class NumericalDomainError(IRHCError, ArithmeticError):
    """A rollout produced, or was fed, a non-finite value.

    ``step`` is the index of the offending step when known.
    """

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class ConfigurationError(IRHCError, ValueError):
    """Rejected controller, plant or experiment configuration."""


class ControllerError(IRHCError):
    """The receding horizon loop could not produce an admissible input."""

    def __init__(self, message, step, last_state=None, result=None):
        super().__init__(f"{message} at step {step}")
        self.step = step
        self.last_state = last_state
        self.result = result


class CertificationError(IRHCError):
    """No cost constant up to the configured cap certifies the samples."""
