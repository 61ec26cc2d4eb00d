"""Exception taxonomy shared across the package.

Validation failures raise ValueError subclasses so callers can catch broad or
narrow; numerical failures raise RuntimeError subclasses carrying diagnostics.
"""


class ParameterError(ValueError):
    """A caller-supplied parameter violates a documented precondition."""


class RangeError(ValueError):
    """A query falls outside the domain an object was built for."""


class ConfigError(ValueError):
    """An experiment configuration document is malformed or inconsistent."""


class NumericalError(RuntimeError):
    """A numerical routine failed to meet its accuracy or stability contract."""


class DivergenceError(NumericalError):
    """State or loss became non-finite.

    Carries the integration time (or iteration index) at which the blow-up
    was detected.
    """

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class StepBudgetError(NumericalError):
    """A solver exceeded its step budget before reaching the end time."""


class CapabilityError(RuntimeError):
    """An operation outside the recordable primitive set was requested."""

    def __init__(self, op_name, detail=""):
        msg = f"operation '{op_name}' is not recordable"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.op_name = op_name
