"""Exception types shared across the lab."""


class ConfigurationError(ValueError):
    """Invalid parameters or configuration (CLI exit code 2)."""


class DomainError(ValueError):
    """Input outside the domain where an operation is defined (CLI exit code 2)."""


class PreconditionError(DomainError):
    """A documented precondition of an operation does not hold."""


class ConsistencyError(RuntimeError):
    """Internal consistency check failed; indicates a discretization bug."""


class BlowupOverflow(ArithmeticError):
    """Reaction flow left the floating range within one step.

    ``state`` is the last valid state (unmodified by the failed step).
    """

    def __init__(self, state, message="e^u overflow inside step"):
        super().__init__(message)
        self.state = state
