"""Exception types shared across the package."""


class ParameterError(ValueError):
    """An argument value is outside the documented domain."""


class ContractError(ValueError):
    """Inputs violate an operation contract: shape or dtype mismatch,
    non-scalar objective, non-finite values."""


class SilentSignalError(ParameterError):
    """A pressure level was requested for an empty or all-zero signal."""


class TrainingDivergedError(RuntimeError):
    """The training loss became non-finite."""
