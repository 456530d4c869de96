"""Exception types shared across the package."""


class ShapgraphError(Exception):
    """Base class for errors raised by this package."""


class BudgetExceededError(ShapgraphError):
    """An enumeration or evaluation budget was exhausted before completion."""

    def __init__(self, message: str, count: int | None = None):
        super().__init__(message)
        self.count = count


class ConfigurationError(ShapgraphError, ValueError):
    """Invalid or inconsistent configuration of an operation."""


class SingularSystemError(ShapgraphError):
    """A least-squares normal system is rank deficient and no ridge was allowed."""

    def __init__(self, message: str, null_space_dim: int):
        super().__init__(message)
        self.null_space_dim = null_space_dim


class UnsupportedTopologyError(ShapgraphError, ValueError):
    """An operation only defined for chain or grid graphs got another kind."""


class ZeroMassError(ShapgraphError):
    """A conditioning event has probability zero under the joint."""


class EvaluationError(ShapgraphError):
    """A model evaluation failed; carries the offending context."""

    def __init__(self, message: str, batch_indices: list[int] | None = None):
        super().__init__(message)
        self.batch_indices = batch_indices or []


class ProtocolError(ShapgraphError):
    """The external model wire protocol was violated."""
