"""Shared exception types."""


class ContractViolationError(ValueError):
    """An operation was called with arguments outside its contract."""


class BudgetExceededError(RuntimeError):
    """A computed mini-batch size exceeded the configured cap."""


class UnsupportedOperationError(RuntimeError):
    """The requested operation is not available for this problem instance."""
