"""Exception types shared across the package.

The CLI maps these onto exit codes: data problems exit 2, training
divergence exits 3, anything argument-shaped exits 1.
"""


class DataError(ValueError):
    """Input data cannot be used (unknown country, missing column, ...)."""


class InsufficientDataError(DataError):
    """A frame or partition is too short for the requested operation."""


class DomainError(ValueError):
    """Values outside an operation's mathematical domain (e.g. non-positive
    data under multiplicative seasonality)."""


class ContractError(ValueError):
    """Caller violated an interface contract (shape/schema mismatch,
    unfitted model, ...)."""


class TrainingDivergenceError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, loss: float):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"non-finite training loss {loss!r} at epoch {epoch}")


class DataQualityWarning(UserWarning):
    """Non-fatal irregularity found while ingesting source data."""
