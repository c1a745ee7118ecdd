"""Exception types shared across the package."""


class FcalError(Exception):
    """Base class for package errors."""


class DomainError(FcalError, ValueError):
    """A numeric argument lies outside the domain of an operation."""


class ContractError(FcalError, ValueError):
    """Caller violated a structural precondition (shapes, sizes, counts)."""


class ConfigError(FcalError, ValueError):
    """Invalid configuration value."""


class TrainingError(FcalError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, batch_index: int | None = None):
        super().__init__(message)
        self.batch_index = batch_index


class DataFormatError(FcalError, OSError):
    """Malformed, truncated or version-mismatched file."""
