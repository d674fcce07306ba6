"""Exception taxonomy and process exit codes shared across the package."""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4
EXIT_NOT_CONVERGED = 5


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ContractError(ValueError):
    """Arguments are structurally inconsistent (shape or dimension mismatch)."""


class ConfigError(Exception):
    """A configuration document is invalid; the message names the field path."""


class DataError(Exception):
    """Input data violates a contract (non-positive, non-finite, malformed)."""


class NumericalError(Exception):
    """A numerical procedure failed (non-PD matrix, generation cutoff, ...)."""
