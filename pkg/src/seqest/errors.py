"""Exception types shared across the package."""


class SeqestError(Exception):
    """Base class for package errors."""


class DomainError(SeqestError, ValueError):
    """An argument fell outside the mathematical domain of an operation."""


class UnsupportedOperationError(SeqestError):
    """The model family does not support the requested operation."""


class ScheduleValidationError(SeqestError, ValueError):
    """A confidence-sequence or stage schedule violates a required condition."""


class NonConvergenceError(SeqestError, RuntimeError):
    """An iterative numeric routine failed to converge within its budget."""


class OverflowCapError(SeqestError, OverflowError):
    """A requested sample size exceeded the configured cap."""


class HorizonError(SeqestError, LookupError):
    """A sought index was not found within the configured horizon."""


class ConfigError(SeqestError, ValueError):
    """A configuration file or override could not be interpreted."""
