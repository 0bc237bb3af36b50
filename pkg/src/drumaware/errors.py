"""Exception types shared across the package."""


class DrumAwareError(Exception):
    """Base class for all package errors."""


class InvalidInputError(DrumAwareError, ValueError):
    """Input data violates a precondition (empty audio, unsorted times, ...)."""


class ConfigError(DrumAwareError, ValueError):
    """Configuration or dimension mismatch."""


class DataError(DrumAwareError):
    """Corpus or file-level problem (missing stems, id mismatch, bad file)."""


class NumericError(DrumAwareError, FloatingPointError):
    """Non-finite values encountered during computation."""
