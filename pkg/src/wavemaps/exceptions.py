"""Exception types raised across the package."""


class WaveMapsError(Exception):
    """Base class for all package errors."""


class ParameterError(WaveMapsError, ValueError):
    """An argument is outside the admissible range."""


class NumericError(WaveMapsError, FloatingPointError):
    """A computation produced a non-finite value.

    ``index`` holds the offending grid node when known.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class SnapshotFormatError(WaveMapsError, ValueError):
    """A snapshot file does not follow the CSV snapshot format."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class ConfigError(WaveMapsError, ValueError):
    """A run configuration is malformed or references unknown keys."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class InsufficientDataError(WaveMapsError, ValueError):
    """Too few samples to compute a diagnostic."""
