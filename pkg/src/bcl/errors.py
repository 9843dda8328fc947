"""Exception types shared across the package."""


class BclError(Exception):
    """Base class for all package errors."""


class ShapeError(BclError, ValueError):
    """Array dimensions do not match what an operation expects."""


class ConfigError(BclError, ValueError):
    """Invalid configuration value. ``path`` names the offending field when known."""

    def __init__(self, message, path=None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class ProtocolError(BclError, RuntimeError):
    """An object was used out of order (e.g. stepping a finished episode)."""


class NumericError(BclError, FloatingPointError):
    """A loss or gradient became non-finite."""


class IntegrityError(BclError, IOError):
    """A checkpoint failed its checksum or structural checks."""


class TrainingAborted(BclError, RuntimeError):
    """Every run of a curriculum phase failed, including the retry round."""
