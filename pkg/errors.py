"""
Exception hierarchy shared by every package.

The CLI maps TrackerError subclasses to exit code 2 and prints a one-line
JSON error; anything else exits 1.
"""


class TrackerError(Exception):
    """Base class for errors raised by this project."""


class ShapeError(TrackerError, ValueError):
    """Array shapes or lengths do not agree."""


class NonFiniteError(TrackerError, FloatingPointError):
    """A NaN or Inf appeared in a tensor, gradient, loss or plant state."""


class ConfigError(TrackerError, ValueError):
    """Configuration file or value is invalid."""


class PlantError(TrackerError):
    """Simulator was driven outside its valid domain."""


class TrajectoryFormatError(TrackerError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InsufficientDataError(TrackerError):
    """Replay buffer cannot serve the requested batch."""


class TuningError(TrackerError):
    """Ziegler-Nichols tuning did not find an ultimate gain."""


class CheckpointError(TrackerError):
    """Checkpoint file is missing, truncated or inconsistent."""
