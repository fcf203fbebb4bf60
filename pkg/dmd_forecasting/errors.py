"""Exception hierarchy shared by the library, the evaluation code and the CLI."""


class HdmdError(Exception):
    """Base class for every error raised by this project."""


class ValidationError(HdmdError, ValueError):
    """Input violates a documented precondition."""


class ParseError(ValidationError):
    """Malformed input file. `line` is the 1-based line number in the file."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ShapeError(ValidationError):
    """Data matrices cannot be built with the requested dimensions."""


class WindowError(ValidationError):
    """A training or test window does not fit inside the series."""


class ZeroVarianceError(ValidationError):
    """A channel has zero standard deviation where a non-zero one is required."""

    def __init__(self, channel, context="channel"):
        super().__init__(f"{context} '{channel}' has zero standard deviation")
        self.channel = channel


class DegenerateDataError(HdmdError):
    """Snapshot data carry no usable information (all singular values below the floor)."""


class NumericError(HdmdError):
    """A linear-algebra kernel failed to converge."""


class EnsembleError(HdmdError):
    """Too many stochastic realizations failed."""
