"""Exception types raised across the package."""


class RainbowError(Exception):
    """Base class for all library errors."""


class FlowError(RainbowError, ValueError):
    """A flow violates its invariants (too short, decreasing timestamps, ...)."""


class FlowFormatError(FlowError):
    """A flow or record file could not be parsed."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"line {line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class LengthMismatchError(RainbowError, ValueError):
    pass


class DegenerateInputError(RainbowError, ValueError):
    """Zero-variance or otherwise degenerate detector input."""


class CalibrationError(RainbowError, ValueError):
    """Too few null scores to resolve the requested false-positive rate."""


class ConfigError(RainbowError, ValueError):
    pass
