class ConfigError(ValueError):
    """Invalid layout, simulation or CLI configuration."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class ShapeError(ValueError):
    """Row widths or image dimensions do not line up."""


class InvariantViolation(RuntimeError):
    """A simulation invariant broke (single-port double booking, stale read, ...).

    Always indicates a scheduler bug rather than bad input.
    """


class TraceError(ValueError):
    """Malformed or inconsistent trace input."""

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno
