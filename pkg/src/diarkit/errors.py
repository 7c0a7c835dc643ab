"""Exception types shared across the toolkit."""


class DiarkitError(Exception):
    """Base class for all diarkit errors."""


class FormatError(DiarkitError):
    """Raised when a file cannot be parsed or violates its format contract."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class MetricsError(DiarkitError):
    """Raised when a metric is undefined for the given inputs."""


class VbxError(DiarkitError):
    """Raised when VBx inference fails numerically."""


class PipelineError(DiarkitError):
    """Raised for invalid pipeline configurations."""
