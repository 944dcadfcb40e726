"""Exception hierarchy shared by every stage.

The CLI maps any :class:`PipelineError` to a nonzero exit status.
"""


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(PipelineError, ValueError):
    """Inputs violate an operation's precondition."""


class GeometryError(PipelineError, ValueError):
    """A geometric quantity is outside its valid domain (e.g. depth <= 0)."""


class NumericError(PipelineError, ArithmeticError):
    """A numerical guard tripped inside the filter."""


class FormatError(PipelineError, ValueError):
    """An input record or file cannot be parsed."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


class ConfigError(PipelineError, ValueError):
    """The pipeline configuration is missing a field or holds a bad value."""
