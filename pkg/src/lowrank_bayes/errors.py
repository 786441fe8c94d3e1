"""Exception types raised by the library and surfaced by the CLI."""


class CompletionError(ValueError):
    """Base class for all structured errors of this package."""


class DimensionError(CompletionError):
    """Array shapes disagree with the declared matrix dimensions."""


class EmptyObservationsError(CompletionError):
    """An operation needs at least one observation."""


class ConfigError(CompletionError):
    """A configuration value is missing or outside its valid range."""


class BoxError(CompletionError):
    """A truncation box is malformed or a state lies outside it."""


class PrecisionError(CompletionError):
    """A precision matrix is not positive definite where it must be."""


class ParseError(CompletionError):
    """A CSV or config file could not be parsed.

    ``line`` is the 1-based line number of the offending record, if known.
    """

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)
