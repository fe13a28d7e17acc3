"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError (and its
subclasses) -> 2, NumericalError -> 3.
"""


class SlimnetError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(SlimnetError):
    """Operands have incompatible dimensions."""


class ParameterError(SlimnetError):
    """A numeric argument is outside its allowed range."""


class ConfigError(SlimnetError):
    """An experiment or network configuration is invalid."""


class DataError(SlimnetError):
    """A dataset is malformed or inconsistent with the configuration."""


class ParseError(DataError):
    """A delimited-text file could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)
        self.line = line


class FormatError(DataError):
    """A binary file does not follow its declared format."""


class NumericalError(SlimnetError):
    """A computation produced non-finite values."""


class DivergenceError(NumericalError):
    """Training produced a non-finite objective."""


class DegenerateBatchError(SlimnetError):
    """A batch is too small for batch normalization statistics."""


class DegenerateNetworkError(SlimnetError):
    """Pruning would leave the network without usable output units."""
