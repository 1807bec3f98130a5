"""Exception hierarchy shared by all modules."""


class WindEmosError(Exception):
    """Base class for every error raised by this package."""


class DomainError(WindEmosError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class DegenerateDistributionError(DomainError):
    """Parameters describe a law with no usable mass (e.g. all GEV mass below zero)."""


class NumericalError(WindEmosError, ArithmeticError):
    """A computation produced a non-finite or non-convergent result."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class FitError(NumericalError):
    """EMOS coefficient estimation failed."""


class DataError(WindEmosError, ValueError):
    """Input data failed parsing or validation."""

    def __init__(self, message, lines=()):
        super().__init__(message)
        self.lines = list(lines)


class ConfigError(WindEmosError, ValueError):
    """Invalid user configuration."""
