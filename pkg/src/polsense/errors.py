"""Exception types raised across the package."""


class PolsenseError(Exception):
    """Base class for all package errors."""


class GridError(PolsenseError, ValueError):
    """Frequency grids are invalid, aliased, or do not match."""


class UnderdeterminedError(PolsenseError, ValueError):
    """Too few frequency samples to resolve the requested number of taps."""


class DegenerateSectionError(PolsenseError, ArithmeticError):
    """An end tap vanished so a section cannot be extracted."""

    def __init__(self, message, section=None):
        super().__init__(message)
        self.section = section


class DivergenceError(PolsenseError, ArithmeticError):
    """The optimizer produced a non-finite loss or gradient."""

    def __init__(self, message, iteration=None, step=None):
        super().__init__(message)
        self.iteration = iteration
        self.step = step


class ConfigError(PolsenseError, ValueError):
    """A configuration value or document is invalid."""
