"""Exception types raised across the package."""


class HierselError(Exception):
    """Base class for package errors."""


class DomainError(HierselError, ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class SingularDesign(HierselError):
    """The weighted Gram matrix of a design is numerically singular."""


class NotConverged(HierselError):
    """IRLS stopped without meeting the convergence tolerance.

    The partially converged fit is attached as ``result``.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class DegenerateWeights(HierselError):
    """All IRLS weights vanished at the fitted model."""


class InvalidMove(HierselError, ValueError):
    """A search move cannot be applied to the given model."""


class ConfigError(HierselError, ValueError):
    """Invalid user configuration or missing input column."""


class ParseError(HierselError, ValueError):
    """A data file could not be parsed."""
