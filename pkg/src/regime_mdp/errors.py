"""Exception hierarchy shared by the numerical modules and the CLI."""


class RegimeMDPError(Exception):
    """Base class for all library errors."""


class NumericalError(RegimeMDPError):
    """A computation failed for numerical reasons (CLI exit code 3)."""


class NotIrreducible(NumericalError):
    """The fast chain generator is reducible at the given slow state."""

    def __init__(self, message, x=None):
        super().__init__(message)
        self.x = x


class IllConditioned(NumericalError):
    """A linear solve left a residual above tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class Infeasible(NumericalError):
    """A deviation target lies outside the range of the effective covariance."""


class ZetaViolated(NumericalError):
    """A sampled jump rate exceeded the declared dominating intensity."""

    def __init__(self, message, x=None, i=None, j=None, path=None):
        super().__init__(message)
        self.x = x
        self.i = i
        self.j = j
        self.path = path


class GeneratorError(RegimeMDPError, ValueError):
    """A generator matrix violates the row-sum or sign structure."""


class ModelError(RegimeMDPError, ValueError):
    """Unknown zoo model or parameter outside its documented range."""


class ConfigError(RegimeMDPError):
    """Invalid experiment configuration (CLI exit code 2)."""
