"""Exception hierarchy shared by all lrperc modules.

The CLI maps :class:`ValidationError` to exit code 2 and
:class:`ConvergenceError` to exit code 3.
"""


class LrpercError(Exception):
    """Base class for all package errors."""


class ValidationError(LrpercError, ValueError):
    """A parameter or precondition was violated."""


class DomainError(ValidationError):
    """An argument lies outside the mathematical domain of the operation."""


class ConvergenceError(LrpercError, RuntimeError):
    """An iterative solver did not reach its tolerance within budget."""

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class RenormGraphError(LrpercError):
    """A sampled hierarchy is missing an edge the renormalized graph needs."""

    def __init__(self, message, level=None, pair=None):
        super().__init__(message)
        self.level = level
        self.pair = pair


class OracleInapplicable(LrpercError):
    """The series-parallel oracle cannot reduce the given network."""
