"""Exception hierarchy shared by every module."""


class UlightError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(UlightError, ValueError):
    """Input shapes disagree with a model's dimension or parameter layout."""


class NonFiniteError(UlightError, ValueError):
    """A NaN or infinite value appeared where a finite one is required."""


class ObjectiveError(UlightError, ArithmeticError):
    """The training objective could not be evaluated.

    Attributes:
        index: offending sample index inside the batch, if known.
        side: ``"x"`` or ``"y"``, the batch the sample belongs to.
        step: training step at which the failure happened, if known.
    """

    def __init__(self, message, index=None, side=None, step=None):
        super().__init__(message)
        self.index = index
        self.side = side
        self.step = step

    def __str__(self):
        msg = super().__str__()
        if self.step is not None:
            msg = f"step {self.step}: {msg}"
        return msg


class ConvergenceError(UlightError, RuntimeError):
    """An iterative oracle hit its iteration cap before reaching tolerance."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


class CoverageError(UlightError, ValueError):
    """A quadrature grid does not cover the effective support of a density."""
