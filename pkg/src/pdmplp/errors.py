"""Exception types shared across the package."""


class PdmplpError(Exception):
    """Base class for all package errors."""


class QuadratureFailure(PdmplpError):
    """An adaptive integral did not reach the requested tolerance."""


class UnboundedHorizon(PdmplpError):
    """A never-terminating flow has no positive lower rate bound, so no
    truncation horizon with a controlled tail exists."""


class GridTooCoarse(PdmplpError):
    """A generated state grid cannot represent a required post-jump point."""


class NumericalBreakdown(PdmplpError):
    """Simplex pivot magnitude fell below 1e-12 even under Bland's rule;
    the problem should be rescaled."""


class InfeasibleProblem(PdmplpError):
    """The LP has no feasible point (no strategy meets the limits)."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class UnboundedProblem(PdmplpError):
    """The LP is unbounded; carries the simplex ray certificate."""

    def __init__(self, message, solution=None, ray=None):
        super().__init__(message)
        self.solution = solution
        self.ray = ray


class SeriesDivergence(PdmplpError):
    """The policy kernel has spectral radius ≥ 1 − 1e-9, so the geometric
    series of stage weights does not converge."""
