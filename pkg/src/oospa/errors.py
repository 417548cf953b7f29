"""Exception types shared across the package."""


class OospaError(Exception):
    """Base class for all package-specific errors."""


class InvalidInput(OospaError):
    """An argument violates the operation's preconditions."""


class InvalidGeometry(OospaError):
    """A molecular geometry is unusable (e.g. coincident atoms)."""


class BranchBoundary(OospaError):
    """A rotation angle sits too close to pi for a principal real logarithm."""


class NearLinearDependence(OospaError):
    """An overlap matrix is numerically singular (atoms too close)."""


class DegenerateEdge(OospaError):
    """An edge connects (near-)coincident atoms."""


class SamplingFailure(OospaError):
    """Geometry rejection sampling exhausted its attempt budget."""


class NumericalFailure(OospaError):
    """A non-finite value appeared where a finite one is required."""


class ConvergenceFailure(OospaError):
    """An iterative solve stopped short of its tolerance.

    Carries the best result found so far in ``result`` so callers can
    decide whether the partial answer is still usable.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
