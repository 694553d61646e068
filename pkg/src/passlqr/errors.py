"""Exception types shared across the toolkit."""


class PassLqrError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatch(PassLqrError):
    """Matrix dimensions are inconsistent with each other."""


class NonSquare(DimensionMismatch):
    """A square matrix was required."""


class NotHurwitz(PassLqrError):
    """The closed-loop matrix has an eigenvalue with nonnegative real part."""

    def __init__(self, abscissa, msg=None):
        self.abscissa = abscissa
        super().__init__(msg or f"matrix is not Hurwitz (spectral abscissa {abscissa:.3e})")


class NotStabilizing(NotHurwitz):
    """A gain failed to stabilize the plant; the LQR cost is unbounded."""


class SingularSystem(PassLqrError):
    """A linear solve was numerically singular."""


class NotStabilizable(PassLqrError):
    """PBH rank test failed at an unstable eigenvalue."""


class NotDetectable(PassLqrError):
    """PBH rank test on the (A, sqrt(Q)) pair failed at an unstable eigenvalue."""


class NoConvergence(PassLqrError):
    """An iterative solver exhausted its budget without meeting its tolerance."""


class Infeasible(PassLqrError):
    """No certificate was found within the search budget.

    This is a one-sided answer: the search is heuristic and exhausting the
    budget does not prove infeasibility.  `best_lambda_max` records the
    smallest normalized constraint eigenvalue the optimizer achieved.
    """

    def __init__(self, best_lambda_max=float("inf"), msg=None):
        self.best_lambda_max = best_lambda_max
        super().__init__(msg or f"no certificate found (best normalized lambda_max {best_lambda_max:.3e})")


class EqualityInconsistent(PassLqrError):
    """The linear equality of the D = 0 passivity condition has no solution."""


class Rejected(PassLqrError):
    """A cube failed common certification.

    Wraps the underlying `Infeasible`; `vertex_reports` maps each vertex
    gain (as a tuple) to True/False from an individual certification attempt.
    """

    def __init__(self, center, best_lambda_max, vertex_reports=None):
        self.center = center
        self.best_lambda_max = best_lambda_max
        self.vertex_reports = vertex_reports or {}
        super().__init__(f"cube at {center} rejected (best normalized lambda_max {best_lambda_max:.3e})")


class TooManyVertices(PassLqrError):
    """Cube verification is limited to gain dimension m*n <= 8."""


class SeedNotPassivating(PassLqrError):
    """The exploration seed gain does not certify individually."""


class EmptyRegion(PassLqrError):
    """No verified cube exists (the seed cube itself was rejected)."""


class DegenerateF(PassLqrError):
    """The projection scaling matrix F lost positive definiteness (LICQ violation)."""


class StepCollapse(PassLqrError):
    """The flow integrator's step fell below min_step without progress."""


class InfeasibleStart(PassLqrError):
    """The flow must start strictly inside the polytope with a stabilizing gain."""


class DimensionUnsupported(PassLqrError):
    """Plotting is only available for two-parameter gains (m*n == 2)."""


class PlantFormatError(PassLqrError):
    """A plant/artifact file could not be parsed or failed validation."""

    def __init__(self, msg, line=None, field=None):
        self.line = line
        self.field = field
        where = ""
        if line is not None:
            where += f" (line {line})"
        if field is not None:
            where += f" (field {field!r})"
        super().__init__(msg + where)
