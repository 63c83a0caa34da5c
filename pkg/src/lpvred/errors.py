"""Exception hierarchy shared by all reduction routines.

The CLI maps these onto exit codes: :class:`DimensionError` exits with 2,
:class:`NotApplicableError` with 3 and every other :class:`ReductionError` with 4.
"""


class ReductionError(Exception):
    """Base class for numerical failures inside the toolkit."""

    kind = "numerical"


class DimensionError(ReductionError, ValueError):
    """Inconsistent shapes or an invalid request (wrong p length, bad order)."""

    kind = "input"


class StabilityError(ReductionError):
    """A matrix required to be Hurwitz is not."""

    kind = "stability"


class AlgebraicLoopError(ReductionError):
    """``I - D_dd Delta(p)`` is singular, the LFR loop cannot be closed."""

    kind = "algebraic-loop"


class GramianInfeasibleError(ReductionError):
    """Static gramian LMIs have no strictly feasible point."""

    kind = "gramian-infeasible"

    def __init__(self, message, p=None):
        super().__init__(message)
        self.p = p


class NotApplicableError(ReductionError):
    """The method's structural preconditions fail on this model."""

    kind = "not-applicable"


class InsufficientDataError(ReductionError):
    kind = "insufficient-data"


class ResourceError(ReductionError):
    """Problem too large for the dense algorithm (memory guard)."""

    kind = "resource"


class TrainingDivergedError(ReductionError):
    kind = "training-diverged"


class UndefinedMetricError(ReductionError):
    kind = "undefined-metric"
