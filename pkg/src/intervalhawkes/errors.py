"""Exception types shared across the package.

Two families: :class:`InvalidInput` covers bad user-supplied data or
parameters (the CLI maps these to exit code 2), :class:`ComputationError`
covers failures arising during numerical work (exit code 3).
"""


class InvalidInput(ValueError):
    """A supplied model, parameter set, or data file violates an invariant."""


class ComputationError(RuntimeError):
    """A numerical procedure failed at runtime."""


class NonPositiveParameter(InvalidInput):
    """A parameter is negative where nonnegativity is required, or zero where strict positivity is."""


class TieViolation(InvalidInput):
    """Parameters inside a declared equality group are not all equal."""


class UnstableBranching(InvalidInput):
    """The branching matrix has spectral radius >= 1 where stability is required."""


class NonConstantBaseline(InvalidInput):
    """An operation that assumes constant baselines was given a spline baseline."""


class NegativeElapsedTime(InvalidInput):
    """Elapsed time passed to an excitation mass must be nonnegative."""


class ReversedInterval(InvalidInput):
    """Interval endpoints are out of order."""


class NonExponentialKernel(InvalidInput):
    """The excitation-state recursion is only defined for exponential kernels."""


class TimeReversal(InvalidInput):
    """An excitation state was asked to move backwards in time."""


class GridHorizonMismatch(InvalidInput):
    """An aggregation grid does not span the path's observation window."""


class DegenerateData(InvalidInput):
    """Observed counts carry no events for some type, so heuristics cannot start."""


class ChainTooShort(InvalidInput):
    """Too few post-burn-in iterations to summarize."""


class GapInDates(InvalidInput):
    """Daily count files must have consecutive calendar dates."""


class NonContiguousBoundaries(InvalidInput):
    """Interval boundaries in a counts file must be contiguous."""


class NegativeCount(InvalidInput):
    """Counts must be nonnegative integers."""


class RaggedRow(InvalidInput):
    """A CSV row has the wrong number of fields."""


class UnstableExplosion(ComputationError):
    """A simulated path exceeded the event cap."""


class AllParticlesDead(ComputationError):
    """Every particle carries zero weight, so resampling is impossible."""


class NonFiniteLogLik(ComputationError):
    """The complete-data log-likelihood is -inf (an event with zero intensity)."""


class OptimizerDiverged(ComputationError):
    """The likelihood optimizer failed to return a finite optimum."""


class SingularHessian(ComputationError):
    """The observed-information matrix could not be inverted."""
