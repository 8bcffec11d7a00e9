"""Exception hierarchy shared across the package.

Three families: data/ingestion problems, numerical failures, and sampling
degeneracies. The CLI maps DataError to exit code 1 and NumericalError to
exit code 2.
"""


class MomentCoxError(Exception):
    """Base class for all package errors."""


class DataError(MomentCoxError):
    """Problems with input data or index bookkeeping."""


class MissingColumn(DataError):
    """A schema-mapped column is absent from the CSV header."""


class EmptyDataset(DataError):
    """No usable rows remain after parsing and drops."""


class NegativeTime(DataError):
    """An observed time is negative."""


class InvalidStatus(DataError):
    """A parsed status value is numeric but not 0 or 1."""


class IndexOutOfRange(DataError):
    """A subsample index does not address the parent dataset."""


class NumericalError(MomentCoxError):
    """Numerical failures during estimation."""


class NonFiniteValue(NumericalError):
    """A non-finite value appeared where a finite one is required."""


class EmptyRiskSet(NumericalError):
    """No subject is at risk at the requested time."""


class SingularInformation(NumericalError):
    """The information matrix is numerically singular (pivot below
    1e-12 times its largest diagonal entry)."""


class NotConverged(NumericalError):
    """An iterative fit hit its iteration limit.

    Carries the partial result when one exists, so callers can still
    report it.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class DegenerateVariance(NumericalError):
    """A variance matrix failed the positive-semidefinite check."""


class SamplingError(MomentCoxError):
    """Subsample-related degeneracies."""


class EmptySubsample(SamplingError):
    """A Poisson draw selected zero records; redraw with a new seed."""


class TooFewEvents(SamplingError):
    """Fewer events than the procedure needs; enlarge the (sub)sample."""
