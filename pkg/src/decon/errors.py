"""Exception hierarchy.

Every error raised on purpose by the library derives from :class:`DeconError`
(and from ``ValueError``, so callers that only care about bad input can catch
that instead).
"""


class DeconError(ValueError):
    """Base class for library errors."""


class InputError(DeconError):
    """An argument is outside the operation's domain."""


class CycleError(DeconError):
    """The path-coefficient matrix does not describe a DAG."""


class RoleError(DeconError):
    """Role assignment is inconsistent or an edge joins an illegal role pair."""


class PsdError(DeconError):
    """A covariance matrix is not positive semidefinite within tolerance."""


class RankError(DeconError):
    """Least-squares design is numerically rank deficient."""


class SampleSizeError(DeconError):
    """Too few samples for the number of regressors."""


class MissingColumnError(DeconError):
    """A dataset lacks a column the operation needs."""


class ShapeError(DeconError):
    """Array or dataset dimensions disagree."""


class ParamSearchError(DeconError):
    """No valid simulation parameters found within the retry budget."""


class SchemaError(DeconError):
    """A file does not follow the expected format."""
