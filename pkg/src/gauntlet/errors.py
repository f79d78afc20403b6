"""Exception types shared across the package."""


class GauntletError(Exception):
    """Base class for all package errors."""


class UnderflowError(GauntletError):
    """A deletion request asked for more copies than the dataset holds."""


class EmptyDatasetError(GauntletError):
    """An operation that needs at least one element got an empty dataset."""


class InvalidScaleError(GauntletError):
    """Noise scale must be strictly positive outside zero-noise test mode."""


class DomainOverflowError(GauntletError):
    """A value fell outside the discretized [0, 1] domain."""


class InvalidRangeError(GauntletError):
    """Range query with lower endpoint above the upper endpoint."""


class StarPresentError(GauntletError):
    """Counting queries are only defined on star-free datasets."""


class LengthMismatchError(GauntletError):
    """Answer vector length does not match the query family size."""


class TooLargeError(GauntletError):
    """Exhaustive search requested beyond its tractable domain size."""


class InvalidParamsError(GauntletError):
    """Parameter combination violates a mechanism's preconditions."""


class NoDeletionsError(GauntletError):
    """A differencing attack needs at least one deletion in the transcript."""


class NoIntegerSolutionError(GauntletError):
    """Cluster-size search found no integer-consistent candidate."""


class DegenerateCentersError(GauntletError):
    """Cluster centers coincide; the size-inference formula divides by zero."""


class DegenerateDataError(GauntletError):
    """All points identical; two-cluster structure is undefined."""


class DuplicateDeletionError(GauntletError):
    """A deletion sequence repeats a point beyond its multiplicity."""


class AttackerProtocolViolation(GauntletError):
    """A game player broke the corruption or deletion bookkeeping rules."""


class InvalidWorldPairError(GauntletError):
    """World pair for the blindness witness differs in controlled entries."""


class NotStatelessError(GauntletError):
    """Mechanism has no registered public update rule to replay from."""


class ConfigError(GauntletError):
    """Experiment configuration references unknown ids or invalid values."""


class ReportIOError(GauntletError):
    """Report files missing or unreadable."""


class TamperedReportError(GauntletError):
    """Stored aggregates or replay hash disagree with the row data."""
