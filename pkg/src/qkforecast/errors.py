"""Exception hierarchy shared by every qkforecast module.

Errors are grouped so the CLI can map them to exit codes: ``ConfigError``
subclasses are usage problems, everything else under ``QKForecastError`` is a
runtime or data problem.
"""


class QKForecastError(Exception):
    """Base class for all library errors."""


class ConfigError(QKForecastError):
    """Invalid run configuration."""


# -- core_timeseries -------------------------------------------------------

class IngestError(QKForecastError):
    pass


class MalformedRow(IngestError):
    pass


class NonMonotonicTime(IngestError):
    pass


class TargetOutOfRange(IngestError):
    pass


class MissingColumn(IngestError):
    pass


class IrregularCadence(QKForecastError):
    pass


class EmptyPartition(QKForecastError):
    pass


# -- baselines -------------------------------------------------------------

class InsufficientData(QKForecastError):
    pass


class InsufficientHistory(QKForecastError):
    pass


class SingularSystem(QKForecastError):
    pass


class DivergedLoss(QKForecastError):
    pass


# -- vqkernel --------------------------------------------------------------

class EmptyFeature(QKForecastError):
    pass


class NonPositiveGamma(QKForecastError):
    pass


class NotPositiveDefinite(QKForecastError):
    pass


class DimensionMismatch(QKForecastError):
    pass


# -- analysis --------------------------------------------------------------

class LengthMismatch(QKForecastError):
    pass


class EmptyInput(QKForecastError):
    pass


class NonSymmetric(QKForecastError):
    pass


class DegenerateVariance(QKForecastError):
    pass


class MissingClass(QKForecastError):
    pass


class DegenerateSigma(QKForecastError):
    pass


class InvalidR(QKForecastError):
    pass


# -- experiments / report --------------------------------------------------

class MissingWindChannel(QKForecastError):
    pass


class UnfilledSlot(QKForecastError):
    pass


class UnsupportedFormat(QKForecastError):
    pass


class EmptyData(QKForecastError):
    pass


class InvalidSplit(QKForecastError, ValueError):
    pass
