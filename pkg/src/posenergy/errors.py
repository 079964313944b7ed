"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class EnergyModelError(Exception):
    """Base class for every error raised by posenergy."""


# model
class DomainError(EnergyModelError, ValueError):
    """A quantity or throughput lies outside the admissible domain."""


class ModelDegenerateError(EnergyModelError):
    """The affine validator model predicts fewer than one validator."""


class BandOrderError(EnergyModelError, ValueError):
    """Hardware band is not ordered by ascending power draw."""


class BoundsError(EnergyModelError, ValueError):
    """Projection bounds are empty or inverted."""


class UnitError(EnergyModelError, ValueError):
    """Unsupported unit label."""


# calibration
class DegenerateSeriesError(EnergyModelError):
    """Series lacks the variance needed for a fit or a correlation."""


class LengthMismatchError(EnergyModelError, ValueError):
    pass


class InsufficientOverlapError(EnergyModelError):
    """Fewer than two pairs remain after lag alignment."""


class CoincidentAbscissaError(DegenerateSeriesError):
    """Two-point fit through points sharing the same throughput."""


# catalog
class DatasetError(EnergyModelError):
    """Base for dataset loading failures; carries optional violations."""

    def __init__(self, message: str, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class ParseError(DatasetError):
    pass


class SchemaError(DatasetError):
    pass


class DanglingReferenceError(DatasetError):
    """A record refers to an id that does not exist in the dataset."""


class InvariantError(DatasetError):
    pass


# connectors
class TransportError(EnergyModelError):
    pass


class ExtractionError(EnergyModelError):
    """Extraction rule matched nothing in the response body."""


class ExtractionValueError(ExtractionError, ValueError):
    """Extraction matched, but the captured text is not a usable number."""


class ManualSourceError(EnergyModelError):
    """Source is marked manual and cannot be fetched automatically."""


class UnknownNetworkError(EnergyModelError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""
