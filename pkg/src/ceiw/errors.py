"""Exception types shared across the workbench."""


class CeiwError(Exception):
    """Base class for all workbench errors."""


class DomainError(CeiwError):
    """An input lies outside the admissible domain of an operation."""


class ConstructionError(CeiwError):
    """A constructive procedure produced an object violating its invariants."""


class InvariantError(CeiwError):
    """A verified-by-construction identity failed beyond tolerance."""


class SearchExhausted(CeiwError):
    """A randomized/deterministic search ran out of attempts.

    Carries ``best_margin`` when a partial result exists.
    """

    def __init__(self, msg, best_margin=None):
        super().__init__(msg)
        self.best_margin = best_margin


class WindowError(CeiwError):
    """A time-domain request leaves the sampled window of a field."""


class SingularJacobian(CeiwError):
    """A flow Jacobian determinant dropped below the admissible floor."""


class MeanError(CeiwError):
    """An inverse-divergence argument has a spatial mean beyond tolerance."""


class ParameterError(CeiwError):
    """No admissible parameter exists in the required window."""


class PositivityError(CeiwError):
    """A quantity required to be positive dipped to zero or below."""


class CompatibilityError(CeiwError):
    """A compatibility condition between fields fails."""


class ShapeError(CeiwError):
    """Grid/window metadata of two objects do not match."""


class ConfigError(CeiwError):
    """A run configuration failed validation."""


class IoError(CeiwError):
    """An artifact on disk is missing, malformed, or corrupted."""
