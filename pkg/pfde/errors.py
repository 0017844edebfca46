class PFDEError(Exception):
    """Base class for every error raised by the pfde package."""

    code = "PFDE_ERROR"


class ConfigError(PFDEError):
    code = "CONFIG_ERROR"


class CatalogError(PFDEError):
    """Unknown catalog id or malformed coefficient table."""

    code = "CATALOG_ERROR"


class ShapeMismatchError(PFDEError):
    code = "SHAPE_MISMATCH"


class NumericalBlowupError(PFDEError):
    """A value left the configured bound (finite-time blowup or instability)."""

    code = "NUMERICAL_BLOWUP"

    def __init__(self, message: str, last_time: float):
        super().__init__(message)
        self.last_time = last_time


class TimeNotAvailableError(PFDEError):
    code = "TIME_NOT_AVAILABLE"


class TrajectoryWindowError(PFDEError):
    code = "TRAJECTORY_WINDOW"


class NoConvergenceError(PFDEError):
    code = "NO_CONVERGENCE"


class MissingSpectrumError(PFDEError):
    code = "MISSING_SPECTRUM"


class FailedWitnessError(PFDEError):
    code = "FAILED_WITNESS"


class ZeroSectionError(PFDEError):
    """Zero-section sampling requested for a reaction with f(w, x, 0, 0) != 0."""

    code = "ZERO_SECTION"
