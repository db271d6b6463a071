"""Exception hierarchy shared by all modules."""


class ImagingError(Exception):
    """Base class for all package errors."""


class ConfigurationError(ImagingError, ValueError):
    """Invalid or inconsistent configuration values."""


class GeometryError(ImagingError, ValueError):
    """Degenerate geometry, e.g. a cell coinciding with an antenna."""


class ParameterError(ImagingError, ValueError):
    """Out-of-range numeric parameter."""


class DimensionError(ImagingError, ValueError):
    """Array shapes that do not line up."""


class CalibrationError(ImagingError, RuntimeError):
    """Noise calibration impossible (e.g. zero reference signal)."""


class NumericalError(ImagingError, RuntimeError):
    """Loss of definiteness, non-finite values or similar breakdowns."""


class DesignError(ImagingError, RuntimeError):
    """Beamformer design failure (singular system, infeasible SDP)."""
