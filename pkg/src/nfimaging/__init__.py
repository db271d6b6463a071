"""Near-field wideband radio imaging: channel simulation, illumination design
and correlation-aware sparse Bayesian recovery."""

from .errors import (
    CalibrationError,
    ConfigurationError,
    DesignError,
    DimensionError,
    GeometryError,
    ImagingError,
    NumericalError,
    ParameterError,
)
from .forward import ObservationSet, SensingSet
from .geometry import ChannelTables, SceneGeometry, build_channel_tables, build_geometry
from .plan import IlluminationPlan
from .scene import GroundTruthScene

__version__ = "0.1.0"
