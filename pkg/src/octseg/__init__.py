"""Retinal layer segmentation for volumetric OCT scans."""

__version__ = "0.1.0"

from .detectors import (
    BoundaryPath,
    CostMap,
    IlmConfig,
    RpeConfig,
    build_cost_map,
    detect_ilm,
    detect_rpe,
    dp_shortest_path,
    ilm_threshold,
    trace_boundary,
)
from .errors import DegeneracyError, DegeneracyWarning, ParseError
from .phantom import (
    GroundTruth,
    PhantomSpec,
    SurfaceMetrics,
    generate_phantom,
    surface_error,
)
from .volume import (
    Band,
    NeighborhoodFeatures,
    Surface,
    Volume,
    extract_band,
    max_intensity_depth,
    neighborhood_features,
)

__all__ = [
    "__version__",
    "Band",
    "BoundaryPath",
    "CostMap",
    "DegeneracyError",
    "DegeneracyWarning",
    "GroundTruth",
    "IlmConfig",
    "NeighborhoodFeatures",
    "ParseError",
    "PhantomSpec",
    "RpeConfig",
    "Surface",
    "SurfaceMetrics",
    "Volume",
    "build_cost_map",
    "detect_ilm",
    "detect_rpe",
    "dp_shortest_path",
    "extract_band",
    "generate_phantom",
    "ilm_threshold",
    "max_intensity_depth",
    "neighborhood_features",
    "surface_error",
    "trace_boundary",
]
