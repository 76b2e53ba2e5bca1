"""det3d: keypoint-detection decoding, 3D box geometry, evaluation
metrics, and a synthetic-scene oracle that makes the whole pipeline
verifiable without a trained network."""

from .core import (
    ALL_KINDS,
    CORNER_KINDS,
    BehindCameraError,
    BoundsError,
    Box2D,
    Box3D,
    CameraIntrinsics,
    ClassTaxonomy,
    ConfigurationError,
    DegenerateProjectionError,
    Det3DError,
    Detection,
    DomainError,
    FeatureMap,
    GenerationError,
    Keypoint,
    KeypointKind,
    MapBundle,
    MapRole,
    ParseError,
    RangeError,
    RenderError,
    ShapeError,
    SuperCategory,
    ValidationError,
    normalize_angle,
)

__version__ = "0.1.0"

__all__ = [
    "ALL_KINDS",
    "CORNER_KINDS",
    "BehindCameraError",
    "BoundsError",
    "Box2D",
    "Box3D",
    "CameraIntrinsics",
    "ClassTaxonomy",
    "ConfigurationError",
    "DegenerateProjectionError",
    "Det3DError",
    "Detection",
    "DomainError",
    "FeatureMap",
    "GenerationError",
    "Keypoint",
    "KeypointKind",
    "MapBundle",
    "MapRole",
    "ParseError",
    "RangeError",
    "RenderError",
    "ShapeError",
    "SuperCategory",
    "ValidationError",
    "normalize_angle",
    "__version__",
]
