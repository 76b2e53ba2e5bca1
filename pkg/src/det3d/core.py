"""Core data types shared by every other module.

Feature maps, keypoints, 2D/3D boxes, the pinhole camera model, and the
class taxonomy. All types are immutable after construction and every
operation on them is a pure function, so concurrent readers need no
coordination.
"""

import math
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Mapping, Optional

import numpy as np

__all__ = [
    "Det3DError",
    "BoundsError",
    "DomainError",
    "RangeError",
    "ShapeError",
    "ConfigurationError",
    "ParseError",
    "ValidationError",
    "GenerationError",
    "RenderError",
    "BehindCameraError",
    "DegenerateProjectionError",
    "MapRole",
    "KeypointKind",
    "SuperCategory",
    "FeatureMap",
    "Keypoint",
    "Box2D",
    "Box3D",
    "CameraIntrinsics",
    "ClassTaxonomy",
    "Detection",
    "MapBundle",
    "normalize_angle",
]


class Det3DError(Exception):
    """Base class for every error raised by this library."""


class BoundsError(Det3DError, IndexError):
    """An index fell outside the declared bounds of some axis."""


class DomainError(Det3DError, ValueError):
    """A value violated the domain contract of an operation or type."""


class RangeError(DomainError):
    """A computation left the representable/valid output range."""


class ShapeError(Det3DError, ValueError):
    """An array or sequence had the wrong shape or length."""


class ConfigurationError(Det3DError, ValueError):
    """Inputs are individually valid but mutually inconsistent."""


class ParseError(Det3DError, ValueError):
    """A serialized input (binary dump, label file, JSON) is malformed."""

    def __init__(self, message, *, offset=None, line=None, field_name=None):
        parts = [message]
        if offset is not None:
            parts.append(f"(at byte offset {offset})")
        if line is not None:
            parts.append(f"(line {line})")
        if field_name is not None:
            parts.append(f"(field '{field_name}')")
        super().__init__(" ".join(parts))
        self.offset = offset
        self.line = line
        self.field_name = field_name


class ValidationError(Det3DError, ValueError):
    """Cross-file or cross-input consistency check failed."""


class GenerationError(Det3DError, RuntimeError):
    """Synthetic scene generation could not satisfy its constraints."""


class RenderError(Det3DError, ValueError):
    """A ground-truth annotation cannot be rendered into the feature grid."""


class BehindCameraError(DomainError):
    """A projected point or box corner lies at nonpositive camera depth."""


class DegenerateProjectionError(DomainError):
    """The projective math degenerated (zero homogeneous scale or rank loss)."""


class MapRole(IntEnum):
    """Role tag stored in binary dumps; constrains the value range."""

    HEATMAP = 0
    EMBEDDING = 1
    OFFSET = 2
    GENERIC = 3


class KeypointKind(Enum):
    TOP_LEFT = "tl"
    BOTTOM_RIGHT = "br"
    CENTER = "center"


CORNER_KINDS = (KeypointKind.TOP_LEFT, KeypointKind.BOTTOM_RIGHT)
ALL_KINDS = (KeypointKind.TOP_LEFT, KeypointKind.BOTTOM_RIGHT, KeypointKind.CENTER)


class SuperCategory(str, Enum):
    AIR = "Air"
    GROUND = "Ground"


def normalize_angle(deg):
    """Wrap an angle in degrees to the half-open interval [-180, 180).

    The result is congruent to the input modulo 360. Idempotent.
    """
    deg = float(deg)
    if not math.isfinite(deg):
        raise DomainError(f"angle must be finite, got {deg!r}")
    return (deg + 180.0) % 360.0 - 180.0


def _check_score(score):
    score = float(score)
    if not math.isfinite(score) or score < 0.0 or score > 1.0:
        raise DomainError(f"score must lie in [0, 1], got {score!r}")
    return score


class FeatureMap:
    """Immutable dense (height, width, channels) grid of real values.

    Storage is row-major float32 in (row, col, channel) order, matching
    the binary dump layout exactly so serialized tensors are unambiguous.
    Heatmap-role maps must lie in [0, 1]; other roles only need finite
    values.
    """

    __slots__ = ("_data", "_role")

    def __init__(self, data, role=MapRole.GENERIC):
        arr = np.array(data, dtype=np.float32, copy=True, order="C")
        if arr.ndim != 3:
            raise ShapeError(f"feature map needs a (H, W, C) array, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ShapeError(f"feature map axes must all be >= 1, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DomainError("feature map values must be finite")
        role = MapRole(role)
        if role is MapRole.HEATMAP:
            lo = float(arr.min())
            hi = float(arr.max())
            if lo < 0.0 or hi > 1.0:
                raise DomainError(
                    f"heatmap values must lie in [0, 1], got range [{lo:g}, {hi:g}]"
                )
        arr.setflags(write=False)
        self._data = arr
        self._role = role

    @classmethod
    def from_flat(cls, values, height, width, channels, role=MapRole.GENERIC):
        """Build a map from a row-major flat value sequence."""
        arr = np.asarray(values, dtype=np.float32)
        if arr.ndim != 1 or arr.size != height * width * channels:
            raise ShapeError(
                f"expected {height * width * channels} flat values for a "
                f"{height}x{width}x{channels} map, got {arr.size}"
            )
        return cls(arr.reshape(height, width, channels), role=role)

    @property
    def data(self):
        """Read-only (H, W, C) float32 array."""
        return self._data

    @property
    def role(self):
        return self._role

    @property
    def height(self):
        return self._data.shape[0]

    @property
    def width(self):
        return self._data.shape[1]

    @property
    def channels(self):
        return self._data.shape[2]

    @property
    def shape(self):
        return self._data.shape

    def get(self, row, col, channel):
        """Return the stored value at (row, col, channel)."""
        for name, idx, size in (
            ("row", row, self.height),
            ("col", col, self.width),
            ("channel", channel, self.channels),
        ):
            if not 0 <= idx < size:
                raise BoundsError(f"{name} index {idx} out of range [0, {size})")
        return float(self._data[row, col, channel])

    def channel_plane(self, channel):
        """Read-only (H, W) view of a single channel."""
        if not 0 <= channel < self.channels:
            raise BoundsError(
                f"channel index {channel} out of range [0, {self.channels})"
            )
        return self._data[:, :, channel]

    def __eq__(self, other):
        if not isinstance(other, FeatureMap):
            return NotImplemented
        return (
            self._role is other._role
            and self.shape == other.shape
            and self._data.tobytes() == other._data.tobytes()
        )

    def __hash__(self):
        return hash((self._role, self.shape, self._data.tobytes()))

    def __repr__(self):
        return f"FeatureMap({self.height}x{self.width}x{self.channels}, role={self._role.name})"


@dataclass(frozen=True)
class Keypoint:
    """A scored grid peak: kind, class, integer grid position, and the
    associative-embedding tag used for corner grouping."""

    kind: KeypointKind
    class_id: int
    row: int
    col: int
    score: float
    tag: float = 0.0

    def __post_init__(self):
        if not isinstance(self.kind, KeypointKind):
            raise DomainError(f"kind must be a KeypointKind, got {self.kind!r}")
        if self.class_id < 0:
            raise DomainError(f"class_id must be >= 0, got {self.class_id}")
        if self.row < 0 or self.col < 0:
            raise BoundsError(f"keypoint position must be >= 0, got ({self.row}, {self.col})")
        _check_score(self.score)
        if not math.isfinite(self.tag):
            raise DomainError(f"tag must be finite, got {self.tag!r}")


@dataclass(frozen=True)
class Box2D:
    """Axis-aligned image box; zero-area boxes are permitted, negative
    extents are not. Out-of-range scores are rejected, not clamped."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float
    class_id: int = 0
    score: float = 1.0

    def __post_init__(self):
        for name in ("x_min", "y_min", "x_max", "y_max"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise DomainError(f"{name} must be finite, got {v!r}")
            object.__setattr__(self, name, v)
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise DomainError(
                f"box extents must be non-negative: "
                f"({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )
        object.__setattr__(self, "score", _check_score(self.score))

    @property
    def width(self):
        return self.x_max - self.x_min

    @property
    def height(self):
        return self.y_max - self.y_min

    @property
    def area(self):
        return self.width * self.height

    @property
    def center(self):
        return (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))


@dataclass(frozen=True)
class Box3D:
    """3D box in the camera frame: center (m), dims (w, h, l in m), and
    orientation (azimuth, elevation, roll in degrees).

    The object must sit in front of the camera (z > 0) and the angles are
    wrapped to [-180, 180) at construction.
    """

    center: tuple
    dims: tuple
    orientation: tuple
    class_id: int = 0
    score: float = 1.0

    def __post_init__(self):
        center = tuple(float(v) for v in self.center)
        dims = tuple(float(v) for v in self.dims)
        orientation = tuple(float(v) for v in self.orientation)
        if len(center) != 3 or len(dims) != 3 or len(orientation) != 3:
            raise ShapeError("center, dims and orientation must each have 3 components")
        if not all(math.isfinite(v) for v in center + dims + orientation):
            raise DomainError("box parameters must be finite")
        if center[2] <= 0.0:
            raise DomainError(f"box center must be in front of the camera, got z={center[2]}")
        if min(dims) <= 0.0:
            raise DomainError(f"box dims must be positive, got {dims}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "orientation", tuple(normalize_angle(a) for a in orientation))
        object.__setattr__(self, "score", _check_score(self.score))


class CameraIntrinsics:
    """3x4 projection matrix mapping camera-frame points to homogeneous
    pixel coordinates."""

    __slots__ = ("_p",)

    def __init__(self, p):
        arr = np.array(p, dtype=np.float64, copy=True)
        if arr.shape != (3, 4):
            raise ShapeError(f"projection matrix must be 3x4, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DomainError("projection matrix must be finite")
        if arr[0, 0] == 0.0 or arr[1, 1] == 0.0:
            raise DomainError("focal entries p[0,0] and p[1,1] must be nonzero")
        arr.setflags(write=False)
        self._p = arr

    @classmethod
    def simple(cls, focal, cx, cy, focal_y=None):
        """Pinhole matrix [[fx, 0, cx, 0], [0, fy, cy, 0], [0, 0, 1, 0]]."""
        fy = focal if focal_y is None else focal_y
        return cls([[focal, 0.0, cx, 0.0], [0.0, fy, cy, 0.0], [0.0, 0.0, 1.0, 0.0]])

    @property
    def p(self):
        return self._p

    @property
    def fx(self):
        return float(self._p[0, 0])

    @property
    def fy(self):
        return float(self._p[1, 1])

    @property
    def cx(self):
        return float(self._p[0, 2])

    @property
    def cy(self):
        return float(self._p[1, 2])

    def __eq__(self, other):
        if not isinstance(other, CameraIntrinsics):
            return NotImplemented
        return np.array_equal(self._p, other._p)

    def __hash__(self):
        return hash(self._p.tobytes())

    def __repr__(self):
        return f"CameraIntrinsics(fx={self.fx:g}, fy={self.fy:g}, cx={self.cx:g}, cy={self.cy:g})"


@dataclass(frozen=True)
class ClassTaxonomy:
    """Ordered class labels plus their Air/Ground super-category."""

    names: tuple
    grouping: Mapping[str, SuperCategory]

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        if len(set(names)) != len(names):
            raise DomainError(f"class names must be unique, got {names}")
        if len(names) == 0:
            raise DomainError("taxonomy needs at least one class")
        grouping = {str(k): SuperCategory(v) for k, v in dict(self.grouping).items()}
        if set(grouping) != set(names):
            raise DomainError(
                "every class needs exactly one super-category; "
                f"names={sorted(names)} grouped={sorted(grouping)}"
            )
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "grouping", grouping)

    @classmethod
    def default(cls):
        return cls(
            names=("air_vehicle", "ground_vehicle"),
            grouping={
                "air_vehicle": SuperCategory.AIR,
                "ground_vehicle": SuperCategory.GROUND,
            },
        )

    def __len__(self):
        return len(self.names)

    def index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise DomainError(f"unknown class {name!r}; known: {list(self.names)}") from None

    def supercategory(self, name):
        try:
            return self.grouping[name]
        except KeyError:
            raise DomainError(f"unknown class {name!r}; known: {list(self.names)}") from None


@dataclass(frozen=True)
class Detection:
    """A grouped keypoint triplet with its assembled, offset-refined box."""

    box: Box2D
    top_left: Keypoint
    bottom_right: Keypoint
    center: Keypoint
    tag: float

    @property
    def class_id(self):
        return self.box.class_id

    @property
    def score(self):
        return self.box.score


@dataclass(frozen=True)
class MapBundle:
    """The per-frame tensor set an ideal network would emit.

    Required: one heatmap per keypoint kind (C class channels each), one
    1-channel embedding per corner kind, and one 2-channel offset map per
    kind. Optionally carries per-center 3D head maps: log-depth
    (1 channel), box dims (3 channels), and multibin orientation
    (3 angles x N bins x (confidence, cos, sin) = 9N channels).
    """

    heatmaps: Mapping[KeypointKind, FeatureMap]
    embeddings: Mapping[KeypointKind, FeatureMap]
    offsets: Mapping[KeypointKind, FeatureMap]
    aux_depth: Optional[FeatureMap] = None
    aux_dims: Optional[FeatureMap] = None
    aux_orientation: Optional[FeatureMap] = None

    def __post_init__(self):
        heatmaps = dict(self.heatmaps)
        embeddings = dict(self.embeddings)
        offsets = dict(self.offsets)
        if set(heatmaps) != set(ALL_KINDS):
            raise ConfigurationError("bundle needs a heatmap for every keypoint kind")
        if set(embeddings) != set(CORNER_KINDS):
            raise ConfigurationError("bundle needs embeddings for exactly the corner kinds")
        if set(offsets) != set(ALL_KINDS):
            raise ConfigurationError("bundle needs offsets for every keypoint kind")

        base = heatmaps[KeypointKind.TOP_LEFT]
        hw = (base.height, base.width)
        channels = base.channels

        def check(fmap, label, want_channels, want_role):
            if (fmap.height, fmap.width) != hw:
                raise ConfigurationError(
                    f"{label} is {fmap.height}x{fmap.width}, expected {hw[0]}x{hw[1]}"
                )
            if want_channels is not None and fmap.channels != want_channels:
                raise ConfigurationError(
                    f"{label} has {fmap.channels} channels, expected {want_channels}"
                )
            if fmap.role is not want_role:
                raise ConfigurationError(
                    f"{label} has role {fmap.role.name}, expected {want_role.name}"
                )

        for kind in ALL_KINDS:
            check(heatmaps[kind], f"heatmap[{kind.value}]", channels, MapRole.HEATMAP)
            check(offsets[kind], f"offsets[{kind.value}]", 2, MapRole.OFFSET)
        for kind in CORNER_KINDS:
            check(embeddings[kind], f"embedding[{kind.value}]", 1, MapRole.EMBEDDING)

        if self.aux_depth is not None:
            check(self.aux_depth, "aux_depth", 1, MapRole.GENERIC)
        if self.aux_dims is not None:
            check(self.aux_dims, "aux_dims", 3, MapRole.GENERIC)
        if self.aux_orientation is not None:
            check(self.aux_orientation, "aux_orientation", None, MapRole.GENERIC)
            if self.aux_orientation.channels % 9 != 0 or self.aux_orientation.channels < 9:
                raise ConfigurationError(
                    "aux_orientation needs 9N channels (3 angles x N bins x 3 values), "
                    f"got {self.aux_orientation.channels}"
                )

        object.__setattr__(self, "heatmaps", heatmaps)
        object.__setattr__(self, "embeddings", embeddings)
        object.__setattr__(self, "offsets", offsets)

    @property
    def height(self):
        return self.heatmaps[KeypointKind.TOP_LEFT].height

    @property
    def width(self):
        return self.heatmaps[KeypointKind.TOP_LEFT].width

    @property
    def num_classes(self):
        return self.heatmaps[KeypointKind.TOP_LEFT].channels

    @property
    def has_aux(self):
        return (
            self.aux_depth is not None
            and self.aux_dims is not None
            and self.aux_orientation is not None
        )
