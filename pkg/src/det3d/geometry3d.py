"""Lifting validated 2D detections to full 3D boxes.

Covers log-depth decoding, the dims regression target, multibin
orientation decoding, pinhole projection/back-projection, 3D box corner
generation, and recovery of the 3D center constrained by the 2D box.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import (
    BehindCameraError,
    Box2D,
    Box3D,
    ConfigurationError,
    DegenerateProjectionError,
    DomainError,
    RangeError,
    ShapeError,
    normalize_angle,
)

__all__ = [
    "MultiBinOutput",
    "DepthOutput",
    "uniform_bin_centers",
    "encode_multibin",
    "decode_multibin",
    "decode_depth",
    "dims_mse",
    "rotation_matrix",
    "box3d_corners",
    "project_point",
    "back_project_point",
    "project_box3d",
    "fit_center_from_2d",
    "lift_detection",
]


@dataclass(frozen=True)
class MultiBinOutput:
    """Per-angle network head: N bins of (confidence, cos delta, sin delta)
    plus the fixed bin-center angles in degrees."""

    bins: tuple
    bin_centers: tuple

    def __post_init__(self):
        bins = tuple((float(c), float(cd), float(sd)) for c, cd, sd in self.bins)
        centers = tuple(float(a) for a in self.bin_centers)
        if len(bins) < 1 or len(bins) != len(centers):
            raise ShapeError(
                f"need N >= 1 bins with matching centers, got {len(bins)} and {len(centers)}"
            )
        for angle in centers:
            if not -180.0 <= angle < 180.0:
                raise DomainError(f"bin center {angle} outside [-180, 180)")
        if any(b >= a for a, b in zip(centers[1:], centers)):
            raise DomainError(f"bin centers must be strictly increasing, got {centers}")
        for _, cd, sd in bins:
            if not (math.isfinite(cd) and math.isfinite(sd)):
                raise DomainError("cos/sin residuals must be finite")
        object.__setattr__(self, "bins", bins)
        object.__setattr__(self, "bin_centers", centers)

    def __len__(self):
        return len(self.bins)


@dataclass(frozen=True)
class DepthOutput:
    """Raw network-space depth scalar attached to a center keypoint."""

    raw: float

    def __post_init__(self):
        if not math.isfinite(float(self.raw)):
            raise DomainError(f"raw depth must be finite, got {self.raw!r}")
        object.__setattr__(self, "raw", float(self.raw))


def uniform_bin_centers(n):
    """N evenly spaced bin centers: -180 + (i + 0.5) * 360 / N."""
    if n < 1:
        raise DomainError(f"need at least one bin, got {n}")
    step = 360.0 / n
    return tuple(-180.0 + (i + 0.5) * step for i in range(n))


def encode_multibin(angle_deg, bin_centers):
    """Encode an angle as an ideal multibin head output.

    The circularly nearest bin (ties: smallest index) gets confidence 1,
    the rest 0; every bin stores the cos/sin of its own residual.
    """
    centers = tuple(float(a) for a in bin_centers)
    best = min(
        range(len(centers)),
        key=lambda i: (abs(normalize_angle(angle_deg - centers[i])), i),
    )
    bins = []
    for i, center in enumerate(centers):
        delta = math.radians(angle_deg - center)
        bins.append((1.0 if i == best else 0.0, math.cos(delta), math.sin(delta)))
    return MultiBinOutput(bins=tuple(bins), bin_centers=centers)


def decode_multibin(out):
    """Recover the angle: argmax-confidence bin center plus its atan2 residual.

    Ties on confidence pick the smallest bin index. Invariant to any
    uniform positive scaling of the confidences.
    """
    conf = np.array([b[0] for b in out.bins], dtype=np.float64)
    finite = np.isfinite(conf)
    if not finite.any():
        raise DomainError("all bin confidences are non-finite")
    conf[~finite] = -np.inf
    i = int(np.argmax(conf))
    _, cos_delta, sin_delta = out.bins[i]
    delta = math.degrees(math.atan2(sin_delta, cos_delta))
    return normalize_angle(out.bin_centers[i] + delta)


def decode_depth(out):
    """Map the raw log-space regression value to metres: depth = exp(raw)."""
    raw = out.raw if isinstance(out, DepthOutput) else float(out)
    if not math.isfinite(raw):
        raise DomainError(f"raw depth must be finite, got {raw!r}")
    try:
        depth = math.exp(raw)
    except OverflowError:
        raise RangeError(f"depth overflows for raw value {raw}") from None
    if not math.isfinite(depth) or depth <= 0.0:
        raise RangeError(f"decoded depth {depth} is not a positive finite value")
    return depth


def dims_mse(pred, truth):
    """Squared (w, h, l) error; a batch averages the per-sample sums."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"pred shape {p.shape} != truth shape {t.shape}")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(t))):
        raise DomainError("dims must be finite")
    if p.ndim == 1:
        if p.shape != (3,):
            raise ShapeError(f"a single sample must have 3 dims, got shape {p.shape}")
        return float(((p - t) ** 2).sum())
    if p.ndim == 2 and p.shape[1] == 3:
        if p.shape[0] == 0:
            raise ShapeError("batch must hold at least one sample")
        return float(((p - t) ** 2).sum(axis=1).mean())
    raise ShapeError(f"expected shape (3,) or (n, 3), got {p.shape}")


def rotation_matrix(orientation_deg):
    """Camera-frame rotation Rz(roll) @ Rx(elevation) @ Ry(azimuth)."""
    azimuth, elevation, roll = (math.radians(a) for a in orientation_deg)

    ca, sa = math.cos(azimuth), math.sin(azimuth)
    ce, se = math.cos(elevation), math.sin(elevation)
    cr, sr = math.cos(roll), math.sin(roll)

    ry = np.array([[ca, 0.0, sa], [0.0, 1.0, 0.0], [-sa, 0.0, ca]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, ce, -se], [0.0, se, ce]])
    rz = np.array([[cr, -sr, 0.0], [sr, cr, 0.0], [0.0, 0.0, 1.0]])
    return rz @ rx @ ry


# Corner sign pattern: index bit 2 -> +w/2 when set, bit 1 -> +h/2,
# bit 0 -> +l/2. Corner 0 is (-w/2, -h/2, -l/2), corner 7 is (+,+,+).
_CORNER_SIGNS = np.array(
    [
        [1.0 if k & 4 else -1.0, 1.0 if k & 2 else -1.0, 1.0 if k & 1 else -1.0]
        for k in range(8)
    ]
)


def box3d_corners(box):
    """The 8 corners (metres, camera frame) of a 3D box, in the fixed
    bit-pattern order documented on `_CORNER_SIGNS`."""
    w, h, l = box.dims
    local = _CORNER_SIGNS * (0.5 * np.array([w, h, l]))
    rot = rotation_matrix(box.orientation)
    return local @ rot.T + np.asarray(box.center)


def project_point(camera, point):
    """Project a camera-frame point to pixels: (u, v) = dehomogenized K @ [x y z 1]."""
    x, y, z = (float(v) for v in point)
    if not all(math.isfinite(v) for v in (x, y, z)):
        raise DomainError(f"point must be finite, got {point!r}")
    if z <= 0.0:
        raise BehindCameraError(f"point has nonpositive depth z={z}")
    u, v, w = camera.p @ (x, y, z, 1.0)
    if w == 0.0:
        raise DegenerateProjectionError("homogeneous scale w' is zero")
    return (u / w, v / w)


def back_project_point(camera, pixel, depth):
    """Invert :func:`project_point` at a known depth.

    Solves the 2x2 linear system the projection induces in (x, y) once z
    is fixed, so it is exact for any 3x4 matrix, including calibrations
    with nonzero translation columns.
    """
    u, v = (float(c) for c in pixel)
    z = float(depth)
    if z <= 0.0:
        raise DomainError(f"depth must be positive, got {z}")
    p = camera.p
    a00 = p[0, 0] - u * p[2, 0]
    a01 = p[0, 1] - u * p[2, 1]
    a10 = p[1, 0] - v * p[2, 0]
    a11 = p[1, 1] - v * p[2, 1]
    b0 = u * (p[2, 2] * z + p[2, 3]) - (p[0, 2] * z + p[0, 3])
    b1 = v * (p[2, 2] * z + p[2, 3]) - (p[1, 2] * z + p[1, 3])
    det = a00 * a11 - a01 * a10
    if det == 0.0:
        raise DegenerateProjectionError("projection matrix is rank-deficient in (x, y)")
    x = (b0 * a11 - b1 * a01) / det
    y = (a00 * b1 - a10 * b0) / det
    return (x, y, z)


def project_box3d(camera, box):
    """Tight axis-aligned 2D hull of the 8 projected box corners."""
    corners = box3d_corners(box)
    if np.any(corners[:, 2] <= 0.0):
        raise BehindCameraError(
            f"box at {box.center} has corners behind the camera (min z = {corners[:, 2].min():g})"
        )
    hom = np.column_stack([corners, np.ones(8)]) @ camera.p.T
    w = hom[:, 2]
    if np.any(w == 0.0):
        raise DegenerateProjectionError("a corner projected to zero homogeneous scale")
    u = hom[:, 0] / w
    v = hom[:, 1] / w
    return Box2D(
        float(u.min()),
        float(v.min()),
        float(u.max()),
        float(v.max()),
        class_id=box.class_id,
        score=box.score,
    )


def fit_center_from_2d(camera, box2d, dims, orientation, depth):
    """Recover a 3D box whose projected hull is centered on a 2D box.

    Back-projects the 2D box center ray at the given depth, then applies
    one image-plane correction so the re-projected hull center lands on
    the 2D center. The residual after the single correction shrinks with
    (box extent / depth)^2; for vehicle-scale boxes at driving distances
    it stays well under a pixel.
    """
    z = float(depth)
    if z <= 0.0:
        raise DomainError(f"depth must be positive, got {z}")
    u_c, v_c = box2d.center
    center = back_project_point(camera, (u_c, v_c), z)
    box = Box3D(
        center=center,
        dims=dims,
        orientation=orientation,
        class_id=box2d.class_id,
        score=box2d.score,
    )
    u_h, v_h = project_box3d(camera, box).center
    dx = (u_c - u_h) * z / camera.fx
    dy = (v_c - v_h) * z / camera.fy
    corrected = (center[0] + dx, center[1] + dy, z)
    return replace(box, center=corrected)


def lift_detection(detection, bundle, camera, stride=1):
    """Lift a decoded 2D detection to 3D using the bundle's head maps.

    Reads the log-depth, dims, and multibin orientation channels at the
    detection's center cell, decodes them, and fits the 3D center under
    the 2D box constraint.
    """
    if not bundle.has_aux:
        raise ConfigurationError("bundle carries no 3D head maps")
    row, col = detection.center.row, detection.center.col
    depth = decode_depth(bundle.aux_depth.get(row, col, 0))
    dims = tuple(bundle.aux_dims.get(row, col, i) for i in range(3))

    n_bins = bundle.aux_orientation.channels // 9
    centers = uniform_bin_centers(n_bins)
    angles = []
    for angle_idx in range(3):
        base = angle_idx * 3 * n_bins
        bins = tuple(
            (
                bundle.aux_orientation.get(row, col, base + 3 * i),
                bundle.aux_orientation.get(row, col, base + 3 * i + 1),
                bundle.aux_orientation.get(row, col, base + 3 * i + 2),
            )
            for i in range(n_bins)
        )
        angles.append(decode_multibin(MultiBinOutput(bins=bins, bin_centers=centers)))

    return fit_center_from_2d(camera, detection.box, dims, tuple(angles), depth)
