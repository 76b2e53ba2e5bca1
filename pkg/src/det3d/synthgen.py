"""Synthetic-scene oracle.

Samples ground-truth 3D scenes over the Camera/Light/Weather/Sensor
parameter grids and synthesizes the ideal tensor bundle a perfect network
would emit for them, so decoding, 3D lifting, and evaluation can be
verified end to end without any trained model.

Light, weather, and sensor settings never alter geometry here (nothing is
rendered to pixels); they ride along as annotation metadata. Objects are
synthesized directly in the camera frame, with the camera orbit
(distance, elevation, azimuth) kept as pose metadata.
"""

import math
import os
from dataclasses import dataclass
from enum import Enum
from typing import Mapping

import numpy as np

from .core import (
    ALL_KINDS,
    CORNER_KINDS,
    Box2D,
    Box3D,
    CameraIntrinsics,
    ClassTaxonomy,
    DomainError,
    FeatureMap,
    GenerationError,
    KeypointKind,
    MapBundle,
    MapRole,
    RenderError,
    SuperCategory,
)
from .geometry3d import encode_multibin, project_box3d, uniform_bin_centers
from .metrics import iou

__all__ = [
    "Category",
    "SceneKind",
    "SweepSpec",
    "SweepPoint",
    "SceneSample",
    "camera_distance_grid",
    "CAMERA_ELEVATIONS",
    "CAMERA_AZIMUTHS",
    "LIGHT_INTENSITIES",
    "LIGHT_ELEVATIONS",
    "LIGHT_AZIMUTHS",
    "WEATHER_CONFIGS",
    "SENSOR_STYLES",
    "DIMENSION_PRIORS",
    "enumerate_sweep",
    "generate_scene",
    "render_ideal_maps",
    "corrupt_maps",
    "scene_to_dict",
    "scene_from_dict",
    "truth_dict",
    "write_dataset",
]


class Category(str, Enum):
    CAMERA = "camera"
    LIGHT = "light"
    WEATHER = "weather"
    SENSOR = "sensor"


class SceneKind(str, Enum):
    CITY = "city"
    DESERT = "desert"
    FOREST = "forest"
    GRASS = "grass"


def _steps(lo, hi, n):
    if n < 2:
        return (float(lo),)
    return tuple(lo + i * (hi - lo) / (n - 1) for i in range(n))


# Parameter grids. Camera distances depend on the super-category; all
# step counts and ranges are fixed.
_AIR_DISTANCES = _steps(70.0, 350.0, 4)
_GROUND_DISTANCES = _steps(15.0, 75.0, 4)
CAMERA_ELEVATIONS = _steps(5.0, 85.0, 4)
CAMERA_AZIMUTHS = _steps(0.0, 240.0, 3)
LIGHT_INTENSITIES = _steps(10.0, 100.0, 3)
LIGHT_ELEVATIONS = _steps(5.0, 90.0, 3)
LIGHT_AZIMUTHS = _steps(0.0, 180.0, 3)
# (rain, wind): dry, rainy calm, rainy with 10 units of wind.
WEATHER_CONFIGS = ((False, 0.0), (True, 0.0), (True, 10.0))
SENSOR_STYLES = ("night", "thermal")

# Class-typical (w, h, l) priors in metres, used only for scene synthesis.
DIMENSION_PRIORS = {
    SuperCategory.AIR: (3.0, 1.0, 3.0),
    SuperCategory.GROUND: (1.8, 1.6, 4.2),
}

_CATEGORY_SALT = {
    Category.CAMERA: 101,
    Category.LIGHT: 102,
    Category.WEATHER: 103,
    Category.SENSOR: 104,
}

DEFAULT_IMAGE_SIZE = (320, 240)  # (width, height) pixels
DEFAULT_FOCAL = 260.0


def camera_distance_grid(super_category):
    return _AIR_DISTANCES if super_category is SuperCategory.AIR else _GROUND_DISTANCES


@dataclass(frozen=True)
class SweepSpec:
    """Which parameter grid to walk, and the seed for the non-varied axes."""

    category: Category
    super_category: SuperCategory
    scene: SceneKind = SceneKind.CITY
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "category", Category(self.category))
        object.__setattr__(self, "super_category", SuperCategory(self.super_category))
        object.__setattr__(self, "scene", SceneKind(self.scene))


@dataclass(frozen=True)
class SweepPoint:
    """One fully resolved parameter assignment on a sweep grid."""

    index: int
    category: Category
    super_category: SuperCategory
    scene: SceneKind
    camera_distance: float
    camera_elevation: float
    camera_azimuth: float
    light_intensity: float
    light_elevation: float
    light_azimuth: float
    rain: bool
    wind: float
    sensor_style: str

    def to_dict(self):
        return {
            "index": self.index,
            "category": self.category.value,
            "super_category": self.super_category.value,
            "scene": self.scene.value,
            "camera_distance": self.camera_distance,
            "camera_elevation": self.camera_elevation,
            "camera_azimuth": self.camera_azimuth,
            "light_intensity": self.light_intensity,
            "light_elevation": self.light_elevation,
            "light_azimuth": self.light_azimuth,
            "rain": self.rain,
            "wind": self.wind,
            "sensor_style": self.sensor_style,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            index=int(data["index"]),
            category=Category(data["category"]),
            super_category=SuperCategory(data["super_category"]),
            scene=SceneKind(data["scene"]),
            camera_distance=float(data["camera_distance"]),
            camera_elevation=float(data["camera_elevation"]),
            camera_azimuth=float(data["camera_azimuth"]),
            light_intensity=float(data["light_intensity"]),
            light_elevation=float(data["light_elevation"]),
            light_azimuth=float(data["light_azimuth"]),
            rain=bool(data["rain"]),
            wind=float(data["wind"]),
            sensor_style=str(data["sensor_style"]),
        )


def _pick(rng, values):
    return values[int(rng.integers(len(values)))]


def enumerate_sweep(spec):
    """Full Cartesian grid over the category's varied parameters.

    The non-varied parameters of each point are drawn uniformly from
    their own declared grids with a generator seeded per point, so the
    enumeration is a pure function of the spec.
    """
    distances = camera_distance_grid(spec.super_category)
    if spec.category is Category.CAMERA:
        varied = [
            {"camera_distance": d, "camera_elevation": e, "camera_azimuth": a}
            for d in distances
            for e in CAMERA_ELEVATIONS
            for a in CAMERA_AZIMUTHS
        ]
    elif spec.category is Category.LIGHT:
        varied = [
            {"light_intensity": i, "light_elevation": e, "light_azimuth": a}
            for i in LIGHT_INTENSITIES
            for e in LIGHT_ELEVATIONS
            for a in LIGHT_AZIMUTHS
        ]
    elif spec.category is Category.WEATHER:
        varied = [{"rain": rain, "wind": wind} for rain, wind in WEATHER_CONFIGS]
    else:
        varied = [{"sensor_style": style} for style in SENSOR_STYLES]

    points = []
    salt = _CATEGORY_SALT[spec.category]
    for index, overrides in enumerate(varied):
        rng = np.random.default_rng([spec.seed, salt, index])
        rain, wind = _pick(rng, WEATHER_CONFIGS)
        params = {
            "camera_distance": _pick(rng, distances),
            "camera_elevation": _pick(rng, CAMERA_ELEVATIONS),
            "camera_azimuth": _pick(rng, CAMERA_AZIMUTHS),
            "light_intensity": _pick(rng, LIGHT_INTENSITIES),
            "light_elevation": _pick(rng, LIGHT_ELEVATIONS),
            "light_azimuth": _pick(rng, LIGHT_AZIMUTHS),
            "rain": rain,
            "wind": wind,
            "sensor_style": _pick(rng, SENSOR_STYLES),
        }
        params.update(overrides)
        points.append(
            SweepPoint(
                index=index,
                category=spec.category,
                super_category=spec.super_category,
                scene=spec.scene,
                **params,
            )
        )
    return points


@dataclass(frozen=True)
class SceneSample:
    """One synthesized frame: camera, ground-truth 3D boxes, their 2D
    projections, and the sweep metadata that produced them."""

    sample_id: str
    point: SweepPoint
    camera: CameraIntrinsics
    image_size: tuple  # (width, height)
    taxonomy: ClassTaxonomy
    labels: tuple
    objects: tuple  # Box3D per object
    boxes2d: tuple  # projected Box2D per object
    metadata: Mapping[str, object]


def _class_for(super_category, taxonomy):
    for name in taxonomy.names:
        if taxonomy.supercategory(name) is super_category:
            return name
    raise DomainError(f"taxonomy has no class in super-category {super_category.value}")


def generate_scene(
    point,
    rng_seed,
    n_objects=1,
    image_size=DEFAULT_IMAGE_SIZE,
    focal=DEFAULT_FOCAL,
    taxonomy=None,
    max_attempts=200,
    variant=0,
    sample_id=None,
):
    """Place `n_objects` boxes at the sweep's camera distance (within 10%).

    Placement rejects layouts whose projected hulls leave the image or
    overlap pairwise at IoU >= 0.1; dimensions jitter around the class
    prior. Deterministic given (point, rng_seed, variant); `variant`
    selects independent object layouts for the same sweep point.
    """
    if n_objects < 1:
        raise DomainError(f"n_objects must be >= 1, got {n_objects}")
    taxonomy = taxonomy or ClassTaxonomy.default()
    width, height = image_size
    camera = CameraIntrinsics.simple(focal, width / 2.0, height / 2.0)
    rng = np.random.default_rng([int(rng_seed), point.index, int(variant)])
    label = _class_for(point.super_category, taxonomy)
    class_id = taxonomy.index(label)
    prior = np.asarray(DIMENSION_PRIORS[point.super_category])

    margin = 2.0  # pixels kept clear of the image border
    objects = []
    boxes2d = []
    for _ in range(n_objects):
        placed = False
        for _ in range(max_attempts):
            z = point.camera_distance * float(rng.uniform(0.9, 1.1))
            dims = prior * rng.uniform(0.85, 1.15, size=3)
            orientation = (
                float(rng.uniform(-180.0, 180.0)),
                float(rng.uniform(-15.0, 15.0)),
                float(rng.uniform(-10.0, 10.0)),
            )
            half_diag = 0.5 * float(np.linalg.norm(dims))
            near = z - half_diag
            if near <= 0.1:
                continue
            x_reach = (width / 2.0 - margin) * near / focal - half_diag
            y_reach = (height / 2.0 - margin) * near / focal - half_diag
            if x_reach <= 0.0 or y_reach <= 0.0:
                continue
            x = float(rng.uniform(-x_reach, x_reach))
            y = float(rng.uniform(-y_reach, y_reach))
            box = Box3D(
                center=(x, y, z),
                dims=tuple(float(d) for d in dims),
                orientation=orientation,
                class_id=class_id,
                score=1.0,
            )
            hull = project_box3d(camera, box)
            if hull.x_min < 0 or hull.y_min < 0 or hull.x_max > width - 1 or hull.y_max > height - 1:
                continue
            if any(iou(hull, other) >= 0.1 for other in boxes2d):
                continue
            objects.append(box)
            boxes2d.append(hull)
            placed = True
            break
        if not placed:
            raise GenerationError(
                f"could not place object {len(objects)} after {max_attempts} attempts "
                f"at sweep point {point.index} "
                f"({point.category.value}/{point.super_category.value}, "
                f"distance {point.camera_distance:g} m)"
            )

    return SceneSample(
        sample_id=sample_id if sample_id is not None else f"{point.index:06d}",
        point=point,
        camera=camera,
        image_size=(int(width), int(height)),
        taxonomy=taxonomy,
        labels=tuple(label for _ in objects),
        objects=tuple(objects),
        boxes2d=tuple(boxes2d),
        metadata={
            "light": {
                "intensity": point.light_intensity,
                "elevation": point.light_elevation,
                "azimuth": point.light_azimuth,
            },
            "weather": {"rain": point.rain, "wind": point.wind},
            "sensor": {"style": point.sensor_style},
            "camera_pose": {
                "distance": point.camera_distance,
                "elevation": point.camera_elevation,
                "azimuth": point.camera_azimuth,
            },
        },
    )


def _stamp_gaussian(plane, row, col, sigma):
    """Max-combine a unit-peak gaussian bump centered on one cell."""
    radius = max(1, int(math.ceil(3.0 * sigma)))
    r0 = max(0, row - radius)
    r1 = min(plane.shape[0], row + radius + 1)
    c0 = max(0, col - radius)
    c1 = min(plane.shape[1], col + radius + 1)
    rows = np.arange(r0, r1) - row
    cols = np.arange(c0, c1) - col
    bump = np.exp(-(rows[:, None] ** 2 + cols[None, :] ** 2) / (2.0 * sigma * sigma))
    np.maximum(plane[r0:r1, c0:c1], bump, out=plane[r0:r1, c0:c1])


def render_ideal_maps(
    sample,
    height=None,
    width=None,
    stride=1,
    sigma=1.5,
    orientation_bins=4,
    include_aux=True,
):
    """Synthesize the ideal output bundle for a scene.

    For every object, each keypoint kind gets a unit-peak gaussian bump on
    the object's class channel at floor(pixel / stride); the exact
    fractional remainders go into the offset maps at those cells and the
    per-object tag (object index + 1) into both corner embeddings. The
    center keypoint is the midpoint of the projected 2D box. With
    `include_aux`, the center cell additionally stores log-depth, dims,
    and the multibin encoding of each orientation angle.
    """
    img_w, img_h = sample.image_size
    if height is None:
        height = int(math.ceil(img_h / stride))
    if width is None:
        width = int(math.ceil(img_w / stride))
    n_classes = len(sample.taxonomy)

    heat = {kind: np.zeros((height, width, n_classes), dtype=np.float32) for kind in ALL_KINDS}
    offset = {kind: np.zeros((height, width, 2), dtype=np.float32) for kind in ALL_KINDS}
    embed = {kind: np.zeros((height, width, 1), dtype=np.float32) for kind in CORNER_KINDS}
    if include_aux:
        depth_map = np.zeros((height, width, 1), dtype=np.float32)
        dims_map = np.zeros((height, width, 3), dtype=np.float32)
        orient_map = np.zeros((height, width, 9 * orientation_bins), dtype=np.float32)
        bin_centers = uniform_bin_centers(orientation_bins)

    for obj_index, (box3d, box2d) in enumerate(zip(sample.objects, sample.boxes2d)):
        class_ch = box3d.class_id
        anchors = {
            KeypointKind.TOP_LEFT: (box2d.x_min, box2d.y_min),
            KeypointKind.BOTTOM_RIGHT: (box2d.x_max, box2d.y_max),
            KeypointKind.CENTER: box2d.center,
        }
        tag = float(obj_index + 1)
        for kind, (px, py) in anchors.items():
            col = math.floor(px / stride)
            row = math.floor(py / stride)
            if not (0 <= row < height and 0 <= col < width):
                raise RenderError(
                    f"{kind.value} keypoint of object {obj_index} at pixel "
                    f"({px:.2f}, {py:.2f}) falls outside the {height}x{width} "
                    f"feature map (stride {stride})"
                )
            _stamp_gaussian(heat[kind][:, :, class_ch], row, col, sigma)
            offset[kind][row, col, 0] = px / stride - col
            offset[kind][row, col, 1] = py / stride - row
            if kind in CORNER_KINDS:
                embed[kind][row, col, 0] = tag
            elif include_aux:
                depth_map[row, col, 0] = math.log(box3d.center[2])
                dims_map[row, col, :] = box3d.dims
                for angle_idx, angle in enumerate(box3d.orientation):
                    encoded = encode_multibin(angle, bin_centers)
                    base = angle_idx * 3 * orientation_bins
                    for i, (conf, cos_d, sin_d) in enumerate(encoded.bins):
                        orient_map[row, col, base + 3 * i : base + 3 * i + 3] = (
                            conf,
                            cos_d,
                            sin_d,
                        )

    return MapBundle(
        heatmaps={kind: FeatureMap(heat[kind], role=MapRole.HEATMAP) for kind in ALL_KINDS},
        embeddings={
            kind: FeatureMap(embed[kind], role=MapRole.EMBEDDING) for kind in CORNER_KINDS
        },
        offsets={kind: FeatureMap(offset[kind], role=MapRole.OFFSET) for kind in ALL_KINDS},
        aux_depth=FeatureMap(depth_map, role=MapRole.GENERIC) if include_aux else None,
        aux_dims=FeatureMap(dims_map, role=MapRole.GENERIC) if include_aux else None,
        aux_orientation=FeatureMap(orient_map, role=MapRole.GENERIC) if include_aux else None,
    )


def corrupt_maps(bundle, noise_level, rng_seed):
    """Perturb a bundle with seeded gaussian noise.

    Heatmaps take noise of the given sigma and are clamped back to [0, 1];
    offsets take the same sigma, embeddings a tenth of it. The 3D head
    maps are left untouched. Noise level 0 returns the bundle unchanged.
    """
    if noise_level < 0:
        raise DomainError(f"noise_level must be >= 0, got {noise_level}")
    if noise_level == 0:
        return bundle
    rng = np.random.default_rng(rng_seed)

    def noisy(fmap, sigma, clamp):
        data = fmap.data.astype(np.float64) + rng.normal(0.0, sigma, size=fmap.shape)
        if clamp:
            data = np.clip(data, 0.0, 1.0)
        return FeatureMap(data.astype(np.float32), role=fmap.role)

    heatmaps = {k: noisy(bundle.heatmaps[k], noise_level, clamp=True) for k in ALL_KINDS}
    embeddings = {
        k: noisy(bundle.embeddings[k], noise_level / 10.0, clamp=False)
        for k in CORNER_KINDS
    }
    offsets = {k: noisy(bundle.offsets[k], noise_level, clamp=False) for k in ALL_KINDS}
    return MapBundle(
        heatmaps=heatmaps,
        embeddings=embeddings,
        offsets=offsets,
        aux_depth=bundle.aux_depth,
        aux_dims=bundle.aux_dims,
        aux_orientation=bundle.aux_orientation,
    )


def scene_to_dict(sample):
    """JSON-ready scene annotation (camera, truth boxes, sweep metadata)."""
    return {
        "id": sample.sample_id,
        "image_size": [sample.image_size[0], sample.image_size[1]],
        "camera": {"p": [[float(v) for v in row] for row in sample.camera.p]},
        "point": sample.point.to_dict(),
        "classes": list(sample.taxonomy.names),
        "super": {name: cat.value for name, cat in sample.taxonomy.grouping.items()},
        "objects": [
            {
                "class": label,
                "box3d": {
                    "center": list(box3d.center),
                    "dims": list(box3d.dims),
                    "orientation": list(box3d.orientation),
                },
                "box2d": {
                    "x_min": box2d.x_min,
                    "y_min": box2d.y_min,
                    "x_max": box2d.x_max,
                    "y_max": box2d.y_max,
                },
            }
            for label, box3d, box2d in zip(sample.labels, sample.objects, sample.boxes2d)
        ],
        "metadata": dict(sample.metadata),
    }


def truth_dict(samples):
    """Ground-truth annotations for a set of samples, in the same frame
    layout the decode command emits, so `eval` can consume either side."""
    taxonomy = samples[0].taxonomy if samples else ClassTaxonomy.default()
    frames = {}
    for sample in samples:
        frames[sample.sample_id] = [
            {
                "class": label,
                "score": 1.0,
                "box2d": {
                    "x_min": box2d.x_min,
                    "y_min": box2d.y_min,
                    "x_max": box2d.x_max,
                    "y_max": box2d.y_max,
                },
                "box3d": {
                    "center": list(box3d.center),
                    "dims": list(box3d.dims),
                    "orientation": list(box3d.orientation),
                },
            }
            for label, box3d, box2d in zip(sample.labels, sample.objects, sample.boxes2d)
        ]
    return {
        "classes": list(taxonomy.names),
        "super": {name: cat.value for name, cat in taxonomy.grouping.items()},
        "frames": frames,
    }


def write_dataset(
    out_dir,
    spec,
    repeats=1,
    n_objects=1,
    image_size=DEFAULT_IMAGE_SIZE,
    focal=DEFAULT_FOCAL,
    stride=1,
    sigma=1.5,
    orientation_bins=4,
    taxonomy=None,
    include_aux=True,
):
    """Materialize a full sweep on disk.

    Layout: manifest.json, truth.json, scenes/<id>.json, and one tensor
    bundle directory per frame under frames/<id>/. Every write is atomic
    and the output is a pure function of the arguments, so repeated runs
    produce byte-identical files.
    """
    from .fmap import save_bundle
    from .ioutil import atomic_write_text, stable_json_dumps

    taxonomy = taxonomy or ClassTaxonomy.default()
    points = enumerate_sweep(spec)
    os.makedirs(os.path.join(out_dir, "scenes"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "frames"), exist_ok=True)

    samples = []
    entries = []
    sample_index = 0
    for point in points:
        for repeat in range(repeats):
            sample_id = f"{sample_index:06d}"
            sample = generate_scene(
                point,
                spec.seed,
                n_objects=n_objects,
                image_size=image_size,
                focal=focal,
                taxonomy=taxonomy,
                variant=repeat,
                sample_id=sample_id,
            )
            bundle = render_ideal_maps(
                sample,
                stride=stride,
                sigma=sigma,
                orientation_bins=orientation_bins,
                include_aux=include_aux,
            )
            scene_rel = os.path.join("scenes", f"{sample_id}.json")
            frames_rel = os.path.join("frames", sample_id)
            atomic_write_text(
                os.path.join(out_dir, scene_rel), stable_json_dumps(scene_to_dict(sample))
            )
            save_bundle(os.path.join(out_dir, frames_rel), bundle)
            samples.append(sample)
            entries.append(
                {
                    "id": sample_id,
                    "point": point.to_dict(),
                    "repeat": repeat,
                    "scene": scene_rel.replace(os.sep, "/"),
                    "frames": frames_rel.replace(os.sep, "/"),
                }
            )
            sample_index += 1

    manifest = {
        "format_version": 1,
        "category": spec.category.value,
        "super_category": spec.super_category.value,
        "scene": spec.scene.value,
        "seed": spec.seed,
        "repeats": repeats,
        "objects_per_scene": n_objects,
        "image_size": [image_size[0], image_size[1]],
        "focal": focal,
        "stride": stride,
        "sigma": sigma,
        "orientation_bins": orientation_bins,
        "classes": list(taxonomy.names),
        "super": {name: cat.value for name, cat in taxonomy.grouping.items()},
        "samples": entries,
    }
    atomic_write_text(os.path.join(out_dir, "truth.json"), stable_json_dumps(truth_dict(samples)))
    atomic_write_text(os.path.join(out_dir, "manifest.json"), stable_json_dumps(manifest))
    return manifest


def scene_from_dict(data):
    """Inverse of :func:`scene_to_dict`."""
    taxonomy = ClassTaxonomy(
        names=tuple(data["classes"]),
        grouping={k: SuperCategory(v) for k, v in data["super"].items()},
    )
    point = SweepPoint.from_dict(data["point"])
    labels = []
    objects = []
    boxes2d = []
    for obj in data["objects"]:
        label = obj["class"]
        class_id = taxonomy.index(label)
        labels.append(label)
        objects.append(
            Box3D(
                center=tuple(obj["box3d"]["center"]),
                dims=tuple(obj["box3d"]["dims"]),
                orientation=tuple(obj["box3d"]["orientation"]),
                class_id=class_id,
                score=1.0,
            )
        )
        b = obj["box2d"]
        boxes2d.append(
            Box2D(b["x_min"], b["y_min"], b["x_max"], b["y_max"], class_id=class_id, score=1.0)
        )
    return SceneSample(
        sample_id=str(data["id"]),
        point=point,
        camera=CameraIntrinsics(data["camera"]["p"]),
        image_size=(int(data["image_size"][0]), int(data["image_size"][1])),
        taxonomy=taxonomy,
        labels=tuple(labels),
        objects=tuple(objects),
        boxes2d=tuple(boxes2d),
        metadata=dict(data["metadata"]),
    )
