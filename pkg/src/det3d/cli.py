"""Command-line surface: synthesize datasets, decode tensor bundles,
evaluate predictions, and export KITTI-format data.

Exit codes: 0 success, 2 usage/flag error (including unusable output
paths), 3 data/parse/validation error, 4 internal invariant violation.
All commands are deterministic given their flags plus the seed, and every
file write is atomic.
"""

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from .core import (
    Box2D,
    ClassTaxonomy,
    ConfigurationError,
    Det3DError,
    DomainError,
    ParseError,
    ShapeError,
    SuperCategory,
    ValidationError,
)
from .decode import GroupingConfig, PeakExtractionConfig, decode_frame_3d
from .fmap import load_bundle
from .ioutil import atomic_write_text, stable_json_dumps
from .kitti import scene_to_kitti
from .metrics import EvalItem, Interpolation, MatchPolicy, evaluate, mean_average_precision
from .synthgen import Category, SceneKind, SweepSpec, scene_from_dict, write_dataset

__all__ = ["main", "build_parser"]

_SUPER_FLAGS = {"air": SuperCategory.AIR, "ground": SuperCategory.GROUND}


def _unit_interval(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {text}")
    return value


def _iou_threshold(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 < value <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1], got {text}")
    return value


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return value


def _odd_int(text):
    value = _positive_int(text)
    if value % 2 == 0:
        raise argparse.ArgumentTypeError(f"must be odd, got {text}")
    return value


def _positive_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if value <= 0.0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return value


def _nonnegative_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if value < 0.0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


def build_parser():
    parser = argparse.ArgumentParser(
        prog="det3d",
        description="Keypoint detection decoding, 3D box geometry, evaluation, "
        "and synthetic-scene generation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a synthetic sweep dataset")
    synth.add_argument("--category", required=True, choices=[c.value for c in Category])
    synth.add_argument("--super", dest="super_category", required=True, choices=sorted(_SUPER_FLAGS))
    synth.add_argument("--scene", default="city", choices=[s.value for s in SceneKind])
    synth.add_argument("--seed", type=int, default=None, help="falls back to $DET3D_SEED, then 0")
    synth.add_argument("--repeats", type=_positive_int, default=1, help="object layouts per grid point")
    synth.add_argument("--objects", type=_positive_int, default=1, help="objects per scene")
    synth.add_argument("--stride", type=_positive_int, default=1)
    synth.add_argument("--sigma", type=_positive_float, default=1.5, help="heatmap bump width, cells")
    synth.add_argument("--out", required=True)
    synth.set_defaults(func=_cmd_synth)

    decode = sub.add_parser("decode", help="decode tensor bundles into detections JSON")
    src = decode.add_mutually_exclusive_group(required=True)
    src.add_argument("--dataset", help="dataset directory written by synth")
    src.add_argument("--bundle", help="a single frame bundle directory")
    decode.add_argument("--scene", help="scene JSON supplying the camera for a --bundle decode")
    decode.add_argument("--classes", help="comma-separated class names for a --bundle decode")
    decode.add_argument("--stride", type=_positive_int, default=None)
    decode.add_argument("--score-threshold", type=_unit_interval, default=0.3)
    decode.add_argument("--nms-window", type=_odd_int, default=3)
    decode.add_argument("--top-k", type=_positive_int, default=100)
    decode.add_argument("--theta", type=_positive_float, default=0.5)
    decode.add_argument("--jobs", type=_positive_int, default=1)
    decode.add_argument("--out", required=True)
    decode.set_defaults(func=_cmd_decode)

    evalp = sub.add_parser("eval", help="evaluate predictions against ground truth")
    evalp.add_argument("--pred", help="detections JSON")
    evalp.add_argument("--truth", help="ground-truth JSON")
    evalp.add_argument("--iou", type=_iou_threshold, default=0.5)
    evalp.add_argument(
        "--interpolation",
        default="all_point",
        choices=[i.value for i in Interpolation],
    )
    evalp.add_argument(
        "--per-class-ap",
        action="append",
        default=None,
        metavar="CLASS=AP",
        help="skip box matching and average precomputed per-class APs",
    )
    evalp.add_argument("--out", help="also write the report JSON here")
    evalp.set_defaults(func=_cmd_eval)

    convert = sub.add_parser("convert", help="export a dataset as KITTI label/calib files")
    convert.add_argument("--dataset", required=True)
    convert.add_argument("--out", required=True)
    convert.set_defaults(func=_cmd_convert)

    return parser


def _resolve_seed(seed):
    if seed is not None:
        return seed
    raw = os.environ.get("DET3D_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"DET3D_SEED must be an integer, got {raw!r}") from None


class UsageError(Exception):
    """Flag-level problem detected after argparse (exit code 2)."""


def _load_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ParseError(f"missing file {path!r}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from None


def _taxonomy_from(classes, super_names):
    grouping = {}
    for name in classes:
        grouping[name] = SuperCategory(super_names.get(name, "Ground")) if super_names else SuperCategory.GROUND
    return ClassTaxonomy(names=tuple(classes), grouping=grouping)


def _cmd_synth(args):
    spec = SweepSpec(
        category=Category(args.category),
        super_category=_SUPER_FLAGS[args.super_category],
        scene=SceneKind(args.scene),
        seed=_resolve_seed(args.seed),
    )
    try:
        manifest = write_dataset(
            args.out,
            spec,
            repeats=args.repeats,
            n_objects=args.objects,
            stride=args.stride,
            sigma=args.sigma,
        )
    except OSError as exc:
        print(f"error: cannot write dataset under {args.out!r}: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {len(manifest['samples'])} samples to {args.out}")
    return 0


def _detection_obj(label, detection, box3d):
    obj = {
        "class": label,
        "score": detection.score,
        "box2d": {
            "x_min": detection.box.x_min,
            "y_min": detection.box.y_min,
            "x_max": detection.box.x_max,
            "y_max": detection.box.y_max,
        },
        "box3d": None,
    }
    if box3d is not None:
        obj["box3d"] = {
            "center": list(box3d.center),
            "dims": list(box3d.dims),
            "orientation": list(box3d.orientation),
        }
    return obj


def _decode_one(frame_dir, scene_path, taxonomy, peak_cfg, group_cfg, stride):
    bundle = load_bundle(frame_dir)
    camera = None
    if scene_path is not None and os.path.exists(scene_path):
        camera = scene_from_dict(_load_json(scene_path)).camera
    results = decode_frame_3d(
        bundle, camera, peak_cfg, group_cfg, stride=stride, taxonomy=taxonomy
    )
    return [
        _detection_obj(taxonomy.names[det.class_id], det, box3d)
        for det, box3d in results
    ]


def _cmd_decode(args):
    peak_cfg = PeakExtractionConfig(
        score_threshold=args.score_threshold,
        nms_window=args.nms_window,
        top_k=args.top_k,
    )
    group_cfg = GroupingConfig(theta=args.theta)

    if args.dataset:
        manifest = _load_json(os.path.join(args.dataset, "manifest.json"))
        stride = args.stride if args.stride is not None else int(manifest.get("stride", 1))
        taxonomy = _taxonomy_from(manifest["classes"], manifest.get("super", {}))
        jobs = []
        for entry in manifest["samples"]:
            jobs.append(
                (
                    entry["id"],
                    os.path.join(args.dataset, entry["frames"]),
                    os.path.join(args.dataset, entry["scene"]),
                )
            )
        frames = {}
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            futures = {
                fid: pool.submit(
                    _decode_one, frame_dir, scene_path, taxonomy, peak_cfg, group_cfg, stride
                )
                for fid, frame_dir, scene_path in jobs
            }
            for fid in sorted(futures):
                frames[fid] = futures[fid].result()
        payload = {
            "classes": list(taxonomy.names),
            "super": manifest.get("super", {}),
            "frames": {fid: frames[fid] for fid in sorted(frames)},
        }
    else:
        if args.classes:
            classes = [c.strip() for c in args.classes.split(",") if c.strip()]
        else:
            classes = list(ClassTaxonomy.default().names)
        super_names = {}
        scene_path = args.scene
        if scene_path is not None:
            scene_data = _load_json(scene_path)
            classes = list(scene_data.get("classes", classes))
            super_names = scene_data.get("super", {})
        taxonomy = _taxonomy_from(classes, super_names)
        stride = args.stride if args.stride is not None else 1
        frame_id = os.path.basename(os.path.normpath(args.bundle))
        frames = {
            frame_id: _decode_one(
                args.bundle, scene_path, taxonomy, peak_cfg, group_cfg, stride
            )
        }
        payload = {
            "classes": list(taxonomy.names),
            "super": super_names,
            "frames": frames,
        }

    atomic_write_text(args.out, stable_json_dumps(payload))
    total = sum(len(v) for v in payload["frames"].values())
    print(f"decoded {len(payload['frames'])} frames, {total} detections -> {args.out}")
    return 0


def _items_from_frames(data):
    frames = {}
    for fid, objects in data.get("frames", {}).items():
        items = []
        for obj in objects:
            b = obj["box2d"]
            box = Box2D(
                b["x_min"],
                b["y_min"],
                b["x_max"],
                b["y_max"],
                class_id=0,
                score=float(obj.get("score", 1.0)),
            )
            depth = None
            if obj.get("box3d"):
                depth = float(obj["box3d"]["center"][2])
            items.append(EvalItem(label=str(obj["class"]), box=box, depth=depth))
        frames[fid] = items
    return frames


def _format_report(report):
    lines = []
    width = max([len("mAP")] + [len(name) for name in report.per_class_ap])
    lines.append(f"{'class'.ljust(width)}  AP")
    lines.append("-" * (width + 12))
    for name in sorted(report.per_class_ap):
        lines.append(f"{name.ljust(width)}  {report.per_class_ap[name]:.6f}")
    lines.append("-" * (width + 12))
    lines.append(f"{'mAP'.ljust(width)}  {report.map:.6f}")
    if report.per_super_map:
        lines.append("")
        lines.append("per super-category mAP:")
        for name, value in report.per_super_map.items():
            lines.append(f"  {name.ljust(width)}  {value:.6f}")
    labels = list(report.confusion_labels) + ["background"]
    col = max(10, max(len(l) for l in labels) + 2)
    lines.append("")
    lines.append("confusion (rows = truth, cols = prediction):")
    lines.append(" " * col + "".join(l.rjust(col) for l in labels))
    for i, label in enumerate(labels):
        row = "".join(str(int(v)).rjust(col) for v in report.confusion[i])
        lines.append(label.ljust(col) + row)
    lines.append("")
    lines.append(f"SIE:            {report.sie if report.sie is not None else 'n/a'}")
    lines.append(
        f"mean DIoU loss: {report.mean_diou_loss if report.mean_diou_loss is not None else 'n/a'}"
    )
    return "\n".join(lines)


def _cmd_eval(args):
    if args.per_class_ap:
        per_class = {}
        for item in args.per_class_ap:
            name, _, value = item.partition("=")
            if not name or not value:
                raise UsageError(f"--per-class-ap needs CLASS=AP, got {item!r}")
            try:
                per_class[name] = float(value)
            except ValueError:
                raise UsageError(f"--per-class-ap value must be numeric, got {item!r}") from None
        map_value = mean_average_precision(per_class)
        width = max(len(n) for n in per_class)
        for name in sorted(per_class):
            print(f"{name.ljust(width)}  {per_class[name]:.6f}")
        print(f"{'mAP'.ljust(width)}  {map_value:.6f}")
        if args.out:
            atomic_write_text(
                args.out, stable_json_dumps({"per_class_ap": per_class, "map": map_value})
            )
        return 0

    if not args.pred or not args.truth:
        raise UsageError("eval needs --pred and --truth (or --per-class-ap entries)")
    pred_data = _load_json(args.pred)
    truth_data = _load_json(args.truth)
    preds = _items_from_frames(pred_data)
    truths = _items_from_frames(truth_data)
    policy = MatchPolicy(
        iou_threshold=args.iou, interpolation=Interpolation(args.interpolation)
    )
    report = evaluate(preds, truths, policy, super_map=truth_data.get("super"))
    print(_format_report(report))
    if args.out:
        atomic_write_text(args.out, stable_json_dumps(report.to_dict()))
    return 0


def _cmd_convert(args):
    manifest = _load_json(os.path.join(args.dataset, "manifest.json"))
    labels_dir = os.path.join(args.out, "label_2")
    calib_dir = os.path.join(args.out, "calib")
    try:
        os.makedirs(labels_dir, exist_ok=True)
        os.makedirs(calib_dir, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output under {args.out!r}: {exc}", file=sys.stderr)
        return 2
    count = 0
    for entry in manifest["samples"]:
        sample = scene_from_dict(_load_json(os.path.join(args.dataset, entry["scene"])))
        label_text, calib_text = scene_to_kitti(sample)
        atomic_write_text(os.path.join(labels_dir, f"{entry['id']}.txt"), label_text)
        atomic_write_text(os.path.join(calib_dir, f"{entry['id']}.txt"), calib_text)
        count += 1
    print(f"converted {count} frames -> {args.out}")
    return 0


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ParseError, ValidationError, ConfigurationError, DomainError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Det3DError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except Exception as exc:  # pragma: no cover - safety net
        print(f"internal error: {exc!r}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
