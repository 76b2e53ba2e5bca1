"""Anchor-free inference: heatmaps + embeddings + offsets -> detections.

The pipeline is peak extraction, tag attachment, greedy corner grouping by
tag distance, sub-cell offset refinement, and center-validated box
assembly. Every step is deterministic: all orderings use total sort keys
(score descending, then row, then col).
"""

import math
from dataclasses import dataclass, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import (
    Box2D,
    ConfigurationError,
    Detection,
    DomainError,
    Keypoint,
    KeypointKind,
)
from . import geometry3d

__all__ = [
    "PeakExtractionConfig",
    "GroupingConfig",
    "extract_peaks",
    "attach_tags",
    "group_corners",
    "refine_with_offsets",
    "assemble_boxes",
    "decode_frame",
    "decode_frame_3d",
]


@dataclass(frozen=True)
class PeakExtractionConfig:
    score_threshold: float = 0.3
    nms_window: int = 3
    top_k: int = 100

    def __post_init__(self):
        if not 0.0 <= self.score_threshold <= 1.0:
            raise DomainError(f"score_threshold must lie in [0, 1], got {self.score_threshold}")
        if self.nms_window < 1 or self.nms_window % 2 == 0:
            raise DomainError(f"nms_window must be an odd integer >= 1, got {self.nms_window}")
        if self.top_k < 1:
            raise DomainError(f"top_k must be >= 1, got {self.top_k}")


@dataclass(frozen=True)
class GroupingConfig:
    theta: float = 0.5
    geometric_gate: bool = True

    def __post_init__(self):
        if not (math.isfinite(self.theta) and self.theta > 0.0):
            raise DomainError(f"theta must be finite and positive, got {self.theta}")


def extract_peaks(heatmap, cfg, kind):
    """All cells that are the strict maximum of their local window.

    Equal values within one window are broken toward the smallest
    (row, col); each channel keeps at most `top_k` peaks with score at or
    above the threshold, and the result is sorted by descending score
    (then row, col, channel).
    """
    data = heatmap.data
    lo = float(data.min())
    hi = float(data.max())
    if lo < 0.0 or hi > 1.0:
        raise DomainError(f"peak extraction needs values in [0, 1], got [{lo:g}, {hi:g}]")
    margin = (cfg.nms_window - 1) // 2
    height, width, _ = data.shape

    peaks = []
    for ch in range(heatmap.channels):
        plane = data[:, :, ch]
        if margin:
            padded = np.pad(plane, margin, constant_values=-np.inf)
            windows = sliding_window_view(padded, (cfg.nms_window, cfg.nms_window))
            neighborhood_max = windows.max(axis=(2, 3))
        else:
            neighborhood_max = plane
        candidates = np.argwhere(
            (plane >= neighborhood_max) & (plane >= cfg.score_threshold)
        )
        kept = []
        for row, col in candidates:
            value = plane[row, col]
            r0 = max(0, row - margin)
            c0 = max(0, col - margin)
            window = plane[r0 : row + margin + 1, c0 : col + margin + 1]
            ties = np.argwhere(window == value)
            first = min((r0 + dr, c0 + dc) for dr, dc in ties)
            if first == (row, col):
                kept.append((float(value), int(row), int(col)))
        kept.sort(key=lambda t: (-t[0], t[1], t[2]))
        for score, row, col in kept[: cfg.top_k]:
            peaks.append(
                Keypoint(kind=kind, class_id=ch, row=row, col=col, score=score)
            )
    peaks.sort(key=lambda k: (-k.score, k.row, k.col, k.class_id))
    return peaks


def attach_tags(keypoints, embedding):
    """Return copies of the keypoints tagged from a 1-channel embedding map."""
    if embedding.channels != 1:
        raise ConfigurationError(
            f"embedding map must have 1 channel, got {embedding.channels}"
        )
    return [replace(kp, tag=embedding.get(kp.row, kp.col, 0)) for kp in keypoints]


def group_corners(top_lefts, bottom_rights, cfg):
    """Greedy best-first corner pairing by ascending tag distance.

    A pair is accepted iff the tag distance is below theta, both corners
    have the same class and are still unused, and (when the geometric gate
    is on) the top-left sits up-left of the bottom-right. Unmatched
    keypoints are dropped.
    """
    candidates = []
    for i, tl in enumerate(top_lefts):
        for j, br in enumerate(bottom_rights):
            if tl.class_id != br.class_id:
                continue
            if cfg.geometric_gate and not (tl.row <= br.row and tl.col <= br.col):
                continue
            distance = abs(tl.tag - br.tag)
            if distance < cfg.theta:
                candidates.append((distance, i, j))
    candidates.sort()

    used_tl = set()
    used_br = set()
    pairs = []
    for _, i, j in candidates:
        if i in used_tl or j in used_br:
            continue
        used_tl.add(i)
        used_br.add(j)
        pairs.append((top_lefts[i], bottom_rights[j]))
    return pairs


def refine_with_offsets(keypoint, offsets, stride=1):
    """Grid cell -> image pixels: (col + o_x, row + o_y) * stride."""
    if offsets.channels != 2:
        raise ConfigurationError(
            f"offset map must have exactly 2 channels (o_x, o_y), got {offsets.channels}"
        )
    if int(stride) != stride or stride < 1:
        raise DomainError(f"stride must be a positive integer, got {stride!r}")
    o_x = offsets.get(keypoint.row, keypoint.col, 0)
    o_y = offsets.get(keypoint.row, keypoint.col, 1)
    return ((keypoint.col + o_x) * stride, (keypoint.row + o_y) * stride)


def assemble_boxes(pairs, centers, offsets, stride, cfg):
    """Build center-validated boxes from grouped corner pairs.

    A pair survives iff a same-class center keypoint, refined by its
    offsets, lands inside the middle third of the candidate box; the
    highest-scoring such center (ties: smallest row, col) is attached.
    Pairs whose refined corners cross are dropped. The box score is the
    mean of the three keypoint scores.
    """
    del cfg  # grouping already happened; kept for signature symmetry
    refined_centers = [
        (ck, refine_with_offsets(ck, offsets[KeypointKind.CENTER], stride))
        for ck in centers
    ]
    detections = []
    for tl, br in pairs:
        x1, y1 = refine_with_offsets(tl, offsets[KeypointKind.TOP_LEFT], stride)
        x2, y2 = refine_with_offsets(br, offsets[KeypointKind.BOTTOM_RIGHT], stride)
        if x1 > x2 or y1 > y2:
            continue
        third_w = (x2 - x1) / 3.0
        third_h = (y2 - y1) / 3.0
        x_lo, x_hi = x1 + third_w, x2 - third_w
        y_lo, y_hi = y1 + third_h, y2 - third_h

        best = None
        best_key = None
        for ck, (cx, cy) in refined_centers:
            if ck.class_id != tl.class_id:
                continue
            if x_lo <= cx <= x_hi and y_lo <= cy <= y_hi:
                key = (-ck.score, ck.row, ck.col)
                if best_key is None or key < best_key:
                    best, best_key = ck, key
        if best is None:
            continue

        score = (tl.score + br.score + best.score) / 3.0
        box = Box2D(x1, y1, x2, y2, class_id=tl.class_id, score=score)
        detections.append(
            Detection(
                box=box,
                top_left=tl,
                bottom_right=br,
                center=best,
                tag=0.5 * (tl.tag + br.tag),
            )
        )
    detections.sort(
        key=lambda d: (
            -d.score,
            d.top_left.row,
            d.top_left.col,
            d.bottom_right.row,
            d.bottom_right.col,
            d.class_id,
        )
    )
    return detections


def decode_frame(bundle, peak_cfg=None, group_cfg=None, stride=1, taxonomy=None):
    """Full 2D decode of one frame bundle."""
    peak_cfg = peak_cfg or PeakExtractionConfig()
    group_cfg = group_cfg or GroupingConfig()
    if taxonomy is not None and bundle.num_classes != len(taxonomy):
        raise ConfigurationError(
            f"bundle has {bundle.num_classes} heatmap channels but the taxonomy "
            f"declares {len(taxonomy)} classes"
        )

    top_lefts = extract_peaks(
        bundle.heatmaps[KeypointKind.TOP_LEFT], peak_cfg, KeypointKind.TOP_LEFT
    )
    bottom_rights = extract_peaks(
        bundle.heatmaps[KeypointKind.BOTTOM_RIGHT], peak_cfg, KeypointKind.BOTTOM_RIGHT
    )
    centers = extract_peaks(
        bundle.heatmaps[KeypointKind.CENTER], peak_cfg, KeypointKind.CENTER
    )

    top_lefts = attach_tags(top_lefts, bundle.embeddings[KeypointKind.TOP_LEFT])
    bottom_rights = attach_tags(
        bottom_rights, bundle.embeddings[KeypointKind.BOTTOM_RIGHT]
    )

    pairs = group_corners(top_lefts, bottom_rights, group_cfg)
    return assemble_boxes(pairs, centers, bundle.offsets, stride, group_cfg)


def decode_frame_3d(bundle, camera, peak_cfg=None, group_cfg=None, stride=1, taxonomy=None):
    """2D decode plus the 3D lift; yields (detection, box3d-or-None) pairs.

    The 3D box is None when the bundle carries no 3D head maps.
    """
    detections = decode_frame(bundle, peak_cfg, group_cfg, stride, taxonomy)
    if not bundle.has_aux or camera is None:
        return [(det, None) for det in detections]
    return [
        (det, geometry3d.lift_detection(det, bundle, camera, stride))
        for det in detections
    ]
