"""Independent reference implementations used to cross-check the library.

These stay deliberately naive (per-cell ray walks, O(n^2) envelope scans)
so they share no code path with the implementations they verify.
"""

import numpy as np

from det3d.pooling import Axis, PoolingDirection, Sense


def ray_max_oracle(plane, direction):
    """O(H*W*max(H,W)) per-cell directional ray walk."""
    h, w = plane.shape
    out = np.empty_like(plane)
    dr, dc = {
        (Axis.HORIZONTAL, Sense.TOWARD_INCREASING): (0, 1),
        (Axis.HORIZONTAL, Sense.TOWARD_DECREASING): (0, -1),
        (Axis.VERTICAL, Sense.TOWARD_INCREASING): (1, 0),
        (Axis.VERTICAL, Sense.TOWARD_DECREASING): (-1, 0),
    }[(direction.axis, direction.sense)]
    for r in range(h):
        for c in range(w):
            best = plane[r, c]
            rr, cc = r + dr, c + dc
            while 0 <= rr < h and 0 <= cc < w:
                if plane[rr, cc] > best:
                    best = plane[rr, cc]
                rr += dr
                cc += dc
            out[r, c] = best
    return out


def center_pool_oracle(plane):
    h, w = plane.shape
    out = np.empty_like(plane)
    for r in range(h):
        for c in range(w):
            out[r, c] = max(plane[r, :]) + max(plane[:, c])
    return out


def cascade_oracle(plane, toward_increasing):
    sense = Sense.TOWARD_INCREASING if toward_increasing else Sense.TOWARD_DECREASING
    horizontal = ray_max_oracle(plane, PoolingDirection(Axis.HORIZONTAL, sense))
    vertical = ray_max_oracle(horizontal, PoolingDirection(Axis.VERTICAL, sense))
    return vertical + horizontal


def iou_bruteforce(a, b):
    ix = max(0.0, min(a.x_max, b.x_max) - max(a.x_min, b.x_min))
    iy = max(0.0, min(a.y_max, b.y_max) - max(a.y_min, b.y_min))
    inter = ix * iy
    union = (a.x_max - a.x_min) * (a.y_max - a.y_min) + (b.x_max - b.x_min) * (
        b.y_max - b.y_min
    ) - inter
    return 0.0 if union <= 0.0 else inter / union


def ap_bruteforce(dets, truths, threshold):
    """Reference AP: naive greedy matching plus per-step envelope scans."""
    if not dets and not truths:
        return None
    if not dets or not truths:
        return 0.0
    order = sorted(range(len(dets)), key=lambda k: -dets[k][1])
    remaining = list(range(len(truths)))
    hits = []
    for k in order:
        candidate = None
        candidate_iou = 0.0
        for j in remaining:
            overlap = iou_bruteforce(dets[k][0], truths[j])
            if overlap >= threshold and overlap > candidate_iou:
                candidate, candidate_iou = j, overlap
        if candidate is not None:
            remaining.remove(candidate)
            hits.append(1)
        else:
            hits.append(0)
    points = []
    tp = 0
    for rank, hit in enumerate(hits, start=1):
        tp += hit
        points.append((tp / len(truths), tp / rank))
    ap = 0.0
    prev = 0.0
    for i, (recall, _) in enumerate(points):
        if recall > prev:
            envelope = max(p for _, p in points[i:])
            ap += (recall - prev) * envelope
            prev = recall
    return ap
