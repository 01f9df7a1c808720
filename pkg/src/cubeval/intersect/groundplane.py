"""Legacy top-view IoU: footprint overlap on the XZ plane times vertical overlap.

Each box is reduced to the convex hull of its corners projected onto the
ground (XZ) plane and the y-interval spanned by its corners. For boxes that
only rotate about the vertical axis this is exact; pitch or roll inflate
both footprint and height, which is why the exact kernel exists.
"""

from __future__ import annotations

import numpy as np

from cubeval.geometry import Cuboid


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Counter-clockwise hull of 2D points (Andrew's monotone chain)."""
    pts = sorted(map(tuple, np.asarray(points, dtype=float)))
    if len(pts) <= 2:
        return np.array(pts)
    lower: list = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def polygon_area(poly: np.ndarray) -> float:
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def clip_convex(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Intersection of two counter-clockwise convex polygons (Sutherland-Hodgman)."""
    out = [tuple(p) for p in subject]
    n = len(clip)
    for i in range(n):
        if not out:
            break
        a, b = clip[i], clip[(i + 1) % n]
        inp, out = out, []
        s = inp[-1]
        for e in inp:
            e_in = _cross(a, b, e) >= 0
            s_in = _cross(a, b, s) >= 0
            if e_in != s_in:
                ds, de = _cross(a, b, s), _cross(a, b, e)
                t = ds / (ds - de)
                out.append((s[0] + t * (e[0] - s[0]), s[1] + t * (e[1] - s[1])))
            if e_in:
                out.append(e)
            s = e
    return np.array(out)


def footprint(box: Cuboid) -> tuple[np.ndarray, float, float]:
    """Top-view hull (x, z) and vertical extent (y_min, y_max) of ``box``."""
    pts = box.corners()
    return convex_hull(pts[:, [0, 2]]), float(pts[:, 1].min()), float(pts[:, 1].max())


def iou3d_approx_groundplane(b1: Cuboid, b2: Cuboid) -> float:
    poly1, y1lo, y1hi = footprint(b1)
    poly2, y2lo, y2hi = footprint(b2)
    vol1 = polygon_area(poly1) * (y1hi - y1lo)
    vol2 = polygon_area(poly2) * (y2hi - y2lo)
    dy = min(y1hi, y2hi) - max(y1lo, y2lo)
    if dy <= 0:
        return 0.0
    inter = polygon_area(clip_convex(poly1, poly2)) * dy
    union = vol1 + vol2 - inter
    if union <= 0:
        return 0.0
    return float(min(1.0, max(0.0, inter / union)))
