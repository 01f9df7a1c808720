"""Exact IoU of oriented cuboids by clipping box surfaces.

The boundary of ``A & B`` is made of the parts of A's faces that lie inside
B plus the parts of B's faces that lie inside A. Each box is a 12-triangle
mesh; every triangle is clipped against the six half-spaces of the other box
and the surviving convex polygon is fan-triangulated. When a face of B lies
in the same plane as a face of A, both passes would emit the same patch. The
tie goes to A: A's faces are clipped against B grown by ``eps`` and B's faces
against A shrunk by ``eps``, so a coincident patch survives exactly once.

Where a face of B is nearly but not exactly in the plane of a face of A, the
crossing points are ill-conditioned and the two passes would tile the plane
inconsistently. Such a pair (same facing, all corners within ``snap`` of the
other plane, and the plane cutting the face) is snapped: B's face is dropped
and A's faces ignore that plane of B, which intersects A with B's face moved
onto A's plane. The volume error is at most ``snap`` times the face area.

``eps`` and ``snap`` are ``PLANE_RTOL`` and ``SNAP_RTOL`` times the largest
coordinate of the pair in a frame centred on A. Volume is the
divergence-theorem sum of signed tetrahedra against the centroid of all
fragment vertices.

All numeric work happens in numba kernels compiled with ``nogil`` so the
batched entry point can fan rows out to a thread pool.
"""

from __future__ import annotations

import os
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numba as nb
import numpy as np

from cubeval.geometry import UNIT_CORNERS, Cuboid

PLANE_RTOL = 1e-13
SNAP_RTOL = 1e-8
AREA_EPS = 1e-12
VOLUME_RTOL = 1e-13
THREADS_ENV = "CUBEVAL_THREADS"

_MAX_TRIS = 192
_MAX_POLY = 16

# outward (counter-clockwise seen from outside) quads, faces -x, +x, -y, +y, -z, +z
FACE_QUADS = np.array(
    [[0, 4, 6, 2], [1, 3, 7, 5], [0, 1, 5, 4], [2, 6, 7, 3], [0, 2, 3, 1], [4, 5, 7, 6]],
    dtype=np.int64,
)
# TRIANGLES[2 * f] and TRIANGLES[2 * f + 1] tile face f
TRIANGLES = np.array(
    [tri for q in FACE_QUADS for tri in ([q[0], q[1], q[2]], [q[0], q[2], q[3]])],
    dtype=np.int64,
)


def pack(boxes: Sequence[Cuboid]):
    """Precompute centers ``(N, 3)``, corner offsets ``(N, 8, 3)``, face planes ``(N, 6, 4)`` and volumes ``(N,)``.

    Offsets and planes are relative to each box's own center, so two boxes far
    from the origin still meet in a frame where their coordinates are small.
    Plane ``f`` is ``(n, d)`` with outward unit normal ``n``; a point ``x``
    relative to the center is inside when ``n . x <= d``.
    """
    n = len(boxes)
    centers = np.empty((n, 3))
    offsets = np.empty((n, 8, 3))
    planes = np.empty((n, 6, 4))
    volumes = np.empty(n)
    for i, b in enumerate(boxes):
        centers[i] = b.center
        offsets[i] = (UNIT_CORNERS * b.dims) @ b.rotation.T
        for f in range(6):
            k = f // 2
            sign = 1.0 if f % 2 else -1.0
            planes[i, f, :3] = sign * b.rotation[:, k]
            planes[i, f, 3] = 0.5 * b.dims[k]
        volumes[i] = b.volume
    return centers, offsets, planes, volumes


@nb.njit(cache=True, nogil=True)
def _clip_polygon(poly, n, plane, bound, out):
    """Sutherland-Hodgman clip of ``poly[:n]`` to ``n . x - d <= bound``; returns new count.

    New vertices are placed on the true plane, clamped to the clipped edge.
    """
    m = 0
    if n == 0:
        return 0
    px, py, pz = poly[n - 1, 0], poly[n - 1, 1], poly[n - 1, 2]
    dp = plane[0] * px + plane[1] * py + plane[2] * pz - plane[3]
    for i in range(n):
        qx, qy, qz = poly[i, 0], poly[i, 1], poly[i, 2]
        dq = plane[0] * qx + plane[1] * qy + plane[2] * qz - plane[3]
        p_in = dp <= bound
        q_in = dq <= bound
        if p_in != q_in:
            t = min(max(dp / (dp - dq), 0.0), 1.0)
            out[m, 0] = px + t * (qx - px)
            out[m, 1] = py + t * (qy - py)
            out[m, 2] = pz + t * (qz - pz)
            m += 1
        if q_in:
            out[m, 0] = qx
            out[m, 1] = qy
            out[m, 2] = qz
            m += 1
        px, py, pz, dp = qx, qy, qz, dq
    return m


@nb.njit(cache=True, nogil=True)
def _clip_box_surface(src_corners, dst_planes, bound, skip_faces, skip_planes, tag, tris, tags, count, buf_a, buf_b):
    """Append the fragments of ``src`` faces lying inside ``dst`` to ``tris``."""
    for t in range(12):
        if skip_faces[t // 2]:
            continue
        for v in range(3):
            c = TRIANGLES[t, v]
            buf_a[v, 0] = src_corners[c, 0]
            buf_a[v, 1] = src_corners[c, 1]
            buf_a[v, 2] = src_corners[c, 2]
        n = 3
        src = buf_a
        dst = buf_b
        for f in range(6):
            if skip_planes[f]:
                continue
            n = _clip_polygon(src, n, dst_planes[f], bound, dst)
            src, dst = dst, src
            if n < 3:
                break
        if n < 3:
            continue
        # slivers are kept: dropping them would open holes in the surface
        for k in range(1, n - 1):
            for d in range(3):
                tris[count, 0, d] = src[0, d]
                tris[count, 1, d] = src[k, d]
                tris[count, 2, d] = src[k + 1, d]
            tags[count] = tag
            count += 1
    return count


@nb.njit(cache=True, nogil=True)
def _face_range(corners, face, plane):
    lo = np.inf
    hi = -np.inf
    for k in range(4):
        c = FACE_QUADS[face, k]
        d = plane[0] * corners[c, 0] + plane[1] * corners[c, 1] + plane[2] * corners[c, 2] - plane[3]
        lo = min(lo, d)
        hi = max(hi, d)
    return lo, hi


@nb.njit(cache=True, nogil=True)
def _snap_faces(ca, pa, cb, pb, eps, snap, out):
    """Mark faces of B to be snapped onto a nearly coincident face of A."""
    for fb in range(6):
        out[fb] = False
        for fa in range(6):
            if pa[fa, 0] * pb[fb, 0] + pa[fa, 1] * pb[fb, 1] + pa[fa, 2] * pb[fb, 2] <= 0.0:
                continue
            blo, bhi = _face_range(cb, fb, pa[fa])
            alo, ahi = _face_range(ca, fa, pb[fb])
            if max(-blo, bhi, -alo, ahi) > snap:
                continue
            # parallel faces apart by more than eps clip cleanly
            if (blo <= eps and bhi >= -eps) or (alo <= eps and ahi >= -eps):
                out[fb] = True
                break


@nb.njit(cache=True, nogil=True)
def _aabb_disjoint(ca, cb):
    for d in range(3):
        amin = ca[0, d]
        amax = ca[0, d]
        bmin = cb[0, d]
        bmax = cb[0, d]
        for i in range(1, 8):
            amin = min(amin, ca[i, d])
            amax = max(amax, ca[i, d])
            bmin = min(bmin, cb[i, d])
            bmax = max(bmax, cb[i, d])
        if amin > bmax or bmin > amax:
            return True
    return False


@nb.njit(cache=True, nogil=True)
def _to_local(offsets, planes, shift, c_out, p_out):
    for i in range(8):
        for d in range(3):
            c_out[i, d] = offsets[i, d] + shift[d]
    for f in range(6):
        p_out[f, 0] = planes[f, 0]
        p_out[f, 1] = planes[f, 1]
        p_out[f, 2] = planes[f, 2]
        p_out[f, 3] = planes[f, 3] + planes[f, 0] * shift[0] + planes[f, 1] * shift[1] + planes[f, 2] * shift[2]


@nb.njit(cache=True, nogil=True)
def _intersection_mesh(xa, oa, pa, xb, ob, pb, tris, tags, work):
    """Fill ``tris``/``tags`` with the intersection surface; returns the triangle count.

    Vertices are relative to the center ``xa`` of box A: clipping in that frame
    keeps roundoff, and with it ``eps``, from growing with distance to the
    camera.
    """
    zero = work.shift_a
    shift = work.shift_b
    for d in range(3):
        zero[d] = 0.0
        shift[d] = xb[d] - xa[d]
    _to_local(oa, pa, zero, work.ca, work.pa)
    _to_local(ob, pb, shift, work.cb, work.pb)
    if _aabb_disjoint(work.ca, work.cb):
        return 0
    scale = 0.0
    for i in range(8):
        for d in range(3):
            scale = max(scale, abs(work.ca[i, d]), abs(work.cb[i, d]))
    eps = PLANE_RTOL * scale
    _snap_faces(work.ca, work.pa, work.cb, work.pb, eps, SNAP_RTOL * scale, work.snapped)
    count = _clip_box_surface(work.ca, work.pb, eps, work.none, work.snapped, 1, tris, tags, 0, work.buf_a, work.buf_b)
    count = _clip_box_surface(
        work.cb, work.pa, -eps, work.snapped, work.none, 2, tris, tags, count, work.buf_a, work.buf_b
    )
    return count


@nb.njit(cache=True, nogil=True)
def _mesh_volume(tris, count):
    if count == 0:
        return 0.0
    gx = 0.0
    gy = 0.0
    gz = 0.0
    for i in range(count):
        for v in range(3):
            gx += tris[i, v, 0]
            gy += tris[i, v, 1]
            gz += tris[i, v, 2]
    m = 3.0 * count
    gx /= m
    gy /= m
    gz /= m
    total = 0.0
    for i in range(count):
        ax = tris[i, 0, 0] - gx
        ay = tris[i, 0, 1] - gy
        az = tris[i, 0, 2] - gz
        bx = tris[i, 1, 0] - gx
        by = tris[i, 1, 1] - gy
        bz = tris[i, 1, 2] - gz
        cx = tris[i, 2, 0] - gx
        cy = tris[i, 2, 1] - gy
        cz = tris[i, 2, 2] - gz
        total += ax * (by * cz - bz * cy) + ay * (bz * cx - bx * cz) + az * (bx * cy - by * cx)
    return abs(total) / 6.0


@nb.njit(cache=True, nogil=True)
def _iou_from_volumes(inter, va, vb):
    # snap roundoff-level differences so identical boxes give exactly 1 and
    # touching boxes exactly 0
    vmin = min(va, vb)
    if inter >= vmin * (1.0 - VOLUME_RTOL):
        inter = vmin
    elif inter <= vmin * VOLUME_RTOL:
        return 0.0
    union = va + vb - inter
    if union <= 0.0:
        return 0.0
    iou = inter / union
    if iou < 0.0:
        return 0.0
    if iou > 1.0:
        return 1.0
    return iou


_Work = namedtuple("_Work", "shift_a shift_b ca pa cb pb buf_a buf_b snapped none")


@nb.njit(cache=True, nogil=True)
def _make_work():
    return _Work(
        np.zeros(3),
        np.zeros(3),
        np.empty((8, 3)),
        np.empty((6, 4)),
        np.empty((8, 3)),
        np.empty((6, 4)),
        np.empty((_MAX_POLY, 3)),
        np.empty((_MAX_POLY, 3)),
        np.zeros(6, dtype=np.bool_),
        np.zeros(6, dtype=np.bool_),
    )


@nb.njit(cache=True, nogil=True)
def _iou_rows(a_x, a_o, a_p, a_v, b_x, b_o, b_p, b_v, out, row_start, row_end):
    tris = np.empty((_MAX_TRIS, 3, 3))
    tags = np.empty(_MAX_TRIS, dtype=np.int8)
    work = _make_work()
    for i in range(row_start, row_end):
        for j in range(b_x.shape[0]):
            count = _intersection_mesh(a_x[i], a_o[i], a_p[i], b_x[j], b_o[j], b_p[j], tris, tags, work)
            inter = _mesh_volume(tris, count)
            out[i, j] = _iou_from_volumes(inter, a_v[i], b_v[j])


@nb.njit(cache=True, nogil=True)
def _mesh_pair(xa, oa, pa, xb, ob, pb, tris, tags):
    work = _make_work()
    count = _intersection_mesh(xa, oa, pa, xb, ob, pb, tris, tags, work)
    return count, _mesh_volume(tris, count)


@dataclass(frozen=True)
class TriFace:
    vertices: np.ndarray  # (3, 3)
    source: int  # 1 or 2: which input box the fragment came from

    @property
    def area(self) -> float:
        a, b, c = self.vertices
        return 0.5 * float(np.linalg.norm(np.cross(b - a, c - a)))


@dataclass(frozen=True)
class IntersectionShape:
    faces: list
    volume: float

    @property
    def vertices(self) -> np.ndarray:
        if not self.faces:
            return np.empty((0, 3))
        return np.concatenate([f.vertices for f in self.faces])


def box_to_mesh(c: Cuboid) -> list[TriFace]:
    """12 outward-wound triangles covering the surface of ``c``."""
    pts = c.corners()
    return [TriFace(pts[t].copy(), 1) for t in TRIANGLES]


def intersect_shape(b1: Cuboid, b2: Cuboid) -> IntersectionShape:
    """Surface fragments and volume of ``b1 & b2``.

    The volume counts every fragment; the returned faces leave out slivers of
    area ``AREA_EPS`` or less.
    """
    xa, oa, pa, _ = pack([b1])
    xb, ob, pb, _ = pack([b2])
    tris = np.empty((_MAX_TRIS, 3, 3))
    tags = np.empty(_MAX_TRIS, dtype=np.int8)
    count, volume = _mesh_pair(xa[0], oa[0], pa[0], xb[0], ob[0], pb[0], tris, tags)
    faces = [TriFace(tris[i] + xa[0], int(tags[i])) for i in range(count)]
    faces = [f for f in faces if f.area > AREA_EPS]
    return IntersectionShape(faces, float(volume))


def intersection_volume(b1: Cuboid, b2: Cuboid) -> float:
    return intersect_shape(b1, b2).volume


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def iou3d_packed(a, b, threads: int | None = None) -> np.ndarray:
    """IoU matrix between two :func:`pack` results."""
    n, m = a[0].shape[0], b[0].shape[0]
    out = np.zeros((n, m))
    if n == 0 or m == 0:
        return out
    threads = default_threads() if threads is None else max(1, int(threads))
    threads = min(threads, n)
    if threads == 1:
        _iou_rows(*a, *b, out, 0, n)
        return out
    bounds = np.linspace(0, n, threads + 1).astype(int)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        jobs = [
            pool.submit(_iou_rows, *a, *b, out, int(lo), int(hi))
            for lo, hi in zip(bounds[:-1], bounds[1:])
            if hi > lo
        ]
        for job in jobs:
            job.result()
    return out


def iou3d_batched(preds: Sequence[Cuboid], gts: Sequence[Cuboid], threads: int | None = None) -> np.ndarray:
    """``(N, M)`` matrix of exact IoUs; rows are predictions, columns ground truths.

    Every entry is bit-identical to :func:`iou3d` on the same pair, whatever
    the thread count.
    """
    return iou3d_packed(pack(preds), pack(gts), threads=threads)


def iou3d(b1: Cuboid, b2: Cuboid) -> float:
    """Exact intersection-over-union of two oriented cuboids."""
    return float(iou3d_packed(pack([b1]), pack([b2]), threads=1)[0, 0])
