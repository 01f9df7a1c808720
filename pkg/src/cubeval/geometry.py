"""Cuboids, rotation parameterizations and decoding of cube-head outputs.

A cuboid is ``corners = R @ diag(d) @ B_unit + X`` where ``B_unit`` holds the
eight corners of the unit cube centered at the origin. Corner ``i`` has sign
bits ``(i & 1, i & 2, i & 4)`` on x, y, z, i.e. x varies fastest, then y,
then z, with a cleared bit meaning ``-0.5``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from cubeval.camera import Intrinsics
from cubeval.errors import DegenerateRotation, NonPositiveDepth

ROTATION_TOL = 1e-9
DEGENERATE_EPS = 1e-12
LOG_DIM_CLAMP = 10.0

UNIT_CORNERS = np.array(
    [[(i & 1) - 0.5, ((i >> 1) & 1) - 0.5, ((i >> 2) & 1) - 0.5] for i in range(8)]
)


class DimensionClampWarning(RuntimeWarning):
    """A log-dimension fell outside [-10, 10] and was clamped."""


def is_rotation(R: np.ndarray, tol: float = ROTATION_TOL) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return bool(
        np.max(np.abs(R.T @ R - np.eye(3))) <= tol and abs(np.linalg.det(R) - 1.0) <= tol
    )


@dataclass(frozen=True, eq=False)
class Cuboid:
    """Oriented box: ``center`` (m), ``dims`` = (w, h, l) along the local x, y, z axes (m),
    and an object-to-camera ``rotation``."""

    center: np.ndarray
    dims: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        center = np.array(self.center, dtype=float).reshape(3)
        dims = np.array(self.dims, dtype=float).reshape(3)
        rotation = np.array(self.rotation, dtype=float).reshape(3, 3)
        if not np.all(np.isfinite(center)):
            raise ValueError("cuboid center must be finite")
        if not (np.all(np.isfinite(dims)) and np.all(dims > 0)):
            raise ValueError(f"cuboid dims must be positive, got {dims.tolist()}")
        if not is_rotation(rotation):
            raise ValueError("cuboid rotation is not a proper rotation matrix")
        for arr in (center, dims, rotation):
            arr.flags.writeable = False
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "rotation", rotation)

    @classmethod
    def axis_aligned(cls, center, dims) -> "Cuboid":
        return cls(center, dims, np.eye(3))

    @property
    def volume(self) -> float:
        return float(self.dims[0] * self.dims[1] * self.dims[2])

    def corners(self) -> np.ndarray:
        return corners(self)

    def transformed(self, R: np.ndarray, t=(0.0, 0.0, 0.0), scale: float = 1.0) -> "Cuboid":
        """Apply ``x -> scale * (R @ x) + t`` to the box."""
        R = np.asarray(R, dtype=float)
        return Cuboid(scale * (R @ self.center) + np.asarray(t, float), scale * self.dims, R @ self.rotation)

    def to_dict(self) -> dict:
        return {
            "center": self.center.tolist(),
            "dims": self.dims.tolist(),
            "rotation": self.rotation.reshape(9).tolist(),
        }

    def __repr__(self):
        return f"Cuboid(center={self.center.tolist()}, dims={self.dims.tolist()})"


def corners(c: Cuboid) -> np.ndarray:
    """The 8 corners of ``c`` as an ``(8, 3)`` array in the documented order."""
    return (UNIT_CORNERS * c.dims) @ c.rotation.T + c.center


def rot6d_to_matrix(p: Sequence[float]) -> np.ndarray:
    """Gram-Schmidt the two stacked 3-vectors of ``p`` into a rotation matrix.

    Column 1 is ``p[:3]`` normalized, column 2 is the part of ``p[3:]``
    orthogonal to it, and column 3 their cross product.
    """
    p = np.asarray(p, dtype=float).reshape(6)
    p1, p2 = p[:3], p[3:]
    n1 = np.linalg.norm(p1)
    if not n1 > DEGENERATE_EPS:
        raise DegenerateRotation("first direction vector of 6D rotation is zero")
    if not np.linalg.norm(np.cross(p1, p2)) > DEGENERATE_EPS:
        raise DegenerateRotation("6D rotation direction vectors are parallel or zero")
    r1 = p1 / n1
    r2 = p2 - np.dot(r1, p2) * r1
    r2 = r2 / np.linalg.norm(r2)
    r3 = np.cross(r1, r2)
    return np.stack([r1, r2, r3], axis=1)


def matrix_to_rot6d(R: np.ndarray) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    return np.concatenate([R[:, 0], R[:, 1]])


def axis_angle_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation about the unit vector ``axis``."""
    x, y, z = axis
    c, s = math.cos(angle), math.sin(angle)
    C = 1.0 - c
    return np.array(
        [
            [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
            [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
            [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
        ]
    )


def ray_alignment(u_px: float, v_px: float, K: Intrinsics) -> np.ndarray:
    """Rotation taking allocentric to egocentric orientation for the ray through ``(u_px, v_px)``.

    The ray direction ``o`` is compared with the principal axis ``a = +z``;
    the result rotates by ``acos(o . a)`` about ``o x a``. On the principal
    ray the axis is undefined and the identity is returned.
    """
    o = np.array([(u_px - K.px) / K.fx, (v_px - K.py) / K.fy, 1.0])
    o /= np.linalg.norm(o)
    axis = np.array([o[1], -o[0], 0.0])  # o x (0, 0, 1)
    n = np.linalg.norm(axis)
    if n < DEGENERATE_EPS:
        return np.eye(3)
    angle = math.acos(min(1.0, max(-1.0, o[2])))
    return axis_angle_matrix(axis / n, angle)


def allocentric_to_egocentric(Ra: np.ndarray, u_px: float, v_px: float, K: Intrinsics) -> np.ndarray:
    return ray_alignment(u_px, v_px, K) @ np.asarray(Ra, dtype=float)


def egocentric_to_allocentric(R: np.ndarray, u_px: float, v_px: float, K: Intrinsics) -> np.ndarray:
    return ray_alignment(u_px, v_px, K).T @ np.asarray(R, dtype=float)


@dataclass(frozen=True)
class Roi2D:
    """2D box in pixels: top-left ``(rx, ry)``, width ``rw``, height ``rh``."""

    rx: float
    ry: float
    rw: float
    rh: float

    def __post_init__(self):
        if not (self.rw > 0 and self.rh > 0):
            raise ValueError(f"RoI width and height must be positive, got {self.rw!r}, {self.rh!r}")


@dataclass(frozen=True)
class CubeParams:
    """The 13 cube-head outputs.

    ``u, v`` locate the projected center inside the RoI as fractions of its
    width and height, measured from the top-left corner, so (0.5, 0.5) is
    the RoI center. ``z`` is metric depth (convert virtual depth first).
    ``w_bar, h_bar, l_bar`` are log-ratios to the category mean dims.
    """

    u: float
    v: float
    z: float
    w_bar: float
    h_bar: float
    l_bar: float
    p: tuple
    mu: float = 0.0

    def __post_init__(self):
        p = tuple(float(x) for x in self.p)
        if len(p) != 6:
            raise ValueError("6D rotation needs exactly 6 numbers")
        object.__setattr__(self, "p", p)


CategoryPriors = Mapping[str, Sequence[float]]


def projected_center(params: CubeParams, roi: Roi2D) -> tuple[float, float]:
    return roi.rx + params.u * roi.rw, roi.ry + params.v * roi.rh


def decode_dims(params: CubeParams, prior: Sequence[float], strict: bool = False) -> np.ndarray:
    logs = np.array([params.w_bar, params.h_bar, params.l_bar], dtype=float)
    clamped = np.clip(logs, -LOG_DIM_CLAMP, LOG_DIM_CLAMP)
    if np.any(clamped != logs):
        msg = f"log-dimensions {logs.tolist()} outside [-{LOG_DIM_CLAMP}, {LOG_DIM_CLAMP}]"
        if strict:
            raise ValueError(msg)
        warnings.warn(msg, DimensionClampWarning, stacklevel=3)
    prior = np.asarray(prior, dtype=float)
    if prior.shape != (3,) or np.any(prior <= 0):
        raise ValueError(f"category prior dims must be 3 positive numbers, got {prior.tolist()}")
    return np.exp(clamped) * prior


def decode_cuboid(
    params: CubeParams,
    roi: Roi2D,
    K: Intrinsics,
    priors: CategoryPriors,
    category: str,
    strict: bool = False,
) -> Cuboid:
    """Turn cube-head outputs into a camera-frame :class:`Cuboid`."""
    if not params.z > 0:
        raise NonPositiveDepth(f"decoded depth must be positive, got {params.z!r}")
    u_px, v_px = projected_center(params, roi)
    z = params.z
    center = np.array([z / K.fx * (u_px - K.px), z / K.fy * (v_px - K.py), z])
    dims = decode_dims(params, priors[category], strict=strict)
    R = allocentric_to_egocentric(rot6d_to_matrix(params.p), u_px, v_px, K)
    return Cuboid(center, dims, R)


def score_fusion(s: float, mu: float) -> float:
    """Final detection score from classification score ``s`` and 3D uncertainty ``mu``."""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"classification score must lie in [0, 1], got {s!r}")
    return math.sqrt(s * math.exp(-mu))
