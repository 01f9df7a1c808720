"""Pinhole intrinsics, projection and the virtual-depth transform.

Coordinates follow the camera convention +x right, +y down, +z forward.

Virtual depth rescales metric depth so that every image looks as if it was
taken by one shared "virtual" camera with focal length ``f_v`` and image
height ``H_v``::

    z_v = z * (f_v / fy) * (H / H_v)

The vertical focal length ``fy`` is used because the derivation is carried
out on image rows; for square pixels ``fx == fy`` and the choice is moot.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from cubeval.errors import BehindCamera, NonPositiveDepth


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole camera with principal point ``(px, py)`` and image size ``height x width``.

    ``estimated`` marks intrinsics that were guessed (see :func:`fallback_intrinsics`).
    """

    fx: float
    fy: float
    px: float
    py: float
    height: float
    width: float
    estimated: bool = False
    # H / fy is invariant under image rescaling; carried separately so that
    # rescale() does not perturb it with rounding.
    height_over_fy: float = field(default=0.0, repr=False, compare=False)

    def __post_init__(self):
        for name in ("fx", "fy", "height", "width"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"intrinsics {name} must be positive, got {value!r}")
        if not (np.isfinite(self.px) and np.isfinite(self.py)):
            raise ValueError("principal point must be finite")
        if self.height_over_fy <= 0:
            object.__setattr__(self, "height_over_fy", self.height / self.fy)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.px], [0.0, self.fy, self.py], [0.0, 0.0, 1.0]])

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "px": self.px, "py": self.py}


@dataclass(frozen=True)
class VirtualCamera:
    f_v: float = 512.0
    H_v: float = 512.0

    def __post_init__(self):
        if not (self.f_v > 0 and self.H_v > 0):
            raise ValueError("virtual focal length and height must be positive")


def fallback_intrinsics(height: float, width: float) -> Intrinsics:
    """Guess intrinsics for an uncalibrated image: f = 2H, principal point at the center."""
    f = 2.0 * height
    return Intrinsics(f, f, width / 2.0, height / 2.0, height, width, estimated=True)


def rescale(K: Intrinsics, s: float) -> Intrinsics:
    """Intrinsics of the same camera after resizing the image by factor ``s``."""
    if not s > 0:
        raise ValueError(f"scale must be positive, got {s!r}")
    return Intrinsics(
        K.fx * s,
        K.fy * s,
        K.px * s,
        K.py * s,
        K.height * s,
        K.width * s,
        estimated=K.estimated,
        height_over_fy=K.height_over_fy,
    )


def to_virtual_depth(z: float, K: Intrinsics, V: VirtualCamera = VirtualCamera()) -> float:
    if not z > 0:
        raise NonPositiveDepth(f"depth must be positive, got {z!r}")
    return z * (V.f_v / V.H_v) * K.height_over_fy


def from_virtual_depth(z_v: float, K: Intrinsics, V: VirtualCamera = VirtualCamera()) -> float:
    if not z_v > 0:
        raise NonPositiveDepth(f"virtual depth must be positive, got {z_v!r}")
    return z_v / ((V.f_v / V.H_v) * K.height_over_fy)


def project(X, K: Intrinsics) -> tuple[float, float]:
    """Project a camera-frame point to pixel coordinates."""
    x, y, z = (float(c) for c in X)
    if not z > 0:
        raise BehindCamera(f"point has non-positive depth {z!r}")
    return K.fx * x / z + K.px, K.fy * y / z + K.py


def project_many(X: np.ndarray, K: Intrinsics) -> np.ndarray:
    """Vectorized :func:`project` for an ``(N, 3)`` array; returns ``(N, 2)``."""
    X = np.asarray(X, dtype=float).reshape(-1, 3)
    if np.any(X[:, 2] <= 0):
        raise BehindCamera("at least one point has non-positive depth")
    return np.stack(
        [K.fx * X[:, 0] / X[:, 2] + K.px, K.fy * X[:, 1] / X[:, 2] + K.py], axis=1
    )


def backproject(x: float, y: float, z: float, K: Intrinsics) -> np.ndarray:
    """Camera-frame point at depth ``z`` that projects onto pixel ``(x, y)``."""
    if not z > 0:
        raise NonPositiveDepth(f"depth must be positive, got {z!r}")
    return np.array([z / K.fx * (x - K.px), z / K.fy * (y - K.py), z])
