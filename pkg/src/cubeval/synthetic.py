"""Seeded random cuboids for benchmarks, scripts and tests."""

from __future__ import annotations

import numpy as np

from cubeval.geometry import Cuboid


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Haar-uniform rotation from the QR factorization of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 2] = -q[:, 2]
    return q


def yaw_rotation(angle: float) -> np.ndarray:
    """Rotation about the vertical (+y) camera axis."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def random_cuboid(rng: np.random.Generator, center_scale: float = 1.0, dim_range=(0.1, 5.0)) -> Cuboid:
    return Cuboid(
        rng.normal(size=3) * center_scale,
        rng.uniform(*dim_range, size=3),
        random_rotation(rng),
    )


def random_cuboids(n: int, seed: int = 0, center_scale: float = 1.0, dim_range=(0.1, 5.0)) -> list[Cuboid]:
    rng = np.random.default_rng(seed)
    return [random_cuboid(rng, center_scale, dim_range) for _ in range(n)]


def overlapping_pair(rng: np.random.Generator, dim_range=(0.1, 5.0)) -> tuple[Cuboid, Cuboid]:
    """Two randomly posed boxes whose centers are close enough to usually overlap."""
    a = random_cuboid(rng, 1.0, dim_range)
    dims = rng.uniform(*dim_range, size=3)
    offset = rng.normal(size=3) * 0.25 * (a.dims + dims)
    return a, Cuboid(a.center + offset, dims, random_rotation(rng))
