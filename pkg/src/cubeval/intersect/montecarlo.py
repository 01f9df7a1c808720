"""Monte-Carlo IoU estimate, used to cross-check the exact kernel."""

from __future__ import annotations

import numpy as np

from cubeval.geometry import Cuboid

_CHUNK = 1 << 18


def inside(box: Cuboid, points: np.ndarray) -> np.ndarray:
    """Boolean mask of ``points`` (N, 3) lying in the closed box."""
    local = (points - box.center) @ box.rotation
    return np.all(np.abs(local) <= 0.5 * box.dims, axis=1)


def mc_iou_oracle(b1: Cuboid, b2: Cuboid, n_samples: int = 1_000_000, seed: int = 0) -> tuple[float, float]:
    """Estimate IoU by uniform sampling of the joint axis-aligned bounding box.

    Points outside both boxes are rejected; among the rest the fraction
    inside both is a binomial proportion whose standard error is returned
    alongside the estimate.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    pts = np.concatenate([b1.corners(), b2.corners()])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    rng = np.random.default_rng(seed)
    n_union = 0
    n_both = 0
    remaining = n_samples
    while remaining > 0:
        k = min(remaining, _CHUNK)
        sample = lo + (hi - lo) * rng.random((k, 3))
        in1 = inside(b1, sample)
        in2 = inside(b2, sample)
        n_union += int(np.count_nonzero(in1 | in2))
        n_both += int(np.count_nonzero(in1 & in2))
        remaining -= k
    if n_union == 0:
        return 0.0, 0.0
    p = n_both / n_union
    return p, float(np.sqrt(p * (1.0 - p) / n_union))
