"""Forward values of the corner-space 3D training losses.

Conventions (the losses are only comparable across implementations if these
match):

* L1 between corner sets is the elementwise *sum* of absolute differences
  over the 8x3 array, corners paired by index.
* Chamfer distance is the mean nearest-neighbour Euclidean distance from
  ``a`` to ``b`` plus the same from ``b`` to ``a``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from cubeval.camera import Intrinsics
from cubeval.geometry import CubeParams, Roi2D, decode_cuboid

GROUPS = ("uv", "z", "whl", "pose")
_GROUP_FIELDS = {
    "uv": ("u", "v"),
    "z": ("z",),
    "whl": ("w_bar", "h_bar", "l_bar"),
    "pose": ("p",),
}


@dataclass(frozen=True)
class DecodeContext:
    """Everything besides the 13 parameters needed to build a box."""

    roi: Roi2D
    K: Intrinsics
    priors: Mapping[str, Sequence[float]]
    category: str

    def decode(self, params: CubeParams) -> np.ndarray:
        return decode_cuboid(params, self.roi, self.K, self.priors, self.category).corners()


@dataclass(frozen=True)
class LossBreakdown:
    l_all: float
    l_uv: float
    l_z: float
    l_whl: float
    l_pose: float
    mu: float
    total: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("l_all", "l_uv", "l_z", "l_whl", "l_pose", "mu", "total")}


def chamfer_corners(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float).reshape(-1, 3)
    b = np.asarray(b, dtype=float).reshape(-1, 3)
    dist = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    return float(dist.min(axis=1).mean() + dist.min(axis=0).mean())


def l1_corners(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)).sum())


def pseudo_params(group: str, pred: CubeParams, gt: CubeParams) -> CubeParams:
    """``gt`` with only the variables of ``group`` taken from ``pred``."""
    if group not in _GROUP_FIELDS:
        raise ValueError(f"unknown variable group {group!r}; expected one of {GROUPS}")
    return replace(gt, **{name: getattr(pred, name) for name in _GROUP_FIELDS[group]})


def disentangled_loss(group: str, pred: CubeParams, gt: CubeParams, ctx: DecodeContext) -> float:
    pseudo = ctx.decode(pseudo_params(group, pred, gt))
    target = ctx.decode(gt)
    if group == "pose":
        return chamfer_corners(pseudo, target)
    return l1_corners(pseudo, target)


def total_loss(parts: Sequence[float], mu: float) -> float:
    """Uncertainty-weighted sum ``sqrt(2) * exp(-mu) * sum(parts) + mu``."""
    parts = [float(x) for x in parts]
    if any(x < 0 for x in parts):
        raise ValueError("loss parts must be non-negative")
    return math.sqrt(2.0) * math.exp(-mu) * math.fsum(parts) + mu


def loss_breakdown(pred: CubeParams, gt: CubeParams, ctx: DecodeContext) -> LossBreakdown:
    l_all = chamfer_corners(ctx.decode(pred), ctx.decode(gt))
    parts = {g: disentangled_loss(g, pred, gt, ctx) for g in GROUPS}
    total = total_loss([l_all, *parts.values()], pred.mu)
    return LossBreakdown(l_all, parts["uv"], parts["z"], parts["whl"], parts["pose"], pred.mu, total)
