"""Oriented-cuboid intersection: exact kernel, ground-plane baseline, Monte-Carlo oracle."""

from cubeval.intersect.exact import (
    IntersectionShape,
    TriFace,
    box_to_mesh,
    intersect_shape,
    intersection_volume,
    iou3d,
    iou3d_batched,
)

__all__ = [
    "IntersectionShape",
    "TriFace",
    "box_to_mesh",
    "intersect_shape",
    "intersection_volume",
    "iou3d",
    "iou3d_batched",
]

from cubeval.intersect.groundplane import iou3d_approx_groundplane  # noqa: E402
from cubeval.intersect.montecarlo import mc_iou_oracle  # noqa: E402

__all__ += ["iou3d_approx_groundplane", "mc_iou_oracle"]
