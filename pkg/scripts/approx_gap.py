"""How far the ground-plane IoU drifts from the exact one as boxes pitch.

    python scripts/approx_gap.py [--pairs 2000] [--seed 0]

Prints one CSV row per pitch level: the pitch in degrees, then the mean and
max absolute error of the approximation, then the fraction of pairs where
the two disagree at the 0.25 and 0.5 thresholds.
"""

import argparse

import numpy as np

from cubeval.geometry import Cuboid, axis_angle_matrix
from cubeval.intersect import iou3d, iou3d_approx_groundplane
from cubeval.synthetic import yaw_rotation


def pair(rng, pitch):
    def one(center):
        R = axis_angle_matrix(np.array([1.0, 0.0, 0.0]), rng.normal(scale=pitch)) @ yaw_rotation(rng.uniform(-np.pi, np.pi))
        return Cuboid(center, rng.uniform(0.5, 4.0, 3), R)

    a = one(rng.uniform(-1, 1, 3))
    return a, one(a.center + rng.normal(scale=0.5, size=3))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pairs", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    print("pitch_deg,mean_abs_err,max_abs_err,flip_at_0.25,flip_at_0.5")
    for deg in (0, 1, 2, 5, 10, 20, 30):
        rng = np.random.default_rng(args.seed)
        errs, flips = [], {0.25: 0, 0.5: 0}
        for _ in range(args.pairs):
            a, b = pair(rng, np.radians(deg))
            e, x = iou3d(a, b), iou3d_approx_groundplane(a, b)
            errs.append(abs(e - x))
            for t in flips:
                flips[t] += (e >= t) != (x >= t)
        errs = np.array(errs)
        print(f"{deg},{errs.mean():.3g},{errs.max():.3g},{flips[0.25] / args.pairs:.3g},{flips[0.5] / args.pairs:.3g}")


if __name__ == "__main__":
    main()
