"""Loop-based dataset statistics, the reference for ``cubeval.dataset.stats``."""

import math

GRID = 64
DEPTH = (0.0, 20.0)
XR = (-10.0, 10.0)


def _bin(value, lo, hi, n):
    if not (lo <= value <= hi):
        return None
    return min(int((value - lo) / (hi - lo) * n), n - 1)


def _pearson(xs, ys):
    n = len(xs)
    if n < 2:
        return None
    mx, my = sum(xs) / n, sum(ys) / n
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    sxx = sum((x - mx) ** 2 for x in xs)
    syy = sum((y - my) ** 2 for y in ys)
    if sxx == 0 or syy == 0:
        return None
    return sxy / math.sqrt(sxx * syy)


def reference_stats(data):
    images = {im["id"]: im for im in data["images"]}
    center = [[0] * GRID for _ in range(GRID)]
    xz = [[0] * GRID for _ in range(GRID)]
    size = [0] * GRID
    spill = {"center": 0, "xz": 0, "size": 0}
    counts = {}
    ys, zs, sizes = [], [], []
    estimated = set()
    for a in data["annotations"]:
        im = images[a["image_id"]]
        W, H = im["width"], im["height"]
        k = im.get("intrinsics")
        if k is None:
            estimated.add(im["id"])
            k = {"fx": 2 * H, "fy": 2 * H, "px": W / 2, "py": H / 2}
        X, Y, Z = a["center_cam"]
        rel = math.sqrt(a["bbox2d"][2] * a["bbox2d"][3] / (W * H))
        cat = a["category"].strip().lower()
        counts[cat] = counts.get(cat, 0) + 1

        placed = False
        if Z > 0:
            u = (k["fx"] * X / Z + k["px"]) / W
            v = (k["fy"] * Y / Z + k["py"]) / H
            ys.append(v)
            zs.append(Z)
            sizes.append(rel)
            bu, bv = _bin(u, 0.0, 1.0, GRID), _bin(v, 0.0, 1.0, GRID)
            if bu is not None and bv is not None:
                center[bv][bu] += 1
                placed = True
        if not placed:
            spill["center"] += 1

        bz, bx = _bin(Z, *DEPTH, GRID), _bin(X, *XR, GRID)
        if bz is None or bx is None:
            spill["xz"] += 1
        else:
            xz[bz][bx] += 1

        bs = _bin(rel, 0.0, 1.0, GRID)
        if bs is None:
            spill["size"] += 1
        else:
            size[bs] += 1

    return {
        "n_annotations": len(data["annotations"]),
        "category_counts": dict(sorted(counts.items())),
        "correlation": {"y_norm_vs_z": _pearson(ys, zs), "rel_size_vs_z": _pearson(sizes, zs)},
        "n_estimated_intrinsics": len(estimated),
        "center_hist": {"spill": spill["center"], "counts": center},
        "xz_hist": {"spill": spill["xz"], "counts": xz},
        "size_hist": {"spill": spill["size"], "counts": size},
    }
