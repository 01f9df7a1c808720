"""Straight-line AP3D evaluator used to produce golden files.

Deliberately naive: plain loops over raw JSON, no batching, no shared code
with ``cubeval.evaluation``. Only the per-pair exact IoU is borrowed.
"""

import json
import math

from cubeval.geometry import Cuboid
from cubeval.intersect import iou3d

TAUS = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5]
BANDS = [("all", -math.inf, math.inf), ("near", 0.0, 10.0), ("medium", 10.0, 35.0), ("far", 35.0, math.inf)]


def _box(rec):
    r = rec["rotation"]
    return Cuboid(rec["center_cam"], rec["dims"], [r[0:3], r[3:6], r[6:9]])


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, int):
        return str(x)
    return repr(float(x))


def _ap(dets, n_pos):
    # dets: list of (score, is_tp) in canonical order
    if n_pos == 0:
        return None
    if not dets:
        return 0.0
    ranked = sorted(dets, key=lambda d: -d[0])  # stable
    precision, recall = [], []
    tp = fp = 0
    for _, hit in ranked:
        if hit:
            tp += 1
        else:
            fp += 1
        precision.append(tp / (tp + fp))
        recall.append(tp / n_pos)
    for i in range(len(precision) - 2, -1, -1):
        if precision[i + 1] > precision[i]:
            precision[i] = precision[i + 1]
    samples = []
    for k in range(101):
        r = k / 100
        value = 0.0
        for i in range(len(recall)):
            if recall[i] >= r:
                value = precision[i]
                break
        samples.append(value)
    return math.fsum(samples) / 101


def reference_rows(gt_data, pred_data):
    heights = {im["id"]: im["height"] for im in gt_data["images"]}
    cats = {c["name"].strip().lower() for c in gt_data.get("categories", [])}
    cats |= {a["category"].strip().lower() for a in gt_data["annotations"]}
    preds = pred_data["predictions"] if isinstance(pred_data, dict) else pred_data

    rows = []
    for cat in sorted(cats):
        gts = [a for a in gt_data["annotations"] if a["category"].strip().lower() == cat]
        ps = [p for p in preds if p["category"].strip().lower() == cat]
        images = sorted({a["image_id"] for a in gts} | {p["image_id"] for p in ps}, key=lambda i: (type(i).__name__, i))
        for tau in TAUS:
            for band, lo, hi in BANDS:
                dets = []
                n_gt = n_ign = n_tp = 0
                for img in images:
                    g_img = [a for a in gts if a["image_id"] == img]
                    p_img = [p for p in ps if p["image_id"] == img]
                    ignored = []
                    for a in g_img:
                        occ = a.get("occlusion") or 0.0
                        trunc = a.get("truncation") or 0.0
                        ign = occ > 0.66 or trunc > 0.66 or a["bbox2d"][3] / heights[img] < 0.0625
                        z = a["center_cam"][2]
                        if not (lo < z <= hi):
                            ign = True
                        ignored.append(ign)
                    n_gt += ignored.count(False)
                    n_ign += ignored.count(True)
                    order = sorted(range(len(p_img)), key=lambda i: -p_img[i]["score"])
                    used = [False] * len(g_img)
                    for i in order:
                        pbox = _box(p_img[i])
                        ious = [iou3d(pbox, _box(a)) for a in g_img]
                        best, best_iou = None, None
                        for j in range(len(g_img)):
                            if ignored[j] or used[j]:
                                continue
                            if best is None or ious[j] > best_iou:
                                best, best_iou = j, ious[j]
                        if best is not None and best_iou >= tau:
                            used[best] = True
                            dets.append((p_img[i]["score"], True))
                            n_tp += 1
                        elif any(ignored[j] and ious[j] >= tau for j in range(len(g_img))):
                            pass
                        else:
                            dets.append((p_img[i]["score"], False))
                rows.append([cat, tau, band, _ap(dets, n_gt), n_gt, n_ign, len(ps), n_tp])
    return rows


def reference_csv(gt_path, pred_path) -> str:
    with open(gt_path) as f:
        gt = json.load(f)
    with open(pred_path) as f:
        pred = json.load(f)
    lines = ["category,tau,band,ap,n_gt,n_ignored,n_pred,n_tp"]
    for row in reference_rows(gt, pred):
        lines.append(",".join(_fmt(v) if not isinstance(v, str) else v for v in row))
    return "\n".join(lines) + "\n"
