"""Regenerate the synthetic JSON fixtures under tests/data/.

    python scripts/make_fixtures.py
"""

import json
from pathlib import Path

import numpy as np

from cubeval.camera import Intrinsics, project_many
from cubeval.geometry import Cuboid
from cubeval.synthetic import random_rotation, yaw_rotation

DATA = Path(__file__).resolve().parents[1] / "tests" / "data"
K = Intrinsics(720.0, 720.0, 640.0, 360.0, 720.0, 1280.0)
DIMS = {"car": (1.8, 1.5, 4.2), "chair": (0.5, 0.9, 0.5)}


def bbox2d(box: Cuboid):
    uv = project_many(box.corners(), K)
    lo, hi = uv.min(axis=0), uv.max(axis=0)
    return [round(float(lo[0]), 3), round(float(lo[1]), 3), round(float(hi[0] - lo[0]), 3), round(float(hi[1] - lo[1]), 3)]


def ann(image_id, cat, box, **extra):
    out = {
        "image_id": image_id,
        "category": cat,
        "bbox2d": bbox2d(box),
        "center_cam": box.center.tolist(),
        "rotation": box.rotation.reshape(9).tolist(),
        "dims": box.dims.tolist(),
    }
    out.update(extra)
    return out


def perturb(rng, box: Cuboid, pos=0.15, dim=0.1, yaw=0.15) -> Cuboid:
    return Cuboid(
        box.center + rng.normal(scale=pos, size=3) * box.dims,
        box.dims * np.exp(rng.normal(scale=dim, size=3)),
        yaw_rotation(rng.normal(scale=yaw)) @ box.rotation,
    )


def eval_fixture():
    rng = np.random.default_rng(7)
    images, gts, preds = [], [], []
    layout = {
        1: [("car", (2.0, 1.2, 8.0)), ("car", (-3.0, 1.3, 15.0)), ("chair", (0.5, 0.4, 3.0)), ("chair", (-0.6, 0.4, 3.5))],
        2: [("car", (1.0, 1.4, 25.0)), ("car", (-4.0, 1.4, 40.0)), ("car", (3.5, 1.2, 6.0)), ("chair", (0.2, 0.5, 2.5))],
        3: [("chair", (-1.0, 0.6, 4.0)), ("chair", (1.2, 0.6, 12.0)), ("car", (0.0, 1.5, 50.0)), ("car", (2.0, 0.0, 36.0), (2.5, 3.5, 10.0))],
    }
    aid = 0
    for image_id, objs in layout.items():
        images.append({"id": image_id, "width": K.width, "height": K.height, "intrinsics": K.to_dict(), "source": "synthetic", "split": "test"})
        for cat, center, *dims in objs:
            box = Cuboid(center, dims[0] if dims else DIMS[cat], yaw_rotation(rng.uniform(-np.pi, np.pi)))
            extra = {"id": aid}
            if aid == 3:
                extra["occlusion"] = 0.8
            if aid == 6:
                extra["truncation"] = 0.1
            gts.append(ann(image_id, cat, box, **extra))
            aid += 1
            for k in range(int(rng.integers(0, 3))):
                p = perturb(rng, box)
                preds.append({**ann(image_id, cat, p), "score": round(float(rng.uniform(0.3, 1.0)), 4)})
        for _ in range(2):
            cat = str(rng.choice(["car", "chair"]))
            center = rng.uniform([-5, -1, 3], [5, 2, 30])
            fp = Cuboid(center, DIMS[cat], random_rotation(rng))
            preds.append({**ann(image_id, cat, fp), "score": round(float(rng.uniform(0.05, 0.9)), 4)})
    bike = Cuboid((0.0, 1.0, 7.0), (0.6, 1.2, 1.8), np.eye(3))
    preds.append({**ann(1, "bike", bike), "score": 0.5})
    for i, p in enumerate(preds):
        p["id"] = i
    categories = [{"name": "car", "priors": list(DIMS["car"])}, {"name": "chair", "priors": list(DIMS["chair"])}]
    return {"images": images, "annotations": gts, "categories": categories}, {"predictions": preds}


def stats_fixture():
    rng = np.random.default_rng(11)
    images = [
        {"id": "a", "width": 1280.0, "height": 720.0, "intrinsics": K.to_dict(), "source": "synthetic", "split": "train"},
        {"id": "b", "width": 640.0, "height": 480.0, "intrinsics": None, "source": "synthetic", "split": "train"},
    ]
    anns = []
    for i in range(40):
        image_id = "a" if i % 3 else "b"
        cat = ["car", "chair", "table"][i % 3]
        center = (rng.uniform(-6, 6), rng.uniform(-1, 2), rng.uniform(3, 30))
        box = Cuboid(center, rng.uniform(0.4, 3.0, size=3), random_rotation(rng))
        a = ann(image_id, cat, box, id=i)
        if image_id == "b":
            # fallback camera for image b: f = 2H, center principal point
            kb = Intrinsics(960.0, 960.0, 320.0, 240.0, 480.0, 640.0)
            uv = project_many(box.corners(), kb)
            lo, hi = uv.min(axis=0), uv.max(axis=0)
            a["bbox2d"] = [float(lo[0]), float(lo[1]), float(hi[0] - lo[0]), float(hi[1] - lo[1])]
        anns.append(a)
    return {"images": images, "annotations": anns, "categories": [{"name": "car"}, {"name": "chair"}, {"name": "table"}]}


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    gt, pred = eval_fixture()
    (DATA / "eval_gt.json").write_text(json.dumps(gt, indent=1) + "\n")
    (DATA / "eval_pred.json").write_text(json.dumps(pred, indent=1) + "\n")
    (DATA / "stats_dataset.json").write_text(json.dumps(stats_fixture(), indent=1) + "\n")


if __name__ == "__main__":
    main()
