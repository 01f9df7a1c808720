"""Annotation/prediction JSON files and dataset statistics.

Camera frame: +x right, +y down, +z forward, meters. Every annotation
carries a category, a 2D box ``[x, y, w, h]`` in pixels, the 3D center in
camera coordinates, a row-major 3x3 object-to-camera rotation and physical
dims ``[w, h, l]``. See ``docs/format.md`` for the full schema.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from cubeval.camera import Intrinsics, fallback_intrinsics, project_many
from cubeval.errors import GeometryError, InsufficientData, ReferentialError, SchemaError
from cubeval.evaluation import GtRecord, PredRecord, normalize_category
from cubeval.geometry import Cuboid

log = logging.getLogger(__name__)

ROTATION_STRICT_TOL = 1e-9
ROTATION_LOAD_TOL = 1e-6
ROTATION_REPAIR_TOL = 1e-3

IMAGE_KEYS = {"id", "width", "height"}
IMAGE_OPTIONAL = {"intrinsics", "source", "split"}
ANN_KEYS = {"image_id", "category", "bbox2d", "center_cam", "rotation", "dims"}
ANN_OPTIONAL = {"id", "occlusion", "truncation"}
PRED_KEYS = {"image_id", "category", "center_cam", "rotation", "dims", "score"}
PRED_OPTIONAL = {"id", "bbox2d"}
BOX_KEYS = {"center", "dims", "rotation"}


class RotationRepairWarning(UserWarning):
    pass


def _check_keys(obj: Any, required: set, optional: set, where: str) -> None:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object, got {type(obj).__name__}")
    missing = required - obj.keys()
    extra = obj.keys() - required - optional
    if missing:
        raise SchemaError(f"{where}: missing field(s) {sorted(missing)}")
    if extra:
        raise SchemaError(f"{where}: unknown field(s) {sorted(extra)}")


def _floats(value: Any, n: int, where: str, name: str) -> list[float]:
    if not isinstance(value, list) or len(value) != n:
        raise SchemaError(f"{where}: {name} must be a list of {n} numbers")
    out = []
    for v in value:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise SchemaError(f"{where}: {name} contains non-numeric value {v!r}")
        out.append(float(v))
    return out


def _number(value: Any, where: str, name: str) -> float:
    return _floats([value], 1, where, name)[0]


def nearest_rotation(R: np.ndarray) -> np.ndarray:
    """Closest proper rotation in the Frobenius sense (orthogonal polar factor)."""
    U, _, Vt = np.linalg.svd(R)
    return U @ Vt


def validate_rotation(values: Sequence[float], where: str) -> np.ndarray:
    """Check a row-major rotation; repair small drift, reject large drift or reflections."""
    R = np.asarray(values, dtype=float).reshape(3, 3)
    drift = float(np.max(np.abs(R.T @ R - np.eye(3))))
    if np.linalg.det(R) <= 0:
        raise GeometryError(f"{where}: rotation has non-positive determinant")
    if drift <= ROTATION_STRICT_TOL:
        return R
    if drift > ROTATION_REPAIR_TOL:
        raise GeometryError(f"{where}: rotation is {drift:.3g} away from orthonormal")
    if drift > ROTATION_LOAD_TOL:
        warnings.warn(f"{where}: rotation drift {drift:.3g} repaired", RotationRepairWarning, stacklevel=2)
    else:
        log.debug("%s: rotation drift %.3g repaired", where, drift)
    return nearest_rotation(R)


def _box(center, dims, rotation, where: str) -> Cuboid:
    c = _floats(center, 3, where, "center")
    d = _floats(dims, 3, where, "dims")
    if min(d) <= 0:
        raise SchemaError(f"{where}: dims must be positive")
    R = validate_rotation(_floats(rotation, 9, where, "rotation"), where)
    return Cuboid(c, d, R)


def _fraction(ann: dict, key: str, where: str) -> float | None:
    if ann.get(key) is None:
        return None
    v = _number(ann[key], where, key)
    if not 0.0 <= v <= 1.0:
        raise SchemaError(f"{where}: {key} must lie in [0, 1], got {v}")
    return v


@dataclass
class ImageInfo:
    id: Any
    width: float
    height: float
    intrinsics: Intrinsics
    source: str = ""
    split: str = ""

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "width": self.width,
            "height": self.height,
            "intrinsics": None if self.intrinsics.estimated else self.intrinsics.to_dict(),
            "source": self.source,
            "split": self.split,
        }


@dataclass
class Annotation:
    image_id: Any
    category: str
    bbox2d: tuple
    box: Cuboid
    occlusion: float | None = None
    truncation: float | None = None
    id: Any = None

    def to_dict(self) -> dict:
        out = {
            "image_id": self.image_id,
            "category": self.category,
            "bbox2d": list(self.bbox2d),
            "center_cam": self.box.center.tolist(),
            "rotation": self.box.rotation.reshape(9).tolist(),
            "dims": self.box.dims.tolist(),
        }
        for key in ("id", "occlusion", "truncation"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        return out


@dataclass
class DatasetFile:
    images: dict  # id -> ImageInfo, in file order
    annotations: list
    categories: dict = field(default_factory=dict)  # name -> priors (w0, h0, l0) or None

    def to_dict(self) -> dict:
        return {
            "images": [im.to_dict() for im in self.images.values()],
            "annotations": [a.to_dict() for a in self.annotations],
            "categories": [
                {"name": name} if priors is None else {"name": name, "priors": list(priors)}
                for name, priors in self.categories.items()
            ],
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    def gt_records(self) -> list[GtRecord]:
        return [
            GtRecord(
                a.image_id,
                a.category,
                a.box,
                a.bbox2d,
                image_height=self.images[a.image_id].height,
                occlusion=a.occlusion,
                truncation=a.truncation,
            )
            for a in self.annotations
        ]


def _record_name(kind: str, i: int, rec: Any) -> str:
    if isinstance(rec, dict) and rec.get("id") is not None:
        return f"{kind}[{i}] (id={rec['id']!r})"
    return f"{kind}[{i}]"


def parse_dataset(data: Any) -> DatasetFile:
    _check_keys(data, {"images", "annotations"}, {"categories"}, "dataset")
    if not isinstance(data["images"], list) or not isinstance(data["annotations"], list):
        raise SchemaError("dataset: images and annotations must be lists")
    images: dict = {}
    for i, im in enumerate(data["images"]):
        where = f"images[{i}]"
        _check_keys(im, IMAGE_KEYS, IMAGE_OPTIONAL, where)
        where = f"images[{i}] (id={im['id']!r})"
        if im["id"] in images:
            raise SchemaError(f"{where}: duplicate image id")
        w, h = _number(im["width"], where, "width"), _number(im["height"], where, "height")
        if w <= 0 or h <= 0:
            raise SchemaError(f"{where}: width and height must be positive")
        k = im.get("intrinsics")
        if k is None:
            K = fallback_intrinsics(h, w)
        else:
            _check_keys(k, {"fx", "fy", "px", "py"}, set(), f"{where}.intrinsics")
            try:
                K = Intrinsics(*(_number(k[n], where, n) for n in ("fx", "fy", "px", "py")), h, w)
            except ValueError as exc:
                raise SchemaError(f"{where}: {exc}") from None
        images[im["id"]] = ImageInfo(im["id"], w, h, K, str(im.get("source", "")), str(im.get("split", "")))

    categories: dict = {}
    for i, cat in enumerate(data.get("categories", [])):
        where = f"categories[{i}]"
        _check_keys(cat, {"name"}, {"priors"}, where)
        priors = cat.get("priors")
        if priors is not None:
            priors = tuple(_floats(priors, 3, where, "priors"))
            if min(priors) <= 0:
                raise SchemaError(f"{where}: priors must be positive")
        categories[str(cat["name"])] = priors

    annotations = []
    for i, ann in enumerate(data["annotations"]):
        where = _record_name("annotations", i, ann)
        _check_keys(ann, ANN_KEYS, ANN_OPTIONAL, where)
        if ann["image_id"] not in images:
            raise ReferentialError(f"{where}: unknown image id {ann['image_id']!r}")
        if not isinstance(ann["category"], str) or not ann["category"].strip():
            raise SchemaError(f"{where}: category must be a non-empty string")
        bbox = tuple(_floats(ann["bbox2d"], 4, where, "bbox2d"))
        if bbox[2] < 0 or bbox[3] < 0:
            raise SchemaError(f"{where}: bbox2d width/height must be non-negative")
        box = _box(ann["center_cam"], ann["dims"], ann["rotation"], where)
        annotations.append(
            Annotation(
                ann["image_id"],
                ann["category"],
                bbox,
                box,
                _fraction(ann, "occlusion", where),
                _fraction(ann, "truncation", where),
                ann.get("id"),
            )
        )
    return DatasetFile(images, annotations, categories)


def read_json(path) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def load(path) -> DatasetFile:
    return parse_dataset(read_json(path))


def parse_predictions(data: Any) -> list[PredRecord]:
    if isinstance(data, dict):
        _check_keys(data, {"predictions"}, set(), "predictions file")
        data = data["predictions"]
    if not isinstance(data, list):
        raise SchemaError("predictions file: expected a list of predictions")
    preds = []
    for i, p in enumerate(data):
        where = _record_name("predictions", i, p)
        _check_keys(p, PRED_KEYS, PRED_OPTIONAL, where)
        if not isinstance(p["category"], str):
            raise SchemaError(f"{where}: category must be a string")
        score = _number(p["score"], where, "score")
        if not 0.0 <= score <= 1.0:
            raise SchemaError(f"{where}: score must lie in [0, 1], got {score}")
        preds.append(PredRecord(p["image_id"], p["category"], _box(p["center_cam"], p["dims"], p["rotation"], where), score))
    return preds


def load_predictions(path) -> list[PredRecord]:
    return parse_predictions(read_json(path))


def parse_boxes(data: Any) -> list[Cuboid]:
    if isinstance(data, dict):
        _check_keys(data, {"boxes"}, set(), "boxes file")
        data = data["boxes"]
    if not isinstance(data, list):
        raise SchemaError("boxes file: expected a list of boxes")
    boxes = []
    for i, b in enumerate(data):
        where = f"boxes[{i}]"
        _check_keys(b, BOX_KEYS, set(), where)
        boxes.append(_box(b["center"], b["dims"], b["rotation"], where))
    return boxes


def load_boxes(path) -> list[Cuboid]:
    return parse_boxes(read_json(path))


# statistics ---------------------------------------------------------------


@dataclass(frozen=True)
class StatsConfig:
    grid: int = 64
    depth_range: tuple = (0.0, 20.0)
    x_range: tuple = (-10.0, 10.0)
    size_bins: int = 64


@dataclass
class StatsReport:
    n_annotations: int
    center_hist: np.ndarray  # (grid, grid), rows = normalized y, cols = normalized x
    center_spill: int
    xz_hist: np.ndarray  # (grid, grid), rows = depth z, cols = x
    xz_spill: int
    size_hist: np.ndarray  # relative size on [0, 1]
    size_spill: int
    corr_y_z: float | None
    corr_size_z: float | None
    category_counts: dict
    n_estimated_intrinsics: int
    config: StatsConfig

    def to_dict(self) -> dict:
        return {
            "n_annotations": self.n_annotations,
            "category_counts": self.category_counts,
            "correlation": {"y_norm_vs_z": self.corr_y_z, "rel_size_vs_z": self.corr_size_z},
            "n_estimated_intrinsics": self.n_estimated_intrinsics,
            "center_hist": {"grid": self.config.grid, "spill": self.center_spill, "counts": self.center_hist.astype(int).tolist()},
            "xz_hist": {
                "grid": self.config.grid,
                "depth_range": list(self.config.depth_range),
                "x_range": list(self.config.x_range),
                "spill": self.xz_spill,
                "counts": self.xz_hist.astype(int).tolist(),
            },
            "size_hist": {"bins": self.config.size_bins, "spill": self.size_spill, "counts": self.size_hist.astype(int).tolist()},
        }


@dataclass
class _Columns:
    y_norm: np.ndarray
    x_norm: np.ndarray
    z: np.ndarray
    x: np.ndarray
    rel_size: np.ndarray
    in_front: np.ndarray


def _columns(ds: DatasetFile) -> _Columns:
    n = len(ds.annotations)
    x_norm = np.full(n, np.nan)
    y_norm = np.full(n, np.nan)
    centers = np.array([a.box.center for a in ds.annotations]).reshape(n, 3)
    rel_size = np.empty(n)
    for i, a in enumerate(ds.annotations):
        im = ds.images[a.image_id]
        rel_size[i] = math.sqrt(a.bbox2d[2] * a.bbox2d[3] / (im.width * im.height))
        if centers[i, 2] > 0:
            u, v = project_many(centers[i], im.intrinsics)[0]
            x_norm[i] = u / im.width
            y_norm[i] = v / im.height
    return _Columns(y_norm, x_norm, centers[:, 2], centers[:, 0], rel_size, centers[:, 2] > 0)


def _pearson(a: np.ndarray, b: np.ndarray, what: str) -> float:
    if len(a) < 2:
        raise InsufficientData(f"{what}: need at least 2 annotations, have {len(a)}")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise InsufficientData(f"{what}: zero variance, correlation undefined")
    a = a - a.mean()
    b = b - b.mean()
    return float(np.dot(a, b) / math.sqrt(np.dot(a, a) * np.dot(b, b)))


def correlations(ds: DatasetFile) -> tuple[float, float]:
    """Pearson correlations (normalized projected y vs depth, relative 2D size vs depth).

    Relative size is ``sqrt(box area / image area)``. Objects behind the
    camera are skipped.
    """
    cols = _columns(ds)
    m = cols.in_front
    return (
        _pearson(cols.y_norm[m], cols.z[m], "y_norm vs z"),
        _pearson(cols.rel_size[m], cols.z[m], "rel_size vs z"),
    )


def stats(ds: DatasetFile, config: StatsConfig = StatsConfig()) -> StatsReport:
    cols = _columns(ds)
    n = len(ds.annotations)
    g = config.grid
    m = cols.in_front
    center, _, _ = np.histogram2d(cols.y_norm[m], cols.x_norm[m], bins=g, range=[[0, 1], [0, 1]])
    xz, _, _ = np.histogram2d(cols.z, cols.x, bins=g, range=[list(config.depth_range), list(config.x_range)])
    size, _ = np.histogram(cols.rel_size, bins=config.size_bins, range=(0.0, 1.0))
    corr = []
    for a, what in ((cols.y_norm, "y_norm vs z"), (cols.rel_size, "rel_size vs z")):
        try:
            corr.append(_pearson(a[m], cols.z[m], what))
        except InsufficientData:
            corr.append(None)
    counts: dict = {}
    for a in ds.annotations:
        key = normalize_category(a.category)
        counts[key] = counts.get(key, 0) + 1
    used_images = {a.image_id for a in ds.annotations}
    return StatsReport(
        n_annotations=n,
        center_hist=center,
        center_spill=int(n - center.sum()),
        xz_hist=xz,
        xz_spill=int(n - xz.sum()),
        size_hist=size,
        size_spill=int(n - size.sum()),
        corr_y_z=corr[0],
        corr_size_z=corr[1],
        category_counts=dict(sorted(counts.items())),
        n_estimated_intrinsics=sum(ds.images[i].intrinsics.estimated for i in used_images),
        config=config,
    )
