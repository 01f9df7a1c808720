"""Mean AP3D: COCO-style average precision with IoU3D matching.

Per image and category, predictions are visited by descending score (ties in
input order). Each takes the unmatched non-ignored ground truth it overlaps
most, provided the IoU reaches the threshold. A prediction with no such
partner that still overlaps an ignored ground truth at the threshold is
discarded; anything else is a false positive. Ignored ground truths never
enter the recall denominator.

AP is the mean of the interpolated precision envelope sampled at the 101
recall points 0, 0.01, ..., 1. Depth-band APs re-run matching with every
ground truth outside the band treated as ignored.

Means skip anything whose denominator is empty; such entries are reported
as ``None`` rather than 0.
"""

from __future__ import annotations

import logging
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from cubeval.errors import SchemaError
from cubeval.geometry import Cuboid
from cubeval.intersect.exact import iou3d_batched

log = logging.getLogger(__name__)

TP, FP, DISCARDED = 1, 0, -1
ALL = "all"


def normalize_category(name: str) -> str:
    return name.strip().lower()


def default_thresholds() -> tuple[float, ...]:
    return tuple(k / 20 for k in range(1, 11))


def threshold_grid(tau_min: float, tau_max: float, tau_step: float) -> tuple[float, ...]:
    if tau_step <= 0:
        raise ValueError("tau step must be positive")
    n = int(math.floor((tau_max - tau_min) / tau_step + 1e-9)) + 1
    return tuple(round(tau_min + k * tau_step, 10) for k in range(n))


def default_bands() -> dict[str, tuple[float, float]]:
    return {"near": (0.0, 10.0), "medium": (10.0, 35.0), "far": (35.0, math.inf)}


def bands_from_cutoffs(near: float, far: float) -> dict[str, tuple[float, float]]:
    return {"near": (0.0, near), "medium": (near, far), "far": (far, math.inf)}


@dataclass(frozen=True)
class EvalConfig:
    thresholds: tuple = field(default_factory=default_thresholds)
    max_occlusion: float = 0.66
    max_truncation: float = 0.66
    min_height_fraction: float = 0.0625
    # name -> (lo, hi], keyed on ground-truth center depth
    bands: dict = field(default_factory=default_bands)
    recall_points: int = 101

    def __post_init__(self):
        taus = tuple(float(t) for t in self.thresholds)
        if not taus:
            raise ValueError("need at least one IoU threshold")
        if any(not 0 < t <= 1 for t in taus) or any(b <= a for a, b in zip(taus, taus[1:])):
            raise ValueError(f"IoU thresholds must be strictly increasing in (0, 1], got {taus}")
        object.__setattr__(self, "thresholds", taus)
        spans = list(self.bands.values())
        for lo, hi in spans:
            if not lo < hi:
                raise ValueError(f"depth band ({lo}, {hi}] is empty")
        if any(b[0] < a[1] for a, b in zip(spans, spans[1:])):
            raise ValueError("depth bands must be ordered and disjoint")

    @property
    def report_thresholds(self) -> tuple[float, ...]:
        """Grid thresholds plus the 0.25 / 0.50 single-threshold columns."""
        return tuple(sorted(set(self.thresholds) | {0.25, 0.5}))


@dataclass(frozen=True)
class GtRecord:
    image_id: object
    category: str
    box: Cuboid
    box2d: tuple  # (x, y, w, h) pixels
    image_height: float | None = None
    occlusion: float | None = None
    truncation: float | None = None
    ignored: bool = False

    def __post_init__(self):
        for name in ("occlusion", "truncation"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise SchemaError(f"{name} must lie in [0, 1], got {value!r}")

    @property
    def depth(self) -> float:
        return float(self.box.center[2])


@dataclass(frozen=True)
class PredRecord:
    image_id: object
    category: str
    box: Cuboid
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise SchemaError(f"prediction score must lie in [0, 1], got {self.score!r}")


def is_ignored(gt: GtRecord, config: EvalConfig) -> bool:
    occ = gt.occlusion or 0.0
    trunc = gt.truncation or 0.0
    if occ > config.max_occlusion or trunc > config.max_truncation:
        return True
    if gt.image_height:
        return gt.box2d[3] / gt.image_height < config.min_height_fraction
    return False


def classify_ignores(gts: Iterable[GtRecord], config: EvalConfig) -> list[GtRecord]:
    """Copies of ``gts`` with ``ignored`` set by the occlusion, truncation and size rules."""
    return [replace(g, ignored=g.ignored or is_ignored(g, config)) for g in gts]


@dataclass
class MatchResult:
    order: np.ndarray  # prediction indices by descending score
    status: np.ndarray  # TP / FP / DISCARDED, aligned with ``order``
    gt_index: np.ndarray  # matched gt per entry of ``order`` or -1
    ignored: np.ndarray

    @property
    def n_positive(self) -> int:
        return int(np.count_nonzero(~self.ignored))

    @property
    def unmatched_gts(self) -> list[int]:
        """Non-ignored ground truths left without a true positive."""
        free = ~self.ignored
        free[self.gt_index[self.gt_index >= 0]] = False
        return np.flatnonzero(free).tolist()


def match_image_category(scores: Sequence[float], ious: np.ndarray, ignored: Sequence[bool], tau: float) -> MatchResult:
    """Greedy matching for one image and category.

    ``ious`` is the ``(n_pred, n_gt)`` IoU matrix; ``ignored`` flags ground
    truths that may absorb predictions but never count as positives.
    """
    scores = np.asarray(scores, dtype=float)
    ignored = np.asarray(ignored, dtype=bool)
    ious = np.asarray(ious, dtype=float).reshape(len(scores), len(ignored))
    order = np.argsort(-scores, kind="stable")
    status = np.empty(len(order), dtype=np.int8)
    gt_index = np.full(len(order), -1, dtype=np.int64)
    taken = ignored.copy()
    for k, p in enumerate(order):
        row = ious[p]
        candidates = np.where(taken, -1.0, row)
        g = int(np.argmax(candidates)) if len(row) else -1
        if g >= 0 and candidates[g] >= tau:
            status[k] = TP
            gt_index[k] = g
            taken[g] = True
        elif np.any(ignored & (row >= tau)):
            status[k] = DISCARDED
        else:
            status[k] = FP
    return MatchResult(order, status, gt_index, ignored)


def average_precision(scores: Sequence[float], is_tp: Sequence[bool], n_positive: int, recall_points: int = 101) -> float | None:
    """Interpolated AP of ranked detections; ``None`` when there are no positives.

    ``scores``/``is_tp`` cover every non-discarded detection in the dataset,
    in a canonical order that decides score ties.
    """
    if n_positive <= 0:
        return None
    scores = np.asarray(scores, dtype=float)
    if len(scores) == 0:
        return 0.0
    order = np.argsort(-scores, kind="mergesort")
    hits = np.asarray(is_tp, dtype=bool)[order]
    tp = np.cumsum(hits)
    fp = np.cumsum(~hits)
    recall = tp / n_positive
    precision = tp / (tp + fp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    grid = np.linspace(0.0, 1.0, recall_points)
    idx = np.searchsorted(recall, grid, side="left")
    sampled = [float(envelope[i]) if i < len(envelope) else 0.0 for i in idx]
    return math.fsum(sampled) / recall_points


def mean_or_none(values: Iterable[float | None]) -> float | None:
    vals = [v for v in values if v is not None]
    if not vals:
        return None
    return math.fsum(vals) / len(vals)


@dataclass
class CategoryResult:
    # band -> tau -> AP (None when the band has no positives)
    ap: dict
    # band -> {"n_gt", "n_ignored", "n_pred", "n_tp": {tau: count}}
    counts: dict

    def mean_ap(self, band: str, thresholds: Sequence[float]) -> float | None:
        return mean_or_none(self.ap[band][t] for t in thresholds)


@dataclass
class APReport:
    config: EvalConfig
    categories: dict  # name -> CategoryResult
    n_predictions: int
    n_dropped_predictions: int

    def category_mean(self, band: str = ALL) -> dict:
        return {c: r.mean_ap(band, self.config.thresholds) for c, r in self.categories.items()}

    def overall(self, band: str = ALL, tau: float | None = None) -> float | None:
        if tau is None:
            return mean_or_none(self.category_mean(band).values())
        return mean_or_none(r.ap[band][tau] for r in self.categories.values())

    def summary(self) -> dict:
        out = {
            "AP3D": self.overall(),
            "AP3D_25": self.overall(tau=0.25),
            "AP3D_50": self.overall(tau=0.5),
        }
        for band in self.config.bands:
            out[f"AP3D_{band}"] = self.overall(band)
        return out

    def to_dict(self) -> dict:
        bands = [ALL, *self.config.bands]
        cats = {}
        for name, res in self.categories.items():
            cats[name] = {
                "AP3D": {b: res.mean_ap(b, self.config.thresholds) for b in bands},
                "ap_per_tau": {b: {repr(t): res.ap[b][t] for t in self.config.report_thresholds} for b in bands},
                "counts": {
                    b: {**{k: v for k, v in res.counts[b].items() if k != "n_tp"},
                        "n_tp": {repr(t): n for t, n in res.counts[b]["n_tp"].items()}}
                    for b in bands
                },
            }
        return {
            "summary": self.summary(),
            "thresholds": list(self.config.thresholds),
            "bands": {k: [lo, None if math.isinf(hi) else hi] for k, (lo, hi) in self.config.bands.items()},
            "n_predictions": self.n_predictions,
            "n_dropped_predictions": self.n_dropped_predictions,
            "categories": cats,
        }

    def csv_rows(self) -> list[tuple]:
        """One row per category x threshold x band: (category, tau, band, ap, n_gt, n_ignored, n_pred, n_tp)."""
        rows = []
        for name in sorted(self.categories):
            res = self.categories[name]
            for t in self.config.report_thresholds:
                for band in [ALL, *self.config.bands]:
                    c = res.counts[band]
                    rows.append((name, t, band, res.ap[band][t], c["n_gt"], c["n_ignored"], c["n_pred"], c["n_tp"][t]))
        return rows


def _in_band(depth: float, span: tuple[float, float]) -> bool:
    lo, hi = span
    return lo < depth <= hi


def _image_key(image_id) -> tuple:
    return (type(image_id).__name__, image_id)


def evaluate(
    preds: Sequence[PredRecord],
    gts: Sequence[GtRecord],
    config: EvalConfig | None = None,
    categories: Iterable[str] | None = None,
    threads: int | None = None,
) -> APReport:
    """Full AP3D report.

    ``categories`` fixes the evaluated category set (defaults to those seen in
    ``gts``); predictions for any other category are dropped with a warning.
    """
    config = config or EvalConfig()
    for rec in gts:
        if not isinstance(rec, GtRecord):
            raise SchemaError(f"expected GtRecord, got {type(rec).__name__}")
    for rec in preds:
        if not isinstance(rec, PredRecord):
            raise SchemaError(f"expected PredRecord, got {type(rec).__name__}")

    gts = classify_ignores(gts, config)
    known = {normalize_category(c) for c in categories} if categories is not None else set()
    known |= {normalize_category(g.category) for g in gts}

    gt_groups: dict = defaultdict(list)
    for g in gts:
        gt_groups[(normalize_category(g.category), g.image_id)].append(g)
    pred_groups: dict = defaultdict(list)
    dropped = 0
    for p in preds:
        cat = normalize_category(p.category)
        if cat not in known:
            dropped += 1
            continue
        pred_groups[(cat, p.image_id)].append(p)
    if dropped:
        warnings.warn(f"dropped {dropped} predictions with unknown categories", RuntimeWarning, stacklevel=2)

    taus = config.report_thresholds
    bands = {ALL: (-math.inf, math.inf), **config.bands}
    results = {}
    for cat in sorted(known):
        images = sorted(
            {img for (c, img) in gt_groups if c == cat} | {img for (c, img) in pred_groups if c == cat},
            key=_image_key,
        )
        ranked = {(b, t): ([], []) for b in bands for t in taus}
        counts = {b: {"n_gt": 0, "n_ignored": 0, "n_pred": 0, "n_tp": {t: 0 for t in taus}} for b in bands}
        for img in images:
            g_list = gt_groups.get((cat, img), [])
            p_list = pred_groups.get((cat, img), [])
            ious = iou3d_batched([p.box for p in p_list], [g.box for g in g_list], threads=threads)
            scores = [p.score for p in p_list]
            for band, span in bands.items():
                ignored = [g.ignored or not _in_band(g.depth, span) for g in g_list]
                c = counts[band]
                c["n_gt"] += sum(not x for x in ignored)
                c["n_ignored"] += sum(ignored)
                c["n_pred"] += len(p_list)
                for t in taus:
                    m = match_image_category(scores, ious, ignored, t)
                    keep = m.status != DISCARDED
                    s, h = ranked[(band, t)]
                    s.extend(np.asarray(scores)[m.order[keep]].tolist())
                    h.extend((m.status[keep] == TP).tolist())
                    c["n_tp"][t] += int(np.count_nonzero(m.status == TP))
        ap = {
            b: {t: average_precision(*ranked[(b, t)], counts[b]["n_gt"], config.recall_points) for t in taus}
            for b in bands
        }
        results[cat] = CategoryResult(ap, counts)
        log.debug("category %s: %s", cat, counts[ALL])
    return APReport(config, results, len(preds), dropped)
