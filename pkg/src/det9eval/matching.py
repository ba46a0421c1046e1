"""2D matching with ignore regions, precision-recall curves and AP."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from itertools import groupby
from typing import Iterable, List, Optional, Sequence, Tuple, Union

from det9eval.dataset import EVALUATED_CLASSES, FrameAnnotation, FramePrediction, GroundTruthObject, Prediction
from det9eval.errors import BehindCamera
from det9eval.geometry import CameraModel, amodal_bbox2d, cover_fraction, iou2d

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetricConfig:
    x_max: float = 100.0
    delta_s: float = 5.0
    iou_threshold: float = 0.7
    ignore_cover_threshold: float = 0.7
    classes: Tuple[str, ...] = EVALUATED_CLASSES
    #: count empty depth bins as k(s) = 0 instead of dropping them from the average
    empty_bins_as_zero: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.x_max) and self.x_max > 0):
            raise ValueError(f"x_max must be positive, got {self.x_max}")
        if not (math.isfinite(self.delta_s) and self.delta_s > 0):
            raise ValueError(f"delta_s must be positive, got {self.delta_s}")
        ratio = self.x_max / self.delta_s
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError(f"delta_s={self.delta_s} does not divide x_max={self.x_max}")
        for name in ("iou_threshold", "ignore_cover_threshold"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must be in (0, 1], got {v}")
        object.__setattr__(self, "classes", tuple(self.classes))

    @property
    def n_bins(self) -> int:
        return int(round(self.x_max / self.delta_s))

    def bin_edges(self) -> List[Tuple[float, float]]:
        return [(i * self.delta_s, (i + 1) * self.delta_s) for i in range(self.n_bins)]

    def bin_index(self, depth: float) -> Optional[int]:
        """Index of the half-open bin containing ``depth``, or None beyond x_max."""
        if depth < 0 or depth >= self.x_max:
            return None
        return min(int(depth // self.delta_s), self.n_bins - 1)

    @property
    def is_standard(self) -> bool:
        return self == MetricConfig()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["classes"] = list(self.classes)
        d["n_bins"] = self.n_bins
        d["standard"] = self.is_standard
        return d


@dataclass
class MatchResult:
    true_positives: List[Tuple[Prediction, GroundTruthObject, float]] = field(default_factory=list)
    false_positives: List[Prediction] = field(default_factory=list)
    false_negatives: List[GroundTruthObject] = field(default_factory=list)
    discarded: List[Prediction] = field(default_factory=list)
    #: ground truth behind the camera; neither matchable nor counted as FN
    excluded: List[GroundTruthObject] = field(default_factory=list)

    @property
    def n_gt(self) -> int:
        return len(self.true_positives) + len(self.false_negatives)


def match_frame(
    frame: FrameAnnotation,
    preds: Union[FramePrediction, Iterable[Prediction]],
    cls: str,
    cam: Optional[CameraModel] = None,
    config: MetricConfig = MetricConfig(),
) -> MatchResult:
    """Assign ``cls`` predictions of one frame to its ground truth.

    ``frame`` is expected to have passed through ``derive_ignore_regions``.
    Predictions are visited by descending confidence; within equal
    confidence, the one with the highest IoU to a still-unmatched ground
    truth goes first, then input order. Each takes its best unmatched
    ground truth when the IoU reaches the threshold. Unmatched predictions
    covering any single ignore region by at least ``ignore_cover_threshold``
    are discarded, the rest are false positives.
    """
    cam = cam or frame.camera
    if isinstance(preds, FramePrediction):
        preds = preds.predictions
    preds = [p for p in preds if p.label == cls]
    result = MatchResult()

    gts, gt_boxes = [], []
    for g in frame.objects:
        if g.label != cls:
            continue
        try:
            gt_boxes.append(amodal_bbox2d(cam, g.box))
            gts.append(g)
        except BehindCamera:
            log.warning("frame %s: %s ground truth behind camera excluded", frame.image_id, cls)
            result.excluded.append(g)

    boxes = []
    for p in preds:
        try:
            boxes.append(amodal_bbox2d(cam, p.box))
        except BehindCamera:
            log.warning("frame %s: %s prediction behind camera counted as FP", frame.image_id, cls)
            boxes.append(None)
    ious = [[iou2d(b, gb) for gb in gt_boxes] if b is not None else [0.0] * len(gts) for b in boxes]

    matched = [False] * len(gts)
    unmatched_preds = []

    def best_available(i):
        best_j, best = -1, -1.0
        for j, v in enumerate(ious[i]):
            if not matched[j] and v > best:
                best_j, best = j, v
        return best_j, best

    order = sorted(range(len(preds)), key=lambda i: -preds[i].confidence)
    for _, group in groupby(order, key=lambda i: preds[i].confidence):
        pending = list(group)
        while pending:
            pick = max(pending, key=lambda i: (best_available(i)[1], -i))
            pending.remove(pick)
            j, v = best_available(pick)
            if j >= 0 and v >= config.iou_threshold:
                matched[j] = True
                result.true_positives.append((preds[pick], gts[j], v))
            else:
                unmatched_preds.append(pick)

    for i in sorted(unmatched_preds, key=lambda i: (-preds[i].confidence, i)):
        b = boxes[i]
        if b is not None and any(
            cover_fraction(b, r.bbox) >= config.ignore_cover_threshold for r in frame.ignore_regions
        ):
            result.discarded.append(preds[i])
        else:
            result.false_positives.append(preds[i])
    result.false_negatives = [g for g, m in zip(gts, matched) if not m]
    return result


@dataclass(frozen=True)
class PRPoint:
    confidence: float
    precision: float
    recall: float
    tp: int
    fp: int


@dataclass(frozen=True)
class PRCurve:
    points: Tuple[PRPoint, ...]
    n_gt: int

    @property
    def empty(self) -> bool:
        """True when there is no ground truth to measure recall against."""
        return self.n_gt == 0


def curve_from_scores(scored: Sequence[Tuple[float, bool]], n_gt: int) -> PRCurve:
    """PR curve from ``(confidence, is_tp)`` decisions and the ground-truth count."""
    ordered = sorted(scored, key=lambda s: -s[0])
    points = []
    tp = fp = 0
    for conf, group in groupby(ordered, key=lambda s: s[0]):
        for _, is_tp in group:
            if is_tp:
                tp += 1
            else:
                fp += 1
        recall = tp / n_gt if n_gt else 0.0
        points.append(PRPoint(conf, tp / (tp + fp), recall, tp, fp))
    return PRCurve(tuple(points), n_gt)


def pr_curve(matches: Iterable[MatchResult], cls: Optional[str] = None) -> PRCurve:
    scored = []
    n_gt = 0
    for m in matches:
        n_gt += m.n_gt
        scored.extend((p.confidence, True) for p, _, _ in m.true_positives if cls is None or p.label == cls)
        scored.extend((p.confidence, False) for p in m.false_positives if cls is None or p.label == cls)
    return curve_from_scores(scored, n_gt)


def average_precision(curve: PRCurve) -> float:
    """Area under the monotone precision envelope (all-point interpolation)."""
    if curve.empty or not curve.points:
        return 0.0
    envelope = []
    best = 0.0
    for pt in reversed(curve.points):
        best = max(best, pt.precision)
        envelope.append(best)
    envelope.reverse()
    ap = 0.0
    prev_r = 0.0
    for pt, p in zip(curve.points, envelope):
        ap += (pt.recall - prev_r) * p
        prev_r = pt.recall
    return min(1.0, ap)


@dataclass(frozen=True)
class BinAP:
    s_low: float
    s_high: float
    ap: Optional[float]
    n_gt: int
    n_fp: int


def depth_dependent_ap(matches: Iterable[MatchResult], cls: str, config: MetricConfig = MetricConfig()) -> List[BinAP]:
    """AP per depth bin: TPs and FNs binned by ground-truth depth, FPs by predicted depth."""
    n = config.n_bins
    scored: List[List[Tuple[float, bool]]] = [[] for _ in range(n)]
    n_gt = [0] * n
    n_fp = [0] * n
    for m in matches:
        for p, g, _ in m.true_positives:
            if p.label != cls:
                continue
            b = config.bin_index(g.box.planar_depth)
            if b is not None:
                scored[b].append((p.confidence, True))
                n_gt[b] += 1
        for g in m.false_negatives:
            if g.label != cls:
                continue
            b = config.bin_index(g.box.planar_depth)
            if b is not None:
                n_gt[b] += 1
        for p in m.false_positives:
            if p.label != cls:
                continue
            b = config.bin_index(p.box.planar_depth)
            if b is not None:
                scored[b].append((p.confidence, False))
                n_fp[b] += 1
    out = []
    for b, (lo, hi) in enumerate(config.bin_edges()):
        if n_gt[b] == 0 and n_fp[b] == 0:
            ap = None
        elif n_gt[b] == 0:
            ap = 0.0
        else:
            ap = average_precision(curve_from_scores(scored[b], n_gt[b]))
        out.append(BinAP(lo, hi, ap, n_gt[b], n_fp[b]))
    return out
