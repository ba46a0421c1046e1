"""Synthetic scenes and predictions with controlled noise, plus a brute-force oracle.

Random numbers come from ``numpy.random.Generator(PCG64(seed))``; PCG64 and
the numpy distribution algorithms used here (``uniform``, ``normal``,
``integers``, ``poisson``, ``choice``) are stable across platforms, and
every draw happens in a fixed order, so a spec and seed pin the output
bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from det9eval.dataset import (
    EVALUATED_CLASSES,
    IGNORED_CLASSES,
    FrameAnnotation,
    FramePrediction,
    GroundTruthObject,
    IgnoreRegion,
    Prediction,
    PROTOTYPES,
    predictions_to_dict,
    ground_truth_to_dict,
    write_json,
)
from det9eval.errors import BehindCamera, OracleBound
from det9eval.geometry import Box2D, Box3D, CameraModel, Rotation, amodal_bbox2d, standard_eval_to_optical, wrap_angle
from det9eval.matching import MetricConfig

ORACLE_MAX_PER_FRAME = 6

# prototypes each class draws from; on-rails has no prototype row
CLASS_PROTOTYPES = {
    "car": (
        "Mini Car", "Small Car", "Compact Car", "Sedan", "Station Wagon", "Box Wagon",
        "Sports Utility Vehicle", "Pick-Up", "Sports Car", "Small Van", "Large Van",
    ),
    "truck": ("Mini Truck", "Small Truck", "Medium Truck", "Large Truck"),
    "bus": ("Urban Bus (Solo)", "Coach Bus"),
    "motorcycle": ("Motorbike",),
    "bicycle": ("Bicycle",),
    "caravan": ("Caravan",),
    "trailer": ("Truck Trailer",),
}
#: (length, width, height) of a tram section
ON_RAILS_DIMS = (15.0, 2.65, 3.4)

CAMERA_HEIGHT = 1.3


def fixture_camera() -> CameraModel:
    """Cityscapes-like intrinsics; evaluation origin on the ground below the camera."""
    rot = standard_eval_to_optical()
    t = -(rot.matrix @ np.array([0.0, 0.0, CAMERA_HEIGHT]))
    return CameraModel(2262.0, 2262.0, 1096.0, 513.0, 2048, 1024, rot, tuple(float(v) + 0.0 for v in t))


@dataclass(frozen=True)
class FixtureSpec:
    seed: int = 0
    n_frames: int = 10
    #: inclusive (min, max) object count per frame for each generated class
    objects_per_class: Dict[str, Tuple[int, int]] = field(
        default_factory=lambda: {c: (0, 2) for c in EVALUATED_CLASSES}
    )
    depth_range: Tuple[float, float] = (8.0, 80.0)
    center_sigma: float = 0.0
    yaw_sigma: float = 0.0
    pitch_sigma: float = 0.0
    roll_sigma: float = 0.0
    #: sigma of log(predicted / true) per dimension
    dim_sigma: float = 0.0
    drop_prob: float = 0.0
    #: expected spurious false positives per frame (Poisson)
    fp_rate: float = 0.0
    confidence_jitter: float = 0.02
    #: spread of ground-truth pitch and roll around zero (radians)
    gt_tilt_sigma: float = 0.02

    def __post_init__(self):
        object.__setattr__(
            self, "objects_per_class", {k: tuple(v) for k, v in dict(self.objects_per_class).items()}
        )
        object.__setattr__(self, "depth_range", tuple(self.depth_range))
        if self.n_frames < 1:
            raise ValueError("n_frames must be at least 1")
        for name in ("center_sigma", "yaw_sigma", "pitch_sigma", "roll_sigma", "dim_sigma", "fp_rate",
                     "confidence_jitter", "gt_tilt_sigma"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0.0 <= self.drop_prob <= 1.0:
            raise ValueError("drop_prob must be in [0, 1]")
        if self.confidence_jitter > 0.04:
            raise ValueError("confidence_jitter must be at most 0.04")
        lo, hi = self.depth_range
        if not 0 < lo < hi:
            raise ValueError("depth_range must satisfy 0 < min < max")
        for cls, (a, b) in self.objects_per_class.items():
            if cls not in EVALUATED_CLASSES:
                raise ValueError(f"cannot generate class {cls!r}")
            if not 0 <= a <= b:
                raise ValueError(f"bad object count range for {cls}: {(a, b)}")
        if not any(b > 0 for _, b in self.objects_per_class.values()) and self.fp_rate == 0:
            raise ValueError("spec generates no objects")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["objects_per_class"] = {k: list(v) for k, v in sorted(self.objects_per_class.items())}
        d["depth_range"] = list(self.depth_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FixtureSpec":
        return cls(**d)

    @property
    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


# --------------------------------------------------------------------------
# generation
# --------------------------------------------------------------------------


def _overlaps(a: Box2D, b: Box2D) -> bool:
    return min(a.xmax, b.xmax) > max(a.xmin, b.xmin) and min(a.ymax, b.ymax) > max(a.ymin, b.ymin)


def _iou(a: Box2D, b: Box2D) -> float:
    w = min(a.xmax, b.xmax) - max(a.xmin, b.xmin)
    h = min(a.ymax, b.ymax) - max(a.ymin, b.ymin)
    if w <= 0 or h <= 0:
        return 0.0
    inter = w * h
    return inter / (a.area + b.area - inter)


def _sample_placement(rng, cam: CameraModel, depth_range, dims):
    depth = rng.uniform(*depth_range)
    half_fov = math.atan2(cam.width / 2.0, cam.fx)
    azimuth = rng.uniform(-0.8 * half_fov, 0.8 * half_fov)
    return (depth * math.cos(azimuth), depth * math.sin(azimuth), dims[2] / 2.0)


def _sample_dims(rng, cls) -> Tuple[Tuple[float, float, float], Optional[str]]:
    if cls == "on-rails":
        base, name = ON_RAILS_DIMS, None
    else:
        names = CLASS_PROTOTYPES[cls]
        name = names[int(rng.integers(len(names)))]
        base = PROTOTYPES[name].dims
    jitter = rng.uniform(0.95, 1.05, size=3)
    return tuple(float(b * j) for b, j in zip(base, jitter)), name


def _perturb(rng, spec: FixtureSpec, g: Box3D) -> Tuple[Box3D, float]:
    """Noisy copy of ``g`` and its confidence (higher for smaller perturbation)."""
    dc = rng.normal(0.0, 1.0, size=3) * spec.center_sigma
    d_yaw, d_pitch, d_roll = rng.normal(0.0, 1.0, size=3) * (spec.yaw_sigma, spec.pitch_sigma, spec.roll_sigma)
    d_dims = rng.normal(0.0, 1.0, size=3) * spec.dim_sigma
    jitter = rng.uniform(-spec.confidence_jitter, spec.confidence_jitter)

    yaw, pitch, roll = g.rotation.euler
    center = tuple(float(c + d) for c, d in zip(g.center, dc))
    dims = tuple(float(v * math.exp(e)) for v, e in zip(g.dims, d_dims))
    if any(dc) or d_yaw or d_pitch or d_roll:
        rot = Rotation.from_euler(wrap_angle(yaw + d_yaw), wrap_angle(pitch + d_pitch), wrap_angle(roll + d_roll))
    else:
        rot = g.rotation
    if not any(d_dims):
        dims = g.dims
    box = Box3D(center, dims, rot)

    size = 1.0
    for a, b in zip(dims, g.dims):
        size *= min(a / b, b / a)
    err = (
        min(1.0, math.hypot(dc[0], dc[1]) / 2.0)
        + abs(wrap_angle(d_yaw)) / math.pi
        + (abs(wrap_angle(d_pitch)) + abs(wrap_angle(d_roll))) / (2 * math.pi)
        + (1.0 - size)
    ) / 4.0
    conf = min(0.98, max(0.02, 0.95 - 0.5 * err + jitter))
    return box, conf


def _spurious(rng, spec: FixtureSpec, cam, gt_boxes_by_class, config) -> Prediction:
    classes = sorted(c for c, (_, hi) in spec.objects_per_class.items() if hi > 0) or list(EVALUATED_CLASSES)
    cls = classes[int(rng.integers(len(classes)))]
    pred = None
    for _ in range(50):
        dims, _ = _sample_dims(rng, cls)
        center = _sample_placement(rng, cam, spec.depth_range, dims)
        box = Box3D(center, dims, Rotation.from_euler(rng.uniform(-math.pi, math.pi)))
        conf = float(rng.uniform(0.05, 0.6))
        b2 = amodal_bbox2d(cam, box)
        pred = Prediction(cls, box, conf)
        if all(_iou(b2, gb) < config.iou_threshold for gb in gt_boxes_by_class.get(cls, [])):
            return pred
    return pred


def _greedy_labels(gt_boxes, preds, pred_boxes, thr):
    """TP pairs of one class by plain confidence-greedy matching (no ignore regions)."""
    taken = set()
    pairs, fps = [], []
    for i in sorted(range(len(preds)), key=lambda i: (-preds[i].confidence, i)):
        best_j, best = -1, -1.0
        if pred_boxes[i] is not None:
            for j, gb in enumerate(gt_boxes):
                v = _iou(pred_boxes[i], gb)
                if j not in taken and v > best:
                    best_j, best = j, v
        if best_j >= 0 and best >= thr:
            taken.add(best_j)
            pairs.append((i, best_j))
        else:
            fps.append(i)
    return pairs, fps


def gen_fixtures(spec: FixtureSpec, config: MetricConfig = MetricConfig()):
    """Generate ``(gt_frames, pred_frames, expected)`` for ``spec``.

    Same-class ground-truth boxes in a frame have pairwise disjoint amodal 2D
    boxes, so each prediction has an unambiguous ground-truth candidate.
    ``expected`` holds per-class AP, working point, DDTP values and DS derived
    from the generator's own knowledge of which prediction came from which
    object, evaluated by the reference formulas of :func:`oracle_scores`.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    cam = fixture_camera()
    gt_frames, pred_frames = [], []
    scored: Dict[str, List[Tuple[float, bool]]] = {c: [] for c in config.classes}
    n_gt = {c: 0 for c in config.classes}
    tp_pairs: Dict[str, List[Tuple[Prediction, GroundTruthObject]]] = {c: [] for c in config.classes}

    for fi in range(spec.n_frames):
        image_id = f"synthetic_{spec.seed}_{fi:05d}"
        objects: List[GroundTruthObject] = []
        boxes_by_class: Dict[str, List[Box2D]] = {}
        for cls in sorted(spec.objects_per_class):
            lo, hi = spec.objects_per_class[cls]
            count = int(rng.integers(lo, hi + 1))
            for k in range(count):
                for _ in range(100):
                    dims, proto = _sample_dims(rng, cls)
                    center = _sample_placement(rng, cam, spec.depth_range, dims)
                    yaw = rng.uniform(-math.pi, math.pi)
                    pitch, roll = rng.normal(0.0, 1.0, size=2) * spec.gt_tilt_sigma
                    box = Box3D(center, dims, Rotation.from_euler(yaw, pitch, roll))
                    b2 = amodal_bbox2d(cam, box)
                    if not any(_overlaps(b2, other) for other in boxes_by_class.get(cls, [])):
                        boxes_by_class.setdefault(cls, []).append(b2)
                        objects.append(
                            GroundTruthObject(cls, box, prototype=proto, instance_id=f"{image_id}/{cls}/{k}")
                        )
                        break

        preds_by_class: Dict[str, List[Prediction]] = {}
        for obj in objects:
            if rng.uniform() < spec.drop_prob:
                continue
            box, conf = _perturb(rng, spec, obj.box)
            preds_by_class.setdefault(obj.label, []).append(Prediction(obj.label, box, conf))
        for _ in range(int(rng.poisson(spec.fp_rate)) if spec.fp_rate > 0 else 0):
            p = _spurious(rng, spec, cam, boxes_by_class, config)
            preds_by_class.setdefault(p.label, []).append(p)

        frame_preds = []
        for cls in config.classes:
            gts = [o for o in objects if o.label == cls]
            preds = preds_by_class.get(cls, [])
            frame_preds.extend(preds)
            pred_boxes = []
            for p in preds:
                try:
                    pred_boxes.append(amodal_bbox2d(cam, p.box))
                except BehindCamera:
                    pred_boxes.append(None)
            pairs, fps = _greedy_labels(boxes_by_class.get(cls, []), preds, pred_boxes, config.iou_threshold)
            n_gt[cls] += len(gts)
            scored[cls].extend((preds[i].confidence, True) for i, _ in pairs)
            scored[cls].extend((preds[i].confidence, False) for i in fps)
            tp_pairs[cls].extend((preds[i], gts[j]) for i, j in pairs)
        gt_frames.append(FrameAnnotation(image_id, cam, tuple(objects), ()))
        pred_frames.append(FramePrediction(image_id, tuple(frame_preds)))

    per_class = {}
    for cls in config.classes:
        ap, c_w = oracle_ap(scored[cls], n_gt[cls])
        pairs = [(p, g) for p, g in tp_pairs[cls] if c_w is not None and p.confidence >= c_w]
        ddtp = oracle_ddtp(pairs, config)
        per_class[cls] = {
            "n_gt": n_gt[cls],
            "ap": ap,
            "c_w": c_w,
            "ddtp": ddtp,
            "ds": ap * sum(ddtp.values()) / 4.0,
        }
    present = [v["ds"] for v in per_class.values() if v["n_gt"] > 0]
    expected = {
        "per_class": per_class,
        "mds": sum(present) / len(present) if present else 0.0,
        "spec": spec.to_dict(),
        "spec_digest": spec.digest,
    }
    return gt_frames, pred_frames, expected


def write_fixtures(spec: FixtureSpec, out_dir, config: MetricConfig = MetricConfig()) -> Dict[str, Path]:
    """Write ``gt.json``, ``pred.json`` and ``expected.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    gt, preds, expected = gen_fixtures(spec, config)
    paths = {"gt": out / "gt.json", "pred": out / "pred.json", "expected": out / "expected.json"}
    write_json(ground_truth_to_dict(gt), paths["gt"])
    write_json(predictions_to_dict(preds), paths["pred"])
    paths["expected"].write_text(json.dumps(expected, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths


# --------------------------------------------------------------------------
# small random instances for differential testing
# --------------------------------------------------------------------------


def random_instance(rng: np.random.Generator, config: MetricConfig = MetricConfig()):
    """A tiny adversarial scene: clustered overlapping objects, ignore regions,
    filtered and ignored-class objects, duplicate detections and confidences
    shared across frames. At most 6 ground truth and 6 predictions per frame
    and class; confidences are distinct within a frame.
    """
    cam = fixture_camera()
    grid = np.round(np.arange(0.05, 1.0, 0.05), 2)
    classes = list(rng.choice(np.array(config.classes), size=int(rng.integers(1, 3)), replace=False))
    gt_frames, pred_frames = [], []
    for fi in range(int(rng.integers(1, 4))):
        objects, preds, regions = [], [], []
        for cls in classes:
            n_gt = int(rng.integers(0, 7))
            anchor = (rng.uniform(6, 110), rng.uniform(-4, 4))
            gts = []
            for k in range(n_gt):
                dims, proto = _sample_dims(rng, cls)
                center = (anchor[0] + rng.normal(0, 1.5), anchor[1] + rng.normal(0, 2.0), dims[2] / 2)
                rot = Rotation.from_euler(rng.uniform(-math.pi, math.pi), rng.normal(0, 0.05), rng.normal(0, 0.05))
                occ = float(rng.choice([0.0, 0.3, 0.8, 0.9]))
                trunc = float(rng.choice([0.0, 0.6, 0.7], p=[0.8, 0.1, 0.1]))
                gts.append(GroundTruthObject(cls, Box3D(center, dims, rot), occ, trunc, proto, f"{fi}/{cls}/{k}"))
            objects.extend(gts)
            cls_preds = []
            for g in gts:
                for _ in range(int(rng.choice([0, 1, 1, 2]))):
                    s = rng.choice([0.02, 0.2, 0.6])
                    c = tuple(float(v + rng.normal(0, s)) for v in g.box.center)
                    yaw, pitch, roll = g.box.rotation.euler
                    rot = Rotation.from_euler(yaw + rng.normal(0, 3 * s), pitch + rng.normal(0, s / 2), roll + rng.normal(0, s / 2))
                    dims = tuple(float(v * math.exp(rng.normal(0, s / 3))) for v in g.box.dims)
                    cls_preds.append(Box3D(c, dims, rot))
            for _ in range(int(rng.integers(0, 3))):
                dims, _ = _sample_dims(rng, cls)
                c = (anchor[0] + rng.normal(0, 4), anchor[1] + rng.normal(0, 4), dims[2] / 2)
                cls_preds.append(Box3D(c, dims, Rotation.from_euler(rng.uniform(-math.pi, math.pi))))
            cls_preds = cls_preds[:ORACLE_MAX_PER_FRAME]
            confs = rng.choice(grid, size=len(cls_preds), replace=False)
            preds.extend(Prediction(cls, b, float(c)) for b, c in zip(cls_preds, confs))
        if rng.uniform() < 0.3:
            objects.append(
                GroundTruthObject("caravan", Box3D((rng.uniform(8, 40), rng.uniform(-3, 3), 1.5), (7.2, 2.2, 3.0)))
            )
        for _ in range(int(rng.integers(0, 3))):
            x0, y0 = rng.uniform(0, 1800), rng.uniform(300, 700)
            regions.append(IgnoreRegion(Box2D(x0, y0, x0 + rng.uniform(20, 400), y0 + rng.uniform(20, 300))))
        image_id = f"inst_{fi}"
        gt_frames.append(FrameAnnotation(image_id, cam, tuple(objects), tuple(regions)))
        pred_frames.append(FramePrediction(image_id, tuple(preds)))
    return gt_frames, pred_frames


# --------------------------------------------------------------------------
# oracle
# --------------------------------------------------------------------------


def oracle_ap(scored: Sequence[Tuple[float, bool]], n_gt: int) -> Tuple[float, Optional[float]]:
    """AP and working point by enumerating every confidence threshold.

    Precision and recall are exact fractions. The precision envelope at a
    recall level r is the best precision of any threshold reaching recall r.
    Returns ``(ap, c_w)``; ``c_w`` is None without predictions or ground truth.
    """
    if n_gt == 0 or not scored:
        return 0.0, None
    thresholds = sorted({c for c, _ in scored}, reverse=True)
    table = []
    for c in thresholds:
        tp = sum(1 for s, t in scored if s >= c and t)
        fp = sum(1 for s, t in scored if s >= c and not t)
        table.append((c, Fraction(tp, tp + fp), Fraction(tp, n_gt)))
    recalls = sorted({r for _, _, r in table})
    ap = Fraction(0)
    prev = Fraction(0)
    for r in recalls:
        ap += (r - prev) * max(p for _, p, rr in table if rr >= r)
        prev = r
    best = max(p * r for _, p, r in table)
    c_w = max(c for c, p, r in table if p * r == best)
    return float(ap), c_w


def oracle_ddtp(pairs: Sequence[Tuple[Prediction, GroundTruthObject]], config: MetricConfig = MetricConfig()) -> Dict[str, float]:
    """Depth integrals of the per-bin means, summed bin by bin.

    Each bin contributes ``k(s) * delta_s``; the integral over the populated
    depth range is rescaled to the full ``[0, x_max)`` range (or, with
    ``empty_bins_as_zero``, taken as is).
    """
    x_max, ds = config.x_max, config.delta_s
    n_bins = int(round(x_max / ds))
    bins: Dict[int, list] = {}
    for d, g in pairs:
        depth = math.sqrt(g.box.center[0] ** 2 + g.box.center[1] ** 2)
        if depth >= x_max:
            continue
        bins.setdefault(min(int(math.floor(depth / ds)), n_bins - 1), []).append((d.box, g.box))
    if not bins:
        return {"bevcd": 0.0, "yaw_sim": 0.0, "pr_sim": 0.0, "size_sim": 0.0}

    integrals = {"bevcd": 0.0, "yaw_sim": 0.0, "pr_sim": 0.0, "size_sim": 0.0}
    for members in bins.values():
        n = len(members)
        k = {"bevcd": 0.0, "yaw_sim": 0.0, "pr_sim": 0.0, "size_sim": 0.0}
        for db, gb in members:
            dyaw, dpitch, droll = (a - b for a, b in zip(db.rotation.euler, gb.rotation.euler))
            k["bevcd"] += min(x_max, math.sqrt((db.center[0] - gb.center[0]) ** 2 + (db.center[1] - gb.center[1]) ** 2))
            k["yaw_sim"] += (1 + math.cos(dyaw)) / 2
            k["pr_sim"] += (2 + math.cos(dpitch) + math.cos(droll)) / 4
            prod = 1.0
            for a, b in zip(db.dims, gb.dims):
                prod *= min(a / b, b / a)
            k["size_sim"] += prod
        for m in integrals:
            integrals[m] += k[m] / n * ds
    covered = x_max if config.empty_bins_as_zero else len(bins) * ds
    scale = x_max / covered
    return {
        "bevcd": 1 - integrals["bevcd"] * scale / x_max**2,
        "yaw_sim": integrals["yaw_sim"] * scale / x_max,
        "pr_sim": integrals["pr_sim"] * scale / x_max,
        "size_sim": integrals["size_sim"] * scale / x_max,
    }


def _rect_cover(p, r) -> float:
    w = min(p[2], r[2]) - max(p[0], r[0])
    h = min(p[3], r[3]) - max(p[1], r[1])
    area = (p[2] - p[0]) * (p[3] - p[1])
    return max(0.0, w) * max(0.0, h) / area if area > 0 else 0.0


def _rect_iou(a, b) -> float:
    w = min(a[2], b[2]) - max(a[0], b[0])
    h = min(a[3], b[3]) - max(a[1], b[1])
    inter = max(0.0, w) * max(0.0, h)
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union if union > 0 else 0.0


def _rect(cam, box) -> Optional[tuple]:
    try:
        return amodal_bbox2d(cam, box).as_tuple()
    except BehindCamera:
        return None


def _exhaustive_assignment(ious: List[List[float]], thr: float) -> List[int]:
    """Best assignment (pred index -> gt index or -1) over all injective options.

    Predictions are listed in priority order; assignments compare
    lexicographically, each prediction preferring any match over none and a
    higher IoU (then lower GT index) over a lower one.
    """
    n_pred = len(ious)
    best_key, best = None, None
    assign = [-1] * n_pred
    used = set()

    def key():
        return tuple((ious[i][j], -j) if j >= 0 else (-1.0, 0) for i, j in enumerate(assign))

    def rec(i):
        nonlocal best_key, best
        if i == n_pred:
            k = key()
            if best_key is None or k > best_key:
                best_key, best = k, list(assign)
            return
        for j, v in enumerate(ious[i]):
            if j not in used and v >= thr:
                used.add(j)
                assign[i] = j
                rec(i + 1)
                used.discard(j)
        assign[i] = -1
        rec(i + 1)

    rec(0)
    return best


def _oracle_frame(frame: FrameAnnotation, preds: Sequence[Prediction], cls: str, config: MetricConfig):
    cam = frame.camera
    regions = [r.bbox.as_tuple() for r in frame.ignore_regions]
    gts = []
    for o in frame.objects:
        filtered = round(o.occlusion * 10) > 8 or round(o.truncation * 10) > 6 or o.label in IGNORED_CLASSES
        if filtered:
            rect = _rect(cam, o.box)
            if rect is not None:
                regions.append(rect)
        elif o.label == cls:
            rect = _rect(cam, o.box)
            if rect is not None:
                gts.append((o, rect))
    ps = [p for p in preds if p.label == cls]
    if len(ps) > ORACLE_MAX_PER_FRAME or len(gts) > ORACLE_MAX_PER_FRAME:
        raise OracleBound(f"frame {frame.image_id}: {len(ps)} predictions / {len(gts)} ground truth for {cls}")
    if len({p.confidence for p in ps}) != len(ps):
        raise OracleBound(f"frame {frame.image_id}: tied confidences for {cls}")
    ps.sort(key=lambda p: -p.confidence)
    rects = [_rect(cam, p.box) for p in ps]
    ious = [[_rect_iou(r, gr) if r is not None else 0.0 for _, gr in gts] for r in rects]
    assign = _exhaustive_assignment(ious, config.iou_threshold)
    tps, fps = [], []
    for i, j in enumerate(assign):
        if j >= 0:
            tps.append((ps[i], gts[j][0]))
        elif rects[i] is not None and any(_rect_cover(rects[i], r) >= config.ignore_cover_threshold for r in regions):
            continue
        else:
            fps.append(ps[i])
    return tps, fps, len(gts)


@dataclass(frozen=True)
class OracleResult:
    per_class: Dict[str, dict]
    mds: float


def oracle_evaluate(
    gt: Sequence[FrameAnnotation], preds: Sequence[FramePrediction], config: MetricConfig = MetricConfig()
) -> OracleResult:
    """Reference evaluation by exhaustive matching and literal formulas.

    Only for tiny instances: at most 6 predictions and 6 ground truth per
    frame and class, with distinct confidences inside each frame and class.
    """
    by_id = {f.image_id: f.predictions for f in preds}
    per_class = {}
    for cls in config.classes:
        scored, n_gt = [], 0
        for frame in gt:
            tps, fps, n = _oracle_frame(frame, by_id.get(frame.image_id, ()), cls, config)
            n_gt += n
            scored += [(p.confidence, True) for p, _ in tps] + [(p.confidence, False) for p in fps]
        ap, c_w = oracle_ap(scored, n_gt)
        pairs = []
        if c_w is not None:
            for frame in gt:
                kept = [p for p in by_id.get(frame.image_id, ()) if p.confidence >= c_w]
                pairs += _oracle_frame(frame, kept, cls, config)[0]
        ddtp = oracle_ddtp(pairs, config)
        per_class[cls] = {"n_gt": n_gt, "ap": ap, "c_w": c_w, "ddtp": ddtp, "ds": ap * sum(ddtp.values()) / 4}
    present = [v["ds"] for v in per_class.values() if v["n_gt"] > 0]
    return OracleResult(per_class, sum(present) / len(present) if present else 0.0)
