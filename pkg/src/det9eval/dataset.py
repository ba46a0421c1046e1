"""Ground-truth and prediction file formats, validation and ignore regions."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple

from det9eval.errors import BehindCamera, NotFound, ParseError, ValidationError
from det9eval.geometry import Box2D, Box3D, CameraModel, Rotation, amodal_bbox2d

log = logging.getLogger(__name__)

CLASSES = ("car", "truck", "bus", "on-rails", "motorcycle", "bicycle", "caravan", "trailer")
EVALUATED_CLASSES = ("car", "truck", "bus", "on-rails", "motorcycle", "bicycle")
IGNORED_CLASSES = ("caravan", "trailer")
IGNORE_REASONS = ("crowd_group", "occluded", "truncated", "ignored_class")

# filter thresholds in tenths: "more than 80% occluded or 60% truncated"
MAX_OCCLUSION_TENTHS = 8
MAX_TRUNCATION_TENTHS = 6


@dataclass(frozen=True)
class SizePrototype:
    name: str
    height: float
    width: float
    length: float

    @property
    def dims(self) -> Tuple[float, float, float]:
        """(length, width, height), the order used by :class:`Box3D`."""
        return (self.length, self.width, self.height)


PROTOTYPES: Dict[str, SizePrototype] = {
    p.name: p
    for p in (
        SizePrototype("Mini Car", 1.45, 1.65, 2.70),
        SizePrototype("Small Car", 1.45, 1.65, 4.00),
        SizePrototype("Compact Car", 1.45, 1.80, 4.30),
        SizePrototype("Sedan", 1.45, 1.81, 4.70),
        SizePrototype("Station Wagon", 1.50, 1.85, 4.90),
        SizePrototype("Box Wagon", 1.80, 1.80, 4.35),
        SizePrototype("Sports Utility Vehicle", 1.70, 1.90, 4.70),
        SizePrototype("Pick-Up", 1.80, 1.92, 5.30),
        SizePrototype("Sports Car", 1.30, 1.81, 4.13),
        SizePrototype("Small Van", 1.90, 1.90, 5.40),
        SizePrototype("Large Van", 2.60, 1.85, 6.50),
        SizePrototype("Caravan", 3.00, 2.20, 7.20),
        SizePrototype("Mini Truck", 3.00, 2.20, 7.00),
        SizePrototype("Small Truck", 3.45, 2.32, 7.95),
        SizePrototype("Medium Truck", 4.00, 2.50, 12.00),
        SizePrototype("Large Truck", 4.00, 2.55, 6.80),
        SizePrototype("Truck Trailer", 4.00, 2.55, 13.60),
        SizePrototype("Urban Bus (Solo)", 3.10, 2.55, 12.00),
        SizePrototype("Urban Bus (Front)", 3.10, 2.55, 7.40),
        SizePrototype("Urban Bus (Back)", 3.10, 2.55, 7.40),
        SizePrototype("Coach Bus", 3.80, 2.55, 14.00),
        SizePrototype("Bicycle", 1.10, 0.42, 1.80),
        SizePrototype("Motorbike", 1.12, 0.80, 2.20),
    )
}


def prototype_lookup(name: str) -> SizePrototype:
    try:
        return PROTOTYPES[name]
    except KeyError:
        raise NotFound(f"unknown size prototype {name!r}") from None


@dataclass(frozen=True)
class GroundTruthObject:
    label: str
    box: Box3D
    occlusion: float = 0.0
    truncation: float = 0.0
    prototype: Optional[str] = None
    instance_id: Optional[str] = None
    group_id: Optional[str] = None


@dataclass(frozen=True)
class IgnoreRegion:
    bbox: Box2D
    reason: str = "crowd_group"


@dataclass(frozen=True)
class FrameAnnotation:
    image_id: str
    camera: CameraModel
    objects: Tuple[GroundTruthObject, ...] = ()
    ignore_regions: Tuple[IgnoreRegion, ...] = ()


@dataclass(frozen=True)
class Prediction:
    label: str
    box: Box3D
    confidence: float


@dataclass(frozen=True)
class FramePrediction:
    image_id: str
    predictions: Tuple[Prediction, ...] = ()


def tenths(value: float) -> int:
    return int(round(value * 10))


def derive_ignore_regions(frame: FrameAnnotation, cam: Optional[CameraModel] = None) -> FrameAnnotation:
    """Move non-evaluable objects into ignore regions.

    Objects more than 80% occluded, more than 60% truncated, or of an ignored
    class are removed from ``objects`` and their amodal 2D boxes appended to
    ``ignore_regions``. Existing regions are kept; applying twice is a no-op.
    """
    cam = cam or frame.camera
    kept = []
    regions = list(frame.ignore_regions)
    for obj in frame.objects:
        if tenths(obj.occlusion) > MAX_OCCLUSION_TENTHS:
            reason = "occluded"
        elif tenths(obj.truncation) > MAX_TRUNCATION_TENTHS:
            reason = "truncated"
        elif obj.label in IGNORED_CLASSES:
            reason = "ignored_class"
        else:
            kept.append(obj)
            continue
        try:
            regions.append(IgnoreRegion(amodal_bbox2d(cam, obj.box), reason))
        except BehindCamera:
            log.warning("frame %s: ignored %s object is behind the camera; no region added", frame.image_id, obj.label)
    return replace(frame, objects=tuple(kept), ignore_regions=tuple(regions))


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------


class _Collector:
    """Accumulates validation errors; raises on the first one unless collecting."""

    def __init__(self, path, collect: bool):
        self.path = path
        self.collect = collect
        self.errors: List[ValidationError] = []

    def fail(self, message, frame=None, field=None):
        err = ValidationError(message, frame=frame, field=field, path=self.path)
        if not self.collect:
            raise err
        self.errors.append(err)


def _load_json(path) -> Any:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, path=path, line=e.lineno, column=e.colno) from None


def _frames_list(doc, path) -> list:
    if not isinstance(doc, dict) or not isinstance(doc.get("frames"), list):
        raise ParseError('top level must be an object with a "frames" array', path=path)
    return doc["frames"]


def _number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _vector(v, n) -> bool:
    return isinstance(v, list) and len(v) == n and all(_number(c) for c in v)


def _rotation(raw: dict, key: str = "rotation") -> Rotation:
    if key in raw:
        q = raw[key]
        if not _vector(q, 4):
            raise ValueError(f"{key} must be [w, x, y, z]")
        norm = math.sqrt(sum(c * c for c in q))
        if abs(norm - 1.0) > 1e-3:
            raise ValueError(f"{key} quaternion is not unit length (norm {norm:.6g})")
        return Rotation(*q)
    if "euler" in raw:
        e = raw["euler"]
        if not _vector(e, 3):
            raise ValueError("euler must be [yaw, pitch, roll]")
        return Rotation.from_euler(*e)
    raise ValueError(f"missing {key!r} (or 'euler')")


def _box(raw: dict) -> Box3D:
    if not _vector(raw.get("center"), 3):
        raise ValueError("center must be [x, y, z]")
    if not _vector(raw.get("dims"), 3):
        raise ValueError("dims must be [l, w, h]")
    return Box3D(tuple(raw["center"]), tuple(raw["dims"]), _rotation(raw))


def _camera(raw) -> CameraModel:
    if not isinstance(raw, dict):
        raise ValueError("camera must be an object")
    for k in ("fx", "fy", "u0", "v0", "width", "height"):
        if not _number(raw.get(k)):
            raise ValueError(f"camera.{k} must be a number")
    pose = raw.get("eval_to_optical")
    kwargs = {}
    if pose is not None:
        if not isinstance(pose, dict):
            raise ValueError("camera.eval_to_optical must be an object")
        kwargs["rotation"] = _rotation(pose)
        t = pose.get("translation", [0.0, 0.0, 0.0])
        if not _vector(t, 3):
            raise ValueError("camera.eval_to_optical.translation must be [x, y, z]")
        kwargs["translation"] = tuple(t)
    return CameraModel(raw["fx"], raw["fy"], raw["u0"], raw["v0"], raw["width"], raw["height"], **kwargs)


def _fraction_tenths(v) -> bool:
    return _number(v) and 0.0 <= v <= 1.0 and abs(v * 10 - round(v * 10)) <= 1e-9 * 10


def _opt_str(raw, key):
    v = raw.get(key)
    if v is not None and not isinstance(v, str):
        raise ValueError(f"{key} must be a string")
    return v


def _gt_object(raw, c: _Collector, frame_id, i) -> Optional[GroundTruthObject]:
    where = f"objects[{i}]"
    if not isinstance(raw, dict):
        c.fail("object entry must be an object", frame_id, where)
        return None
    label = raw.get("label")
    if label not in CLASSES:
        c.fail(f"unknown class label {label!r}", frame_id, f"{where}.label")
        return None
    ok = True
    for key in ("occlusion", "truncation"):
        v = raw.get(key, 0.0)
        if not _fraction_tenths(v):
            c.fail(f"{key} must be a multiple of 0.1 in [0, 1], got {v!r}", frame_id, f"{where}.{key}")
            ok = False
    proto = raw.get("prototype")
    if proto is not None and proto not in PROTOTYPES:
        c.fail(f"unknown size prototype {proto!r}", frame_id, f"{where}.prototype")
        ok = False
    try:
        box = _box(raw)
        ids = {k: _opt_str(raw, k) for k in ("instance_id", "group_id")}
    except ValueError as e:
        c.fail(str(e), frame_id, where)
        return None
    if not ok:
        return None
    return GroundTruthObject(
        label=label,
        box=box,
        occlusion=float(raw.get("occlusion", 0.0)),
        truncation=float(raw.get("truncation", 0.0)),
        prototype=proto,
        **ids,
    )


def _ignore_region(raw, c: _Collector, frame_id, i) -> Optional[IgnoreRegion]:
    where = f"ignore_regions[{i}]"
    if not isinstance(raw, dict) or not _vector(raw.get("bbox"), 4):
        c.fail("bbox must be [xmin, ymin, xmax, ymax]", frame_id, f"{where}.bbox")
        return None
    x0, y0, x1, y1 = raw["bbox"]
    if not (x0 < x1 and y0 < y1):
        c.fail(f"bbox {raw['bbox']} has non-positive extent", frame_id, f"{where}.bbox")
        return None
    reason = raw.get("reason", "crowd_group")
    if reason not in IGNORE_REASONS:
        c.fail(f"unknown ignore reason {reason!r}", frame_id, f"{where}.reason")
        return None
    return IgnoreRegion(Box2D(x0, y0, x1, y1), reason)


def _image_id(raw, c: _Collector, i, seen: set) -> Optional[str]:
    if not isinstance(raw, dict):
        c.fail("frame entry must be an object", f"#{i}", "frames")
        return None
    image_id = raw.get("image_id")
    if not isinstance(image_id, str) or not image_id:
        c.fail("image_id must be a non-empty string", f"#{i}", "image_id")
        return None
    if image_id in seen:
        c.fail("duplicate image_id", image_id, "image_id")
        return None
    seen.add(image_id)
    return image_id


def _read_ground_truth(path, collect: bool):
    c = _Collector(path, collect)
    frames = []
    seen: set = set()
    for i, raw in enumerate(_frames_list(_load_json(path), path)):
        image_id = _image_id(raw, c, i, seen)
        if image_id is None:
            continue
        try:
            camera = _camera(raw.get("camera"))
        except ValueError as e:
            c.fail(str(e), image_id, "camera")
            continue
        objs_raw = raw.get("objects", [])
        regions_raw = raw.get("ignore_regions", [])
        if not isinstance(objs_raw, list) or not isinstance(regions_raw, list):
            c.fail("objects and ignore_regions must be arrays", image_id, "objects")
            continue
        objects = [_gt_object(o, c, image_id, j) for j, o in enumerate(objs_raw)]
        regions = [_ignore_region(r, c, image_id, j) for j, r in enumerate(regions_raw)]
        frames.append(
            FrameAnnotation(
                image_id=image_id,
                camera=camera,
                objects=tuple(o for o in objects if o is not None),
                ignore_regions=tuple(r for r in regions if r is not None),
            )
        )
    return frames, c.errors


def _read_predictions(path, collect: bool):
    c = _Collector(path, collect)
    frames = []
    seen: set = set()
    for i, raw in enumerate(_frames_list(_load_json(path), path)):
        image_id = _image_id(raw, c, i, seen)
        if image_id is None:
            continue
        preds_raw = raw.get("predictions", [])
        if not isinstance(preds_raw, list):
            c.fail("predictions must be an array", image_id, "predictions")
            continue
        preds = []
        for j, p in enumerate(preds_raw):
            where = f"predictions[{j}]"
            if not isinstance(p, dict):
                c.fail("prediction entry must be an object", image_id, where)
                continue
            if p.get("label") not in CLASSES:
                c.fail(f"unknown class label {p.get('label')!r}", image_id, f"{where}.label")
                continue
            score = p.get("score")
            if not _number(score) or not 0.0 <= score <= 1.0:
                c.fail(f"score must be in [0, 1], got {score!r}", image_id, f"{where}.score")
                continue
            try:
                box = _box(p)
            except ValueError as e:
                c.fail(str(e), image_id, where)
                continue
            preds.append(Prediction(p["label"], box, float(score)))
        frames.append(FramePrediction(image_id, tuple(preds)))
    return frames, c.errors


def parse_ground_truth(path) -> List[FrameAnnotation]:
    """Read and validate a ground-truth file, preserving frame order.

    Raises ParseError for malformed JSON and ValidationError on the first
    violated invariant.
    """
    return _read_ground_truth(path, collect=False)[0]


def parse_predictions(path) -> List[FramePrediction]:
    return _read_predictions(path, collect=False)[0]


def validate_ground_truth(path) -> List[ValidationError]:
    """All validation errors of a ground-truth file (empty when valid)."""
    return _read_ground_truth(path, collect=True)[1]


def validate_predictions(path) -> List[ValidationError]:
    return _read_predictions(path, collect=True)[1]


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------


def _box_dict(box: Box3D) -> dict:
    return {"center": list(box.center), "dims": list(box.dims), "rotation": list(box.rotation.quaternion)}


def camera_to_dict(cam: CameraModel) -> dict:
    return {
        "fx": cam.fx,
        "fy": cam.fy,
        "u0": cam.u0,
        "v0": cam.v0,
        "width": cam.width,
        "height": cam.height,
        "eval_to_optical": {"rotation": list(cam.rotation.quaternion), "translation": list(cam.translation)},
    }


def ground_truth_to_dict(frames: Iterable[FrameAnnotation]) -> dict:
    out = []
    for f in frames:
        objects = []
        for o in f.objects:
            d = {"label": o.label, **_box_dict(o.box), "occlusion": o.occlusion, "truncation": o.truncation}
            for k in ("prototype", "instance_id", "group_id"):
                if getattr(o, k) is not None:
                    d[k] = getattr(o, k)
            objects.append(d)
        out.append(
            {
                "image_id": f.image_id,
                "camera": camera_to_dict(f.camera),
                "objects": objects,
                "ignore_regions": [{"bbox": list(r.bbox.as_tuple()), "reason": r.reason} for r in f.ignore_regions],
            }
        )
    return {"frames": out}


def predictions_to_dict(frames: Iterable[FramePrediction]) -> dict:
    return {
        "frames": [
            {
                "image_id": f.image_id,
                "predictions": [{"label": p.label, **_box_dict(p.box), "score": p.confidence} for p in f.predictions],
            }
            for f in frames
        ]
    }


def write_json(doc: dict, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def write_ground_truth(frames: Iterable[FrameAnnotation], path) -> None:
    write_json(ground_truth_to_dict(frames), path)


def write_predictions(frames: Iterable[FramePrediction], path) -> None:
    write_json(predictions_to_dict(frames), path)
