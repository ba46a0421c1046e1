"""Detection scores, reports, dataset statistics and annotation comparison."""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from det9eval import __version__
from det9eval.dataset import CLASSES, FrameAnnotation
from det9eval.ddtp import METRICS, DDTPValues
from det9eval.errors import EmptyComparison
from det9eval.geometry import wrap_angle
from det9eval.matching import BinAP, MetricConfig

FORMATS = ("json", "csv", "plotdata")


def detection_score(ap: float, ddtp: DDTPValues) -> float:
    return ap * (ddtp.bevcd + ddtp.yaw_sim + ddtp.pr_sim + ddtp.size_sim) / 4.0


@dataclass(frozen=True)
class ClassReport:
    label: str
    ap: float
    ddtp: DDTPValues
    ds: float
    present: bool = True
    c_w: Optional[float] = None
    p_w: Optional[float] = None
    r_w: Optional[float] = None
    depth_ap: Tuple[BinAP, ...] = ()
    counts: Mapping[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class EvaluationReport:
    classes: Tuple[ClassReport, ...]
    mds: float
    config: MetricConfig = MetricConfig()
    n_frames: int = 0
    inputs: Mapping[str, str] = field(default_factory=dict)
    version: str = __version__

    def by_class(self, label: str) -> ClassReport:
        for c in self.classes:
            if c.label == label:
                return c
        raise KeyError(label)

    @property
    def n_present(self) -> int:
        return sum(c.present for c in self.classes)


def mean_detection_score(classes: Iterable[ClassReport]) -> float:
    scores = [c.ds for c in classes if c.present]
    return math.fsum(scores) / len(scores) if scores else 0.0


def detection_scores(
    ap: Mapping[str, float],
    ddtp: Mapping[str, DDTPValues],
    present: Optional[Mapping[str, bool]] = None,
    extras: Optional[Mapping[str, dict]] = None,
    **report_fields,
) -> EvaluationReport:
    """Combine per-class AP and DDTP values into DS per class and mDS.

    Classes flagged absent in ``present`` (no ground truth) are reported but
    left out of the mean. ``extras`` supplies further ``ClassReport`` fields.
    """
    reports = []
    for label in ap:
        kw = dict(extras.get(label, {})) if extras else {}
        is_present = True if present is None else present.get(label, True)
        reports.append(
            ClassReport(
                label=label,
                ap=ap[label],
                ddtp=ddtp[label],
                ds=detection_score(ap[label], ddtp[label]),
                present=is_present,
                **kw,
            )
        )
    return EvaluationReport(classes=tuple(reports), mds=mean_detection_score(reports), **report_fields)


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------


def _num(x):
    """Fixed 6-significant-digit rendering; None and ints pass through."""
    if x is None or isinstance(x, (bool, int)):
        return x
    return float(f"{x:.6g}")


def _bins_payload(c: ClassReport, config: MetricConfig) -> list:
    rows = []
    for i, (lo, hi) in enumerate(config.bin_edges()):
        row = {"s_low": _num(lo), "s_high": _num(hi)}
        row["ap"] = _num(c.depth_ap[i].ap) if c.depth_ap else None
        for m in METRICS:
            k = c.ddtp.per_bin.get(m)
            row[m] = _num(k[i]) if k else None
        rows.append(row)
    return rows


def report_to_dict(report: EvaluationReport) -> dict:
    classes = {}
    for c in report.classes:
        classes[c.label] = {
            "present": c.present,
            "ap": _num(c.ap),
            "ds": _num(c.ds),
            "c_w": _num(c.c_w),
            "p_w": _num(c.p_w),
            "r_w": _num(c.r_w),
            "ddtp": {m: _num(v) for m, v in c.ddtp.as_dict().items()},
            "counts": dict(c.counts),
            "bins": _bins_payload(c, report.config),
        }
    return {
        "tool": {"name": "det9eval", "version": report.version},
        "config": {k: _num(v) if isinstance(v, float) else v for k, v in report.config.to_dict().items()},
        "inputs": dict(report.inputs),
        "frames": report.n_frames,
        "mds": _num(report.mds),
        "classes": classes,
    }


_CSV_COLUMNS = (
    "class", "present", "n_gt", "tp", "fp", "fn", "discarded", "ap", "c_w",
    "bevcd", "yaw_sim", "pr_sim", "size_sim", "ds",
)


def _csv_text(report: EvaluationReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_CSV_COLUMNS)
    fmt = lambda v: "" if v is None else f"{v:.6g}"  # noqa: E731
    for c in report.classes:
        w.writerow(
            [c.label, int(c.present)]
            + [c.counts.get(k, 0) for k in ("n_gt", "tp", "fp", "fn", "discarded")]
            + [fmt(c.ap), fmt(c.c_w)]
            + [fmt(getattr(c.ddtp, m)) for m in METRICS]
            + [fmt(c.ds)]
        )
    return buf.getvalue()


def _plotdata(report: EvaluationReport) -> dict:
    out = {}
    edges = report.config.bin_edges()
    for c in report.classes:
        series = {
            "depth_ap": [
                {"s": _num(lo), "ap": _num(c.depth_ap[i].ap) if c.depth_ap else None}
                for i, (lo, _) in enumerate(edges)
            ]
        }
        for m in METRICS:
            k = c.ddtp.per_bin.get(m) or [None] * len(edges)
            series[m] = [{"s": _num(lo), "k": _num(k[i])} for i, (lo, _) in enumerate(edges)]
        out[c.label] = series
    return {"delta_s": _num(report.config.delta_s), "x_max": _num(report.config.x_max), "classes": out}


def render_report(report: EvaluationReport, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(report_to_dict(report), sort_keys=True, indent=2) + "\n"
    if fmt == "csv":
        return _csv_text(report)
    if fmt == "plotdata":
        return json.dumps(_plotdata(report), sort_keys=True, indent=2) + "\n"
    raise ValueError(f"unknown report format {fmt!r}; expected one of {FORMATS}")


def emit_report(report: EvaluationReport, fmt: str = "json", path=None) -> str:
    """Serialize ``report`` byte-stably; write to ``path`` when given."""
    text = render_report(report, fmt)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


# --------------------------------------------------------------------------
# dataset statistics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StatsReport:
    n_frames: int
    n_objects: int
    counts: Mapping[str, int]
    objects_per_image: Mapping[str, float]
    #: (s_low, s_high, count) rows of the planar distance histogram
    distance_histogram: Tuple[Tuple[float, float, int], ...]
    prototype_counts: Mapping[str, int]
    fraction_within_x_max: float

    def to_dict(self) -> dict:
        return {
            "frames": self.n_frames,
            "objects": self.n_objects,
            "counts": dict(self.counts),
            "objects_per_image": {k: _num(v) for k, v in self.objects_per_image.items()},
            "distance_histogram": [
                {"s_low": _num(lo), "s_high": _num(hi), "count": n} for lo, hi, n in self.distance_histogram
            ],
            "prototype_counts": dict(self.prototype_counts),
            "fraction_within_x_max": _num(self.fraction_within_x_max),
        }


def dataset_stats(frames: Sequence[FrameAnnotation], x_max: float = 100.0, bin_width: float = 5.0) -> StatsReport:
    counts = Counter()
    prototypes = Counter()
    hist = Counter()
    within = 0
    for f in frames:
        for o in f.objects:
            counts[o.label] += 1
            if o.prototype is not None:
                prototypes[o.prototype] += 1
            d = o.box.planar_depth
            hist[int(d // bin_width)] += 1
            within += d < x_max
    n_objects = sum(counts.values())
    n_frames = len(frames)
    top = max(hist) + 1 if hist else 0
    return StatsReport(
        n_frames=n_frames,
        n_objects=n_objects,
        counts={c: counts[c] for c in CLASSES},
        objects_per_image={c: counts[c] / n_frames if n_frames else 0.0 for c in CLASSES},
        distance_histogram=tuple((i * bin_width, (i + 1) * bin_width, hist[i]) for i in range(top)),
        prototype_counts=dict(sorted(prototypes.items())),
        fraction_within_x_max=within / n_objects if n_objects else 0.0,
    )


# --------------------------------------------------------------------------
# annotation comparison
# --------------------------------------------------------------------------

DISTANCE_LIMITS = (10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0, math.inf)


@dataclass(frozen=True)
class DeltaBin:
    up_to: float
    n: int
    yaw_error_deg: Optional[float]
    center_error_m: Optional[float]


@dataclass(frozen=True)
class AnnotationDelta:
    bins: Tuple[DeltaBin, ...]
    n_common: int

    def to_dict(self) -> dict:
        return {
            "common_instances": self.n_common,
            "bins": [
                {
                    "up_to": None if math.isinf(b.up_to) else _num(b.up_to),
                    "n": b.n,
                    "yaw_error_deg": _num(b.yaw_error_deg),
                    "center_error_m": _num(b.center_error_m),
                }
                for b in self.bins
            ],
        }


def compare_annotations(
    reference: Sequence[FrameAnnotation],
    candidate: Sequence[FrameAnnotation],
    limits: Sequence[float] = DISTANCE_LIMITS,
) -> AnnotationDelta:
    """Mean absolute yaw error and 3D center error of ``candidate`` against ``reference``.

    Objects are joined on ``(image_id, instance_id)``. Bins are cumulative:
    an object at reference planar distance d falls in every bin with
    ``d <= up_to``.
    """
    cand = {
        (f.image_id, o.instance_id): o for f in candidate for o in f.objects if o.instance_id is not None
    }
    errors = []
    for f in reference:
        for o in f.objects:
            other = cand.get((f.image_id, o.instance_id)) if o.instance_id is not None else None
            if other is None:
                continue
            yaw = abs(wrap_angle(other.box.rotation.yaw - o.box.rotation.yaw))
            center = math.dist(other.box.center, o.box.center)
            errors.append((o.box.planar_depth, math.degrees(yaw), center))
    if not errors:
        raise EmptyComparison("no instances common to both annotation sets")
    bins = []
    for up_to in limits:
        sel = [(y, c) for d, y, c in errors if d <= up_to]
        if sel:
            bins.append(
                DeltaBin(up_to, len(sel), math.fsum(y for y, _ in sel) / len(sel), math.fsum(c for _, c in sel) / len(sel))
            )
        else:
            bins.append(DeltaBin(up_to, 0, None, None))
    return AnnotationDelta(tuple(bins), len(errors))
