"""End-to-end evaluation: ignore regions, matching, AP, working point, DDTP, DS."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Mapping, Optional, Sequence

from det9eval.dataset import FrameAnnotation, FramePrediction, derive_ignore_regions
from det9eval.ddtp import DDTPValues, bin_true_positives, ddtp_metrics, working_point
from det9eval.errors import ValidationError
from det9eval.matching import MatchResult, MetricConfig, average_precision, depth_dependent_ap, match_frame, pr_curve
from det9eval.scoring import EvaluationReport, detection_scores


def _match_all(args) -> Dict[str, MatchResult]:
    frame, preds, config, thresholds = args
    frame = derive_ignore_regions(frame)
    out = {}
    for cls in config.classes:
        ps = [p for p in preds if p.label == cls]
        if thresholds is not None:
            c_w = thresholds.get(cls)
            ps = [p for p in ps if c_w is not None and p.confidence >= c_w]
        out[cls] = match_frame(frame, ps, cls, frame.camera, config)
    return out


def _fan_out(tasks: list, workers: int) -> List[Dict[str, MatchResult]]:
    if workers <= 1 or len(tasks) <= 1:
        return [_match_all(t) for t in tasks]
    chunk = max(1, len(tasks) // (workers * 4))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_match_all, tasks, chunksize=chunk))


def join_frames(gt: Sequence[FrameAnnotation], preds: Sequence[FramePrediction]) -> list:
    """Pair each ground-truth frame with its predictions (empty when missing)."""
    by_id = {}
    for fp in preds:
        if fp.image_id in by_id:
            raise ValidationError("duplicate image_id in predictions", frame=fp.image_id, field="image_id")
        by_id[fp.image_id] = fp
    gt_ids = {f.image_id for f in gt}
    unknown = [i for i in by_id if i not in gt_ids]
    if unknown:
        raise ValidationError("prediction frame has no ground-truth frame", frame=unknown[0], field="image_id")
    return [(f, by_id[f.image_id].predictions if f.image_id in by_id else ()) for f in gt]


def evaluate(
    gt: Sequence[FrameAnnotation],
    preds: Sequence[FramePrediction],
    config: MetricConfig = MetricConfig(),
    workers: int = 1,
    inputs: Optional[Mapping[str, str]] = None,
) -> EvaluationReport:
    pairs = join_frames(gt, preds)
    first = _fan_out([(f, p, config, None) for f, p in pairs], workers)

    aps, curves, depth_aps, thresholds, counts = {}, {}, {}, {}, {}
    for cls in config.classes:
        matches = [m[cls] for m in first]
        curve = pr_curve(matches)
        curves[cls] = curve
        aps[cls] = average_precision(curve)
        depth_aps[cls] = tuple(depth_dependent_ap(matches, cls, config))
        thresholds[cls] = working_point(curve).c_w if curve.points and not curve.empty else None
        counts[cls] = {
            "n_gt": curve.n_gt,
            "tp": sum(len(m.true_positives) for m in matches),
            "fp": sum(len(m.false_positives) for m in matches),
            "fn": sum(len(m.false_negatives) for m in matches),
            "discarded": sum(len(m.discarded) for m in matches),
            "excluded_gt": sum(len(m.excluded) for m in matches),
        }

    second = _fan_out([(f, p, config, thresholds) for f, p in pairs], workers)

    ddtps: Dict[str, DDTPValues] = {}
    extras = {}
    for cls in config.classes:
        c_w = thresholds[cls]
        if c_w is None:
            ddtps[cls] = DDTPValues.zeros(config.n_bins)
            wp = None
        else:
            ddtps[cls] = ddtp_metrics(bin_true_positives([m[cls] for m in second], config), config)
            wp = working_point(curves[cls])
        extras[cls] = {
            "c_w": c_w,
            "p_w": wp.precision if wp else None,
            "r_w": wp.recall if wp else None,
            "depth_ap": depth_aps[cls],
            "counts": counts[cls],
        }
    return detection_scores(
        aps,
        ddtps,
        present={cls: curves[cls].n_gt > 0 for cls in config.classes},
        extras=extras,
        config=config,
        n_frames=len(gt),
        inputs=dict(inputs or {}),
    )
