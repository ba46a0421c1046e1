"""Working point selection and depth-dependent true-positive metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple

from det9eval.dataset import GroundTruthObject, Prediction
from det9eval.errors import NoDetections
from det9eval.geometry import PairTerms, pair_terms
from det9eval.matching import MatchResult, MetricConfig, PRCurve

METRICS = ("bevcd", "yaw_sim", "pr_sim", "size_sim")
_TERM_OF = {"bevcd": "bev_dist", "yaw_sim": "yaw_term", "pr_sim": "pr_term", "size_sim": "size_term"}


@dataclass(frozen=True)
class WorkingPoint:
    c_w: float
    precision: float
    recall: float


def working_point(curve: PRCurve) -> WorkingPoint:
    """Confidence maximizing precision * recall; ties go to the higher confidence.

    Products are compared exactly via ``tp^2 / ((tp + fp) * n_gt)`` in integer
    arithmetic, so ties are detected without rounding noise.
    """
    if not curve.points:
        raise NoDetections("precision-recall curve has no points")
    best = curve.points[0]
    for pt in curve.points[1:]:
        # pt.tp^2 / (pt.tp + pt.fp) > best.tp^2 / (best.tp + best.fp), n_gt cancels
        if pt.tp * pt.tp * (best.tp + best.fp) > best.tp * best.tp * (pt.tp + pt.fp):
            best = pt
    return WorkingPoint(best.confidence, best.precision, best.recall)


@dataclass(frozen=True)
class DepthBin:
    s_low: float
    s_high: float
    pairs: Tuple[Tuple[Prediction, GroundTruthObject], ...]

    @property
    def n(self) -> int:
        return len(self.pairs)


def bin_true_positives(matches: Iterable[MatchResult], config: MetricConfig = MetricConfig()) -> List[DepthBin]:
    """Place TP pairs into the half-open depth bins by ground-truth planar depth."""
    buckets: List[list] = [[] for _ in range(config.n_bins)]
    for m in matches:
        for p, g, _ in m.true_positives:
            b = config.bin_index(g.box.planar_depth)
            if b is not None:
                buckets[b].append((p, g))
    return [DepthBin(lo, hi, tuple(pairs)) for (lo, hi), pairs in zip(config.bin_edges(), buckets)]


@dataclass(frozen=True)
class DDTPValues:
    bevcd: float
    yaw_sim: float
    pr_sim: float
    size_sim: float
    #: per-bin k(s) for each metric; None marks empty bins
    per_bin: Dict[str, Tuple[Optional[float], ...]]

    @property
    def mean(self) -> float:
        return (self.bevcd + self.yaw_sim + self.pr_sim + self.size_sim) / 4.0

    def as_dict(self) -> Dict[str, float]:
        return {m: getattr(self, m) for m in METRICS}

    @classmethod
    def zeros(cls, n_bins: int) -> "DDTPValues":
        empty = tuple([None] * n_bins)
        return cls(0.0, 0.0, 0.0, 0.0, {m: empty for m in METRICS})


def ddtp_metrics(bins: List[DepthBin], config: MetricConfig = MetricConfig()) -> DDTPValues:
    """BEVCD, YawSim, PRSim and SizeSim from binned TP pairs.

    The depth integral is discretized as a mean of the per-bin averages k(s)
    over non-empty bins (or over all bins with empty ones as 0 when
    ``config.empty_bins_as_zero``). BEVCD is ``1 - K / x_max``. With no pairs
    at all every value is 0.
    """
    per_bin: Dict[str, List[Optional[float]]] = {m: [] for m in METRICS}
    for b in bins:
        if not b.pairs:
            for m in METRICS:
                per_bin[m].append(None)
            continue
        terms: List[PairTerms] = [pair_terms(d.box, g.box, config.x_max) for d, g in b.pairs]
        for m in METRICS:
            attr = _TERM_OF[m]
            per_bin[m].append(sum(getattr(t, attr) for t in terms) / len(terms))

    filled = [v for v in per_bin["bevcd"] if v is not None]
    if not filled:
        return DDTPValues.zeros(len(bins))

    def integral(m):
        vals = per_bin[m]
        if config.empty_bins_as_zero:
            return sum(v or 0.0 for v in vals) / len(vals)
        present = [v for v in vals if v is not None]
        return sum(present) / len(present)

    bevcd = 1.0 - integral("bevcd") / config.x_max
    clamp = lambda v: min(1.0, max(0.0, v))  # noqa: E731
    return DDTPValues(
        bevcd=clamp(bevcd),
        yaw_sim=clamp(integral("yaw_sim")),
        pr_sim=clamp(integral("pr_sim")),
        size_sim=clamp(integral("size_sim")),
        per_bin={m: tuple(v) for m, v in per_bin.items()},
    )
