import math
import random

import numpy as np
import pytest

from det9eval.dataset import GroundTruthObject, Prediction, derive_ignore_regions
from det9eval.ddtp import DepthBin, bin_true_positives, ddtp_metrics, working_point
from det9eval.errors import NoDetections
from det9eval.fixtures import random_instance
from det9eval.geometry import Box3D, Rotation
from det9eval.matching import MatchResult, MetricConfig, curve_from_scores, match_frame, pr_curve

CONFIG = MetricConfig()


def gt_at(x, y=0.0, yaw=0.0, dims=(4.0, 2.0, 1.5)):
    return GroundTruthObject("car", Box3D((x, y, 0.75), dims, Rotation.from_euler(yaw)))


def pred_like(g, dx=0.0, dy=0.0, dyaw=0.0, dims=None, conf=0.9, dpitch=0.0, droll=0.0):
    b = g.box
    yaw, pitch, roll = b.rotation.euler
    return Prediction(
        "car",
        Box3D((b.center[0] + dx, b.center[1] + dy, b.center[2]), dims or b.dims,
              Rotation.from_euler(yaw + dyaw, pitch + dpitch, roll + droll)),
        conf,
    )


def bins_of(pairs):
    return bin_true_positives([MatchResult(true_positives=[(p, g, 1.0) for p, g in pairs])], CONFIG)


class TestWorkingPoint:
    def test_hand_scenario(self):
        curve = curve_from_scores([(0.9, True), (0.7, False), (0.6, True)], 2)
        wp = working_point(curve)
        assert wp.c_w == 0.6
        assert wp.precision * wp.recall == pytest.approx(2 / 3)

    def test_perfect(self):
        wp = working_point(curve_from_scores([(0.9, True), (0.5, True), (0.2, True)], 3))
        assert wp.c_w == 0.2 and wp.precision * wp.recall == 1.0

    def test_tie_goes_to_higher_confidence(self):
        # c=0.8: p=1, r=1/2 -> 1/2 ; c=0.3: p=2/4, r=1 -> 1/2
        curve = curve_from_scores([(0.8, True), (0.6, False), (0.4, False), (0.3, True)], 2)
        assert working_point(curve).c_w == 0.8

    def test_tie_detection_is_exact(self):
        # c=0.9: 1/1 * 1/7 ; c=0.01: 5/25 * 5/7 -- equal exactly, but the float product of the
        # second is larger, so a floating-point argmax would pick 0.01
        scored = [(0.9, True)] + [(0.5 - 0.01 * i, False) for i in range(20)]
        scored += [(0.04, True), (0.03, True), (0.02, True), (0.01, True)]
        assert (5 / 25) * (5 / 7) > 1.0 * (1 / 7)
        assert working_point(curve_from_scores(scored, 7)).c_w == 0.9

    def test_empty(self):
        with pytest.raises(NoDetections):
            working_point(curve_from_scores([], 3))

    def test_invariant_under_monotone_rescaling(self):
        rng = np.random.default_rng(2)
        scored = [(float(rng.uniform(0.01, 1)), bool(rng.uniform() < 0.5)) for _ in range(50)]
        a = working_point(curve_from_scores(scored, 40)).c_w
        b = working_point(curve_from_scores([(c**2, t) for c, t in scored], 40)).c_w
        assert b == a**2


class TestBinning:
    def test_edges(self):
        bins = bins_of([(pred_like(gt_at(0.0)), gt_at(0.0)), (pred_like(gt_at(25.0)), gt_at(25.0)),
                        (pred_like(gt_at(130.0)), gt_at(130.0))])
        assert len(bins) == 20
        assert bins[0].n == 1 and bins[5].n == 1
        assert (bins[5].s_low, bins[5].s_high) == (25.0, 30.0)
        assert sum(b.n for b in bins) == 2

    def test_ground_truth_depth_governs(self):
        g = gt_at(24.0)
        bins = bins_of([(pred_like(g, dx=7.0), g)])
        assert bins[4].n == 1

    def test_planar_depth(self):
        g = gt_at(3.0, 4.0)  # planar distance 5
        assert bins_of([(pred_like(g), g)])[1].n == 1


class TestDDTPMetrics:
    def test_exact(self):
        pairs = [(pred_like(g), g) for g in (gt_at(12, 1, 0.4), gt_at(47, -2, -2.0), gt_at(88, 5, 3.0))]
        v = ddtp_metrics(bins_of(pairs), CONFIG)
        assert (v.bevcd, v.yaw_sim, v.pr_sim, v.size_sim) == (1.0, 1.0, 1.0, 1.0)

    def test_single_offset(self):
        g = gt_at(30)
        v = ddtp_metrics(bins_of([(pred_like(g, dx=4.0 * 0.6, dy=4.0 * 0.8), g)]), CONFIG)
        assert v.bevcd == pytest.approx(0.96, abs=1e-12)

    def test_mean_over_non_empty_bins(self):
        g1, g2 = gt_at(12), gt_at(57)
        v = ddtp_metrics(bins_of([(pred_like(g1), g1), (pred_like(g2, dyaw=math.pi / 2), g2)]), CONFIG)
        assert v.yaw_sim == pytest.approx(0.75, abs=1e-12)
        assert v.per_bin["yaw_sim"][2] == 1.0
        assert v.per_bin["yaw_sim"][11] == pytest.approx(0.5, abs=1e-12)
        assert v.per_bin["yaw_sim"][0] is None

    def test_within_bin_mean_then_across_bins(self):
        # bin A: terms 1 and 0 -> 0.5 ; bin B: term 1 -> mean of bins 0.75 (pair mean would be 2/3)
        a1, a2, b = gt_at(11), gt_at(12, 5), gt_at(70)
        pairs = [(pred_like(a1), a1), (pred_like(a2, dyaw=math.pi), a2), (pred_like(b), b)]
        assert ddtp_metrics(bins_of(pairs), CONFIG).yaw_sim == pytest.approx(0.75, abs=1e-12)

    def test_pitch_roll_and_size(self):
        g = gt_at(30)
        v = ddtp_metrics(bins_of([(pred_like(g, dims=(5.0, 2.0, 1.5), dpitch=0.3, droll=-0.2), g)]), CONFIG)
        assert v.size_sim == pytest.approx(0.8, abs=1e-12)
        assert v.pr_sim == pytest.approx((2 + math.cos(0.3) + math.cos(0.2)) / 4, abs=1e-9)

    def test_no_pairs(self):
        v = ddtp_metrics(bins_of([]), CONFIG)
        assert (v.bevcd, v.yaw_sim, v.pr_sim, v.size_sim) == (0.0, 0.0, 0.0, 0.0)

    def test_bevcd_zero_beyond_x_max_offsets(self):
        g = gt_at(40)
        v = ddtp_metrics(bins_of([(pred_like(g, dy=150.0), g)]), CONFIG)
        assert v.bevcd == 0.0

    def test_empty_bins_as_zero_flag(self):
        g = gt_at(30)
        config = MetricConfig(empty_bins_as_zero=True)
        v = ddtp_metrics(bin_true_positives([MatchResult(true_positives=[(pred_like(g, dyaw=math.pi / 2), g, 1)])], config), config)
        assert v.yaw_sim == pytest.approx(0.5 / 20, abs=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_permutation_invariance(self, seed):
        rng = random.Random(seed)
        pairs = []
        for _ in range(15):
            g = gt_at(rng.uniform(1, 99), rng.uniform(-5, 5), rng.uniform(-3, 3))
            pairs.append((pred_like(g, rng.gauss(0, 1), rng.gauss(0, 1), rng.gauss(0, 0.3),
                                    (rng.uniform(3, 5), rng.uniform(1.5, 2.5), rng.uniform(1, 2))), g))
        base = ddtp_metrics(bins_of(pairs), CONFIG)
        rng.shuffle(pairs)
        shuffled_bins = bins_of(pairs)
        rng.shuffle(shuffled_bins)
        again = ddtp_metrics(shuffled_bins, CONFIG)
        for m in ("bevcd", "yaw_sim", "pr_sim", "size_sim"):
            assert getattr(again, m) == pytest.approx(getattr(base, m), abs=1e-12)

    def test_dims_swap_symmetry(self):
        g = gt_at(30)
        p = pred_like(g, dims=(3.3, 2.2, 1.1))
        swapped_g = GroundTruthObject("car", Box3D(g.box.center, p.box.dims, g.box.rotation))
        swapped_p = Prediction("car", Box3D(p.box.center, g.box.dims, p.box.rotation), 0.9)
        a = ddtp_metrics(bins_of([(p, g)]), CONFIG).size_sim
        b = ddtp_metrics(bins_of([(swapped_p, swapped_g)]), CONFIG).size_sim
        assert a == pytest.approx(b, abs=1e-15)

    def test_yaw_noise_monotone_in_expectation(self):
        means = []
        for sigma in (0.0, 0.05, 0.1, 0.2, 0.4, 0.8):
            vals = []
            for seed in range(100):
                rng = np.random.default_rng(seed)
                pairs = []
                for _ in range(10):
                    g = gt_at(rng.uniform(1, 99), rng.uniform(-3, 3), rng.uniform(-3, 3))
                    pairs.append((pred_like(g, dyaw=rng.normal(0, sigma)), g))
                vals.append(ddtp_metrics(bins_of(pairs), CONFIG).yaw_sim)
            means.append(np.mean(vals))
        assert all(b <= a for a, b in zip(means, means[1:]))
        assert means[0] == 1.0


class TestRestrictionToWorkingPoint:
    @pytest.mark.parametrize("seed", range(60))
    def test_terms_unchanged_only_membership(self, seed):
        config = MetricConfig()
        gt, preds = random_instance(np.random.default_rng(seed), config)
        for cls in config.classes:
            full = [match_frame(derive_ignore_regions(f), p, cls, f.camera, config) for f, p in zip(gt, preds)]
            curve = pr_curve(full)
            if not curve.points or curve.empty:
                continue
            c_w = working_point(curve).c_w
            for f, p, m in zip(gt, preds, full):
                kept = [q for q in p.predictions if q.confidence >= c_w]
                sub = match_frame(derive_ignore_regions(f), kept, cls, f.camera, config)
                full_pairs = {id(q): g for q, g, _ in m.true_positives if q.confidence >= c_w}
                assert {id(q): g for q, g, _ in sub.true_positives} == full_pairs
