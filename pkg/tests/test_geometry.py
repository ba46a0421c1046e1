import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation as SciRotation

from det9eval.errors import BehindCamera
from det9eval.geometry import (
    Box2D,
    Box3D,
    CameraModel,
    Rotation,
    amodal_bbox2d,
    box_vertices,
    cover_fraction,
    iou2d,
    pair_terms,
    standard_eval_to_optical,
    wrap_angle,
)

angles = st.floats(-50.0, 50.0, allow_nan=False)
safe_pitch = st.floats(-math.pi / 2 + 1e-3, math.pi / 2 - 1e-3)
half_open_angle = st.floats(-math.pi, math.pi).filter(lambda a: a > -math.pi)
dims = st.tuples(*[st.floats(0.2, 20.0)] * 3)
centers = st.tuples(st.floats(-50, 50), st.floats(-50, 50), st.floats(-5, 5))


def rotations():
    return st.builds(Rotation.from_euler, half_open_angle, safe_pitch, half_open_angle)


def boxes():
    return st.builds(Box3D, centers, dims, rotations())


def rects():
    return st.builds(
        lambda x, y, w, h: Box2D(x, y, x + w, y + h),
        st.floats(-500, 500),
        st.floats(-500, 500),
        st.floats(0.5, 300),
        st.floats(0.5, 300),
    )


class TestWrapAngle:
    @pytest.mark.parametrize(
        "theta, expected",
        [(0.0, 0.0), (3 * math.pi, math.pi), (-3 * math.pi / 2, math.pi / 2), (math.pi, math.pi), (-math.pi, math.pi)],
    )
    def test_examples(self, theta, expected):
        assert wrap_angle(theta) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("bad", [math.inf, -math.inf, math.nan])
    def test_non_finite(self, bad):
        with pytest.raises(ValueError):
            wrap_angle(bad)

    @given(angles)
    def test_range_and_congruence(self, a):
        r = wrap_angle(a)
        assert -math.pi < r <= math.pi
        k = (r - a) / (2 * math.pi)
        assert abs(k - round(k)) < 1e-9


class TestRotation:
    @given(st.tuples(*[st.floats(-1, 1)] * 4).filter(lambda q: sum(c * c for c in q) > 1e-6))
    def test_unit_norm(self, q):
        r = Rotation(*q)
        assert abs(math.sqrt(sum(c * c for c in r.quaternion)) - 1.0) < 1e-9

    def test_zero_quaternion_rejected(self):
        with pytest.raises(ValueError):
            Rotation(0, 0, 0, 0)

    @given(half_open_angle, safe_pitch, half_open_angle)
    def test_euler_round_trip(self, yaw, pitch, roll):
        r = Rotation.from_euler(yaw, pitch, roll)
        got = r.euler
        for a, b in zip(got, (yaw, pitch, roll)):
            assert abs(wrap_angle(a - b)) < 1e-9
        assert all(-math.pi < v <= math.pi for v in got)

    @given(half_open_angle, safe_pitch, half_open_angle)
    @settings(max_examples=50)
    def test_matches_scipy_intrinsic_zyx(self, yaw, pitch, roll):
        ours = Rotation.from_euler(yaw, pitch, roll).matrix
        ref = SciRotation.from_euler("ZYX", [yaw, pitch, roll]).as_matrix()
        np.testing.assert_allclose(ours, ref, atol=1e-12)

    @given(rotations())
    def test_from_matrix_round_trip(self, r):
        back = Rotation.from_matrix(r.matrix)
        np.testing.assert_allclose(back.matrix, r.matrix, atol=1e-12)

    def test_quaternion_sign_convention(self):
        # yaw of +90 deg about the up axis
        r = Rotation.from_euler(math.pi / 2, 0, 0)
        np.testing.assert_allclose(r.quaternion, (math.sqrt(0.5), 0, 0, math.sqrt(0.5)), atol=1e-15)

    def test_standard_eval_to_optical_axes(self):
        m = standard_eval_to_optical().matrix
        np.testing.assert_allclose(m @ [1, 0, 0], [0, 0, 1], atol=1e-15)  # forward -> optical z
        np.testing.assert_allclose(m @ [0, 1, 0], [-1, 0, 0], atol=1e-15)  # left -> -x (x is right)
        np.testing.assert_allclose(m @ [0, 0, 1], [0, -1, 0], atol=1e-15)  # up -> -y (y is down)


class TestBox3D:
    def test_rejects_non_positive_dims(self):
        with pytest.raises(ValueError):
            Box3D((0, 0, 0), (1, 0, 1))

    def test_rejects_non_finite_center(self):
        with pytest.raises(ValueError):
            Box3D((math.nan, 0, 0), (1, 1, 1))


class TestBoxVertices:
    def test_unit_cube(self):
        v = box_vertices(Box3D((0, 0, 0), (2, 2, 2)))
        assert {tuple(p) for p in v} == set(itertools.product((-1.0, 1.0), repeat=3))

    def test_axis_aligned_offset(self):
        v = box_vertices(Box3D((10, 0, 0), (4, 2, 1)))
        assert set(v[:, 0]) == {8.0, 12.0}
        assert set(v[:, 1]) == {-1.0, 1.0}
        assert set(v[:, 2]) == {-0.5, 0.5}

    def test_quarter_turn_yaw(self):
        v = box_vertices(Box3D((0, 0, 0), (4, 2, 1), Rotation.from_euler(math.pi / 2)))
        np.testing.assert_allclose(sorted(set(np.round(v[:, 0], 12))), [-1, 1])
        np.testing.assert_allclose(sorted(set(np.round(v[:, 1], 12))), [-2, 2])

    def test_documented_order(self):
        v = box_vertices(Box3D((0, 0, 0), (2, 2, 2)))
        np.testing.assert_array_equal(v[0], [1, 1, 1])
        np.testing.assert_array_equal(v[6], [-1, -1, -1])

    @given(boxes())
    def test_rigid_shape(self, box):
        v = box_vertices(box)
        d = [np.linalg.norm(v[i] - v[j]) for i, j in itertools.combinations(range(8), 2)]
        l, w, h = box.dims
        # 12 edges: each dimension appears 4 times among the 28 pairwise distances
        for edge in (l, w, h):
            assert sum(abs(x - edge) < 1e-9 * max(1, edge) for x in d) >= 4
        diag = math.sqrt(l * l + w * w + h * h)
        assert max(d) == pytest.approx(diag, rel=1e-9)


class TestAmodalBBox:
    def test_hand_projection(self, simple_cam):
        # optical corners (+-1, +-0.5, 10 +- 2)
        b = amodal_bbox2d(simple_cam, Box3D((10, 0, 0), (4, 2, 1)))
        assert b.xmin == pytest.approx(1024 - 1000 / 8, abs=1e-9)
        assert b.xmax == pytest.approx(1024 + 1000 / 8, abs=1e-9)
        assert b.ymin == pytest.approx(512 - 500 / 8, abs=1e-9)
        assert b.ymax == pytest.approx(512 + 500 / 8, abs=1e-9)

    def test_tiny_box_on_axis_projects_to_principal_point(self, simple_cam):
        b = amodal_bbox2d(simple_cam, Box3D((30, 0, 0), (1e-6, 1e-6, 1e-6)))
        for u in (b.xmin, b.xmax):
            assert u == pytest.approx(1024, abs=1e-4)
        for v in (b.ymin, b.ymax):
            assert v == pytest.approx(512, abs=1e-4)

    def test_symmetric_about_principal_point(self, simple_cam):
        b = amodal_bbox2d(simple_cam, Box3D((15, 0, 0), (4, 2, 1.5)))
        assert (b.xmin + b.xmax) / 2 == pytest.approx(1024, abs=1e-9)
        assert (b.ymin + b.ymax) / 2 == pytest.approx(512, abs=1e-9)

    @given(boxes())
    @settings(max_examples=50)
    def test_projective_scaling(self, box):
        c1 = CameraModel(1000, 1000, 1024, 512, 2048, 1024)
        c2 = CameraModel(2000, 2000, 2048, 1024, 4096, 2048)
        moved = Box3D((abs(box.center[0]) + 30, box.center[1], box.center[2]), box.dims, box.rotation)
        a, b = amodal_bbox2d(c1, moved), amodal_bbox2d(c2, moved)
        np.testing.assert_allclose(np.array(b.as_tuple()), 2 * np.array(a.as_tuple()), rtol=1e-12, atol=1e-9)

    def test_behind_camera(self, simple_cam):
        with pytest.raises(BehindCamera):
            amodal_bbox2d(simple_cam, Box3D((-5, 0, 0), (4, 2, 1)))

    def test_vertices_behind_image_plane_are_clamped(self, simple_cam):
        # center in front, rear corners behind the camera: finite, very wide box
        b = amodal_bbox2d(simple_cam, Box3D((1.0, 0, 0), (4, 2, 1)))
        assert math.isfinite(b.xmin) and math.isfinite(b.xmax)
        assert b.xmax - b.xmin == pytest.approx(2 * 1000 * 1 / 0.1, rel=1e-9)

    @given(boxes())
    @settings(max_examples=50)
    def test_contains_vertex_projections(self, box):
        cam = CameraModel(1000, 1000, 1024, 512, 2048, 1024)
        moved = Box3D((abs(box.center[0]) + 60, box.center[1], box.center[2]), box.dims, box.rotation)
        b = amodal_bbox2d(cam, moved)
        uv = cam.project(cam.to_optical(box_vertices(moved)))
        assert np.all(uv[:, 0] >= b.xmin - 1e-9) and np.all(uv[:, 0] <= b.xmax + 1e-9)
        assert np.all(uv[:, 1] >= b.ymin - 1e-9) and np.all(uv[:, 1] <= b.ymax + 1e-9)

    def test_translation_is_applied(self):
        rot = standard_eval_to_optical()
        cam = CameraModel(1000, 1000, 1024, 512, 2048, 1024, rot, (0.0, 1.0, 0.0))
        b = amodal_bbox2d(cam, Box3D((10, 0, 0), (1e-6, 1e-6, 1e-6)))
        assert b.ymin == pytest.approx(512 + 100, abs=1e-3)


class TestIoU:
    def test_examples(self):
        a = Box2D(0, 0, 2, 2)
        assert iou2d(a, a) == 1.0
        assert iou2d(a, Box2D(5, 5, 6, 6)) == 0.0
        assert iou2d(a, Box2D(1, 0, 3, 2)) == pytest.approx(1 / 3, abs=1e-12)

    def test_touching_edges(self):
        assert iou2d(Box2D(0, 0, 1, 1), Box2D(1, 0, 2, 1)) == 0.0

    @given(rects(), rects())
    def test_symmetric_and_bounded(self, a, b):
        v = iou2d(a, b)
        assert v == iou2d(b, a)
        assert 0.0 <= v <= 1.0
        if a == b:
            assert v == 1.0

    @given(rects(), rects())
    def test_one_only_for_identical(self, a, b):
        if iou2d(a, b) == 1.0:
            np.testing.assert_allclose(a.as_tuple(), b.as_tuple(), atol=1e-6)


class TestCoverFraction:
    def test_examples(self):
        assert cover_fraction(Box2D(2, 2, 3, 3), Box2D(0, 0, 10, 10)) == 1.0
        assert cover_fraction(Box2D(0, 0, 1, 1), Box2D(5, 5, 6, 6)) == 0.0
        assert cover_fraction(Box2D(0, 0, 10, 10), Box2D(0, 0, 10, 7)) == pytest.approx(0.7, abs=1e-12)

    @given(rects(), rects())
    def test_bounded_and_at_least_iou(self, a, b):
        v = cover_fraction(a, b)
        assert 0.0 <= v <= 1.0
        assert v >= iou2d(a, b) - 1e-12


class TestPairTerms:
    def test_identity(self, make_box):
        g = make_box(20, 1, 0.4, pitch=0.02, roll=-0.01)
        t = pair_terms(g, g, 100.0)
        assert (t.bev_dist, t.yaw_term, t.pr_term, t.size_term) == (0.0, 1.0, 1.0, 1.0)

    def test_opposite_yaw(self, make_box):
        t = pair_terms(make_box(20, 1, math.pi / 2), make_box(20, 1, -math.pi / 2), 100.0)
        assert t.yaw_term == pytest.approx(0.0, abs=1e-12)
        assert t.pr_term == pytest.approx(1.0, abs=1e-12)
        assert t.size_term == 1.0

    def test_size_and_distance(self):
        d = Box3D((3, 4, 0), (4, 2, 1.5))
        g = Box3D((0, 0, 0), (5, 2, 1.5))
        t = pair_terms(d, g, 100.0)
        assert t.size_term == pytest.approx(0.8, abs=1e-12)
        assert t.bev_dist == pytest.approx(5.0, abs=1e-12)

    def test_distance_clamped(self):
        t = pair_terms(Box3D((0, 0, 0), (1, 1, 1)), Box3D((300, 0, 0), (1, 1, 1)), 100.0)
        assert t.bev_dist == 100.0

    def test_height_ignored_by_bev_distance(self):
        t = pair_terms(Box3D((0, 0, 5), (1, 1, 1)), Box3D((0, 0, 0), (1, 1, 1)), 100.0)
        assert t.bev_dist == 0.0

    @given(boxes(), boxes())
    def test_symmetric_and_bounded(self, d, g):
        a, b = pair_terms(d, g, 100.0), pair_terms(g, d, 100.0)
        for x, y in zip((a.bev_dist, a.yaw_term, a.pr_term, a.size_term), (b.bev_dist, b.yaw_term, b.pr_term, b.size_term)):
            assert x == pytest.approx(y, abs=1e-12)
        assert 0 <= a.bev_dist <= 100.0
        for v in (a.yaw_term, a.pr_term, a.size_term):
            assert 0.0 <= v <= 1.0

    @given(st.floats(0.5, 10), st.floats(0.01, 3), st.integers(0, 2))
    def test_size_term_strictly_decreasing(self, base, step, axis):
        g_dims = [base, 2.0, 1.5]
        g = Box3D((0, 0, 0), g_dims)

        def term(delta):
            d_dims = list(g_dims)
            d_dims[axis] = g_dims[axis] + delta
            return pair_terms(Box3D((0, 0, 0), d_dims), g, 100.0).size_term

        assert term(step) < term(step / 2) < term(0.0)
