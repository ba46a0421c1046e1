"""Shared builders for the test suite."""

import math

import pytest

from det9eval.dataset import FrameAnnotation, FramePrediction, GroundTruthObject, IgnoreRegion, Prediction
from det9eval.fixtures import fixture_camera
from det9eval.geometry import Box2D, Box3D, CameraModel, Rotation


@pytest.fixture()
def cam():
    return fixture_camera()


@pytest.fixture()
def simple_cam():
    """fx = fy = 1000, principal point (1024, 512), camera at the evaluation origin."""
    return CameraModel(1000.0, 1000.0, 1024.0, 512.0, 2048, 1024)


def car_box(x, y, yaw=0.0, dims=(4.70, 1.81, 1.45), pitch=0.0, roll=0.0):
    return Box3D((x, y, dims[2] / 2), dims, Rotation.from_euler(yaw, pitch, roll))


@pytest.fixture()
def make_box():
    return car_box


@pytest.fixture()
def make_frame(cam):
    """Factory for a single frame from GT boxes, predictions and ignore regions."""

    def _make(gt=(), preds=(), regions=(), label="car", image_id="f0"):
        objects = []
        for i, g in enumerate(gt):
            if isinstance(g, GroundTruthObject):
                objects.append(g)
            else:
                objects.append(GroundTruthObject(label, g, instance_id=f"{image_id}/{i}"))
        predictions = [p if isinstance(p, Prediction) else Prediction(label, p[0], p[1]) for p in preds]
        ignore = [r if isinstance(r, IgnoreRegion) else IgnoreRegion(Box2D(*r)) for r in regions]
        return FrameAnnotation(image_id, cam, tuple(objects), tuple(ignore)), FramePrediction(image_id, tuple(predictions))

    return _make


@pytest.fixture()
def three_det_two_gt(make_frame):
    """Two cars; detections: TP at 0.9, FP at 0.7, TP at 0.6."""
    g1, g2 = car_box(20.0, 3.0, 0.3), car_box(30.0, -4.0, -1.0)
    far = car_box(60.0, 12.0, 2.0)
    return make_frame(gt=[g1, g2], preds=[(g1, 0.9), (far, 0.7), (g2, 0.6)])


def iou_shift(box: Box3D, dy: float) -> Box3D:
    return Box3D((box.center[0], box.center[1] + dy, box.center[2]), box.dims, box.rotation)


@pytest.fixture()
def shift():
    return iou_shift


PI = math.pi


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
