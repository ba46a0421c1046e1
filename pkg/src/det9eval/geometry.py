"""9-DoF box geometry, camera projection and per-pair metric terms.

Conventions
-----------
Evaluation frame: x forward, y left, z up (meters).
Optical frame: z forward, x right, y down.
Euler angles are intrinsic z-y'-x'' (yaw about z, then pitch, then roll),
so ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``.

Corner ordering of :func:`box_vertices` follows the sign pattern of the
local offsets ``(sx * l/2, sy * w/2, sz * h/2)``::

    0: (+, +, +)   1: (+, -, +)   2: (-, -, +)   3: (-, +, +)
    4: (+, +, -)   5: (+, -, -)   6: (-, -, -)   7: (-, +, -)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, Tuple

import numpy as np

from det9eval.errors import BehindCamera

TWO_PI = 2.0 * math.pi
#: optical depth that projected vertices are clamped to (meters)
MIN_OPTICAL_DEPTH = 0.1

_CORNER_SIGNS = np.array(
    [
        [1, 1, 1],
        [1, -1, 1],
        [-1, -1, 1],
        [-1, 1, 1],
        [1, 1, -1],
        [1, -1, -1],
        [-1, -1, -1],
        [-1, 1, -1],
    ],
    dtype=float,
)


def wrap_angle(theta: float) -> float:
    """Map an angle to the half-open interval (-pi, pi]."""
    if not math.isfinite(theta):
        raise ValueError(f"angle must be finite, got {theta!r}")
    r = theta - TWO_PI * math.ceil((theta - math.pi) / TWO_PI)
    if r > math.pi:
        r -= TWO_PI
    elif r <= -math.pi:
        r += TWO_PI
    return r


@dataclass(frozen=True)
class Rotation:
    """Unit quaternion ``(qw, qx, qy, qz)``; normalized on construction."""

    qw: float = 1.0
    qx: float = 0.0
    qy: float = 0.0
    qz: float = 0.0

    def __post_init__(self):
        q = (float(self.qw), float(self.qx), float(self.qy), float(self.qz))
        if not all(math.isfinite(c) for c in q):
            raise ValueError(f"quaternion components must be finite, got {q}")
        n = math.sqrt(sum(c * c for c in q))
        if n < 1e-12:
            raise ValueError("quaternion must be non-zero")
        if abs(n - 1.0) <= 1e-15:
            n = 1.0  # keeps already-unit input bit-exact across round trips
        for name, c in zip(("qw", "qx", "qy", "qz"), q):
            object.__setattr__(self, name, c / n)

    @classmethod
    def from_euler(cls, yaw: float = 0.0, pitch: float = 0.0, roll: float = 0.0) -> "Rotation":
        cy, sy = math.cos(yaw / 2), math.sin(yaw / 2)
        cp, sp = math.cos(pitch / 2), math.sin(pitch / 2)
        cr, sr = math.cos(roll / 2), math.sin(roll / 2)
        return cls(
            cy * cp * cr + sy * sp * sr,
            cy * cp * sr - sy * sp * cr,
            cy * sp * cr + sy * cp * sr,
            sy * cp * cr - cy * sp * sr,
        )

    @classmethod
    def from_matrix(cls, m) -> "Rotation":
        """Quaternion from a proper rotation matrix (Shepperd's method)."""
        m = np.asarray(m, dtype=float)
        tr = m[0, 0] + m[1, 1] + m[2, 2]
        if tr > 0:
            s = 2.0 * math.sqrt(tr + 1.0)
            return cls(0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s)
        if m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
            s = 2.0 * math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
            return cls((m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s)
        if m[1, 1] > m[2, 2]:
            s = 2.0 * math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
            return cls((m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s)
        s = 2.0 * math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
        return cls((m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s)

    @property
    def quaternion(self) -> Tuple[float, float, float, float]:
        return (self.qw, self.qx, self.qy, self.qz)

    @cached_property
    def matrix(self) -> np.ndarray:
        w, x, y, z = self.quaternion
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )

    @cached_property
    def euler(self) -> Tuple[float, float, float]:
        """``(yaw, pitch, roll)``, each in (-pi, pi]."""
        m = self.matrix
        pitch = math.atan2(-m[2, 0], math.hypot(m[0, 0], m[1, 0]))
        yaw = math.atan2(m[1, 0], m[0, 0])
        roll = math.atan2(m[2, 1], m[2, 2])
        return (wrap_angle(yaw), wrap_angle(pitch), wrap_angle(roll))

    @property
    def yaw(self) -> float:
        return self.euler[0]

    @property
    def pitch(self) -> float:
        return self.euler[1]

    @property
    def roll(self) -> float:
        return self.euler[2]


@dataclass(frozen=True)
class Box3D:
    center: Tuple[float, float, float]
    dims: Tuple[float, float, float]  # (length, width, height)
    rotation: Rotation = field(default_factory=Rotation)

    def __post_init__(self):
        center = tuple(float(c) for c in self.center)
        dims = tuple(float(d) for d in self.dims)
        if len(center) != 3 or not all(math.isfinite(c) for c in center):
            raise ValueError(f"center must be 3 finite numbers, got {self.center!r}")
        if len(dims) != 3 or not all(math.isfinite(d) and d > 0 for d in dims):
            raise ValueError(f"dims must be 3 positive numbers, got {self.dims!r}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "dims", dims)

    @property
    def planar_depth(self) -> float:
        """Distance from the evaluation-frame origin in the ground (x, y) plane."""
        return math.hypot(self.center[0], self.center[1])


@dataclass(frozen=True)
class Box2D:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        # Projected boxes may collapse numerically; strict extent is enforced by the parser.
        if not (self.xmin <= self.xmax and self.ymin <= self.ymax):
            raise ValueError(f"invalid 2D box {self.as_tuple()}")

    @property
    def area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.xmin, self.ymin, self.xmax, self.ymax)


def standard_eval_to_optical() -> Rotation:
    """Rotation taking (forward, left, up) axes to optical (right, down, forward)."""
    return Rotation.from_matrix([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])


@dataclass(frozen=True)
class CameraModel:
    fx: float
    fy: float
    u0: float
    v0: float
    width: int
    height: int
    rotation: Rotation = field(default_factory=standard_eval_to_optical)
    translation: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (self.width > 0 and self.height > 0):
            raise ValueError("image size must be positive")
        t = tuple(float(c) for c in self.translation)
        if len(t) != 3 or not all(math.isfinite(c) for c in t):
            raise ValueError(f"translation must be 3 finite numbers, got {self.translation!r}")
        object.__setattr__(self, "translation", t)

    def to_optical(self, points) -> np.ndarray:
        """Transform (N, 3) evaluation-frame points to the optical frame."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.matrix.T + np.asarray(self.translation)

    def project(self, points_optical) -> np.ndarray:
        """Pinhole projection of (N, 3) optical-frame points to (N, 2) pixels."""
        p = np.asarray(points_optical, dtype=float)
        z = p[:, 2]
        return np.stack([self.fx * p[:, 0] / z + self.u0, self.fy * p[:, 1] / z + self.v0], axis=1)


def box_vertices(box: Box3D) -> np.ndarray:
    """The 8 corners of ``box`` as an (8, 3) array in the evaluation frame."""
    half = np.asarray(box.dims) / 2.0
    local = _CORNER_SIGNS * half
    return local @ box.rotation.matrix.T + np.asarray(box.center)


def amodal_bbox2d(cam: CameraModel, box: Box3D) -> Box2D:
    """Circumscribing image rectangle of all 8 projected vertices (not clipped)."""
    center_z = cam.to_optical(np.asarray([box.center]))[0, 2]
    if not center_z > 0:
        raise BehindCamera(f"box center at optical depth {center_z:.3f} m is behind the camera")
    pts = cam.to_optical(box_vertices(box))
    pts[:, 2] = np.maximum(pts[:, 2], MIN_OPTICAL_DEPTH)
    uv = cam.project(pts)
    lo = uv.min(axis=0)
    hi = uv.max(axis=0)
    return Box2D(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))


def _intersection_area(a: Box2D, b: Box2D) -> float:
    w = min(a.xmax, b.xmax) - max(a.xmin, b.xmin)
    h = min(a.ymax, b.ymax) - max(a.ymin, b.ymin)
    if w <= 0 or h <= 0:
        return 0.0
    return w * h


def iou2d(a: Box2D, b: Box2D) -> float:
    inter = _intersection_area(a, b)
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return min(1.0, inter / union)


def cover_fraction(pred: Box2D, region: Box2D) -> float:
    """Fraction of ``pred``'s area lying inside ``region``."""
    if pred.area <= 0:
        return 0.0
    return min(1.0, _intersection_area(pred, region) / pred.area)


@dataclass(frozen=True)
class PairTerms:
    bev_dist: float
    yaw_term: float
    pr_term: float
    size_term: float


def size_similarity(d_dims: Sequence[float], g_dims: Sequence[float]) -> float:
    s = 1.0
    for dv, gv in zip(d_dims, g_dims):
        s *= min(dv / gv, gv / dv)
    return s


def pair_terms(d: Box3D, g: Box3D, x_max: float) -> PairTerms:
    """Per-pair summands of the four true-positive metrics."""
    if not x_max > 0:
        raise ValueError("x_max must be positive")
    dist = math.hypot(d.center[0] - g.center[0], d.center[1] - g.center[1])
    d_yaw, d_pitch, d_roll = d.rotation.euler
    g_yaw, g_pitch, g_roll = g.rotation.euler
    yaw_term = (1.0 + math.cos(wrap_angle(d_yaw - g_yaw))) / 2.0
    pr_term = (2.0 + math.cos(wrap_angle(d_pitch - g_pitch)) + math.cos(wrap_angle(d_roll - g_roll))) / 4.0
    return PairTerms(
        bev_dist=min(x_max, dist),
        yaw_term=min(1.0, max(0.0, yaw_term)),
        pr_term=min(1.0, max(0.0, pr_term)),
        size_term=size_similarity(d.dims, g.dims),
    )
