"""Oriented and axis-aligned box geometry.

Conventions used throughout the package:

* LiDAR frame: x forward, y left, z up; yaw measured counter-clockwise from
  +x, always stored wrapped to (-pi, pi].
* ``Box3D.z`` is the height of the volumetric center, not the bottom face.
* Footprint corners are returned counter-clockwise.
* BEV IoU ignores z and h; 3D IoU multiplies footprint overlap by vertical
  extent overlap. Both are exactly symmetric in their arguments and return
  exactly 1.0 for identical boxes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._native import get_backend

TAU = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Wrap an angle to the half-open interval (-pi, pi]."""
    t = math.fmod(theta, TAU)
    if t <= -math.pi:
        t += TAU
    elif t > math.pi:
        t -= TAU
    return t


def wrap_angles(theta) -> np.ndarray:
    """Vectorized :func:`wrap_angle` for arrays."""
    t = np.mod(np.asarray(theta, dtype=np.float64), TAU)
    t = np.where(t > math.pi, t - TAU, t)
    t = np.where(t <= -math.pi, t + TAU, t)
    return t


@dataclass(frozen=True)
class AabbBox2D:
    """Axis-aligned rectangle stored as min/max corners, sizes positive."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError(f"non-positive box extents: {self}")

    @classmethod
    def from_center_size(cls, x: float, y: float, sx: float,
                         sy: float) -> "AabbBox2D":
        return cls(x - 0.5 * sx, y - 0.5 * sy, x + 0.5 * sx, y + 0.5 * sy)

    @property
    def x(self) -> float:
        return 0.5 * (self.x_min + self.x_max)

    @property
    def y(self) -> float:
        return 0.5 * (self.y_min + self.y_max)

    @property
    def sx(self) -> float:
        return self.x_max - self.x_min

    @property
    def sy(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)


@dataclass(frozen=True)
class RotatedBox2D:
    """Oriented rectangle: center, length along heading, width across it."""

    x: float
    y: float
    length: float
    width: float
    yaw: float

    def __post_init__(self):
        if not (self.length > 0.0 and self.width > 0.0):
            raise ValueError(f"non-positive box dimensions: {self}")
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    @property
    def area(self) -> float:
        return self.length * self.width


@dataclass(frozen=True)
class Box3D:
    """Oriented 3D box; ``z`` is the volumetric center height."""

    x: float
    y: float
    z: float
    length: float
    width: float
    height: float
    yaw: float

    def __post_init__(self):
        if not (self.length > 0.0 and self.width > 0.0 and self.height > 0.0):
            raise ValueError(f"non-positive box dimensions: {self}")
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    @property
    def footprint(self) -> RotatedBox2D:
        return RotatedBox2D(self.x, self.y, self.length, self.width, self.yaw)

    @property
    def z_bottom(self) -> float:
        return self.z - 0.5 * self.height

    @property
    def z_top(self) -> float:
        return self.z + 0.5 * self.height


def box_corners(box: RotatedBox2D) -> np.ndarray:
    """Footprint corners (4, 2), counter-clockwise from the rear-right one.

    "Rear-right" means the (-length/2, -width/2) corner in the box frame.
    """
    c = math.cos(box.yaw)
    s = math.sin(box.yaw)
    hl = 0.5 * box.length
    hw = 0.5 * box.width
    out = np.empty((4, 2), dtype=np.float64)
    for i, (dx, dy) in enumerate(((-hl, -hw), (hl, -hw), (hl, hw), (-hl, hw))):
        out[i, 0] = box.x + dx * c - dy * s
        out[i, 1] = box.y + dx * s + dy * c
    return out


def corners_3d(box: Box3D) -> np.ndarray:
    """All 8 corners (8, 3): bottom face CCW first, then top face CCW."""
    foot = box_corners(box.footprint)
    out = np.empty((8, 3), dtype=np.float64)
    out[:4, :2] = foot
    out[4:, :2] = foot
    out[:4, 2] = box.z_bottom
    out[4:, 2] = box.z_top
    return out


def aabb_hull(box: RotatedBox2D) -> AabbBox2D:
    """Tightest axis-aligned box containing the rotated box."""
    corners = box_corners(box)
    return AabbBox2D(
        float(corners[:, 0].min()), float(corners[:, 1].min()),
        float(corners[:, 0].max()), float(corners[:, 1].max()))


def polygon_area(vertices) -> float:
    """Signed shoelace area of a polygon (positive when CCW)."""
    v = np.asarray(vertices, dtype=np.float64)
    x = v[:, 0]
    y = v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def aabb_iou(a: AabbBox2D, b: AabbBox2D) -> float:
    """IoU of two axis-aligned boxes; 0.0 when either has zero area."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return min(1.0, max(0.0, inter / union))


def convex_intersection_area(poly_a, poly_b) -> float:
    """Intersection area of two convex CCW polygons, (n, 2) arrays."""
    return float(get_backend().convex_intersection_area(
        np.asarray(poly_a, dtype=np.float64),
        np.asarray(poly_b, dtype=np.float64)))


def rotated_box_to_array(box: RotatedBox2D) -> np.ndarray:
    return np.array([box.x, box.y, box.length, box.width, box.yaw],
                    dtype=np.float64)


def rotated_boxes_to_array(boxes) -> np.ndarray:
    """Stack rotated boxes into an (n, 5) float64 array."""
    out = np.empty((len(boxes), 5), dtype=np.float64)
    for i, b in enumerate(boxes):
        out[i, 0] = b.x
        out[i, 1] = b.y
        out[i, 2] = b.length
        out[i, 3] = b.width
        out[i, 4] = b.yaw
    return out


def box3d_to_array(box: Box3D) -> np.ndarray:
    return np.array(
        [box.x, box.y, box.z, box.length, box.width, box.height, box.yaw],
        dtype=np.float64)


def boxes3d_to_array(boxes) -> np.ndarray:
    """Stack 3D boxes into an (n, 7) float64 array."""
    out = np.empty((len(boxes), 7), dtype=np.float64)
    for i, b in enumerate(boxes):
        out[i] = (b.x, b.y, b.z, b.length, b.width, b.height, b.yaw)
    return out


def box3d_from_array(row) -> Box3D:
    x, y, z, length, width, height, yaw = (float(v) for v in row)
    return Box3D(x, y, z, length, width, height, yaw)


def rotated_iou(a: RotatedBox2D, b: RotatedBox2D) -> float:
    """BEV IoU of two oriented boxes."""
    return float(get_backend().rotated_iou_pair(
        (a.x, a.y, a.length, a.width, a.yaw),
        (b.x, b.y, b.length, b.width, b.yaw)))


def rotated_iou_one_many(box: RotatedBox2D, boxes_array) -> np.ndarray:
    """BEV IoU of one box against an (m, 5) array of boxes."""
    return get_backend().rotated_iou_one_many(
        (box.x, box.y, box.length, box.width, box.yaw),
        np.asarray(boxes_array, dtype=np.float64))


def rotated_iou_matrix(boxes_a, boxes_b) -> np.ndarray:
    """Pairwise BEV IoU, (n, 5) x (m, 5) -> (n, m)."""
    return get_backend().rotated_iou_matrix(
        np.asarray(boxes_a, dtype=np.float64),
        np.asarray(boxes_b, dtype=np.float64))


def iou_3d(a: Box3D, b: Box3D) -> float:
    """Volumetric IoU of two oriented 3D boxes."""
    return float(get_backend().iou3d_pair(
        (a.x, a.y, a.z, a.length, a.width, a.height, a.yaw),
        (b.x, b.y, b.z, b.length, b.width, b.height, b.yaw)))


def iou_3d_matrix(boxes_a, boxes_b) -> np.ndarray:
    """Pairwise 3D IoU, (n, 7) x (m, 7) -> (n, m)."""
    return get_backend().iou3d_matrix(
        np.asarray(boxes_a, dtype=np.float64),
        np.asarray(boxes_b, dtype=np.float64))
