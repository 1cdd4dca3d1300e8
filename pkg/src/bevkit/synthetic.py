"""Deterministic synthetic scenes: clouds, labels and calibration files.

Scenes are desk-scale KITTI lookalikes used by the benchmark command, the
end-to-end oracle tests, and as a self-contained demo dataset. Objects sit
on the ground plane, are kept far enough apart that their footprints never
overlap (so NMS keeps them all), stay inside the camera field of view, and
cycle through occlusion/truncation combinations that populate every
difficulty stratum. Everything is a pure function of the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bev import GridConfig
from .geometry import Box3D, box_corners, wrap_angle
from .kitti_io import (Calibration, ObjectLabel, box_to_label,
                       save_point_cloud, write_labels)

# Left-color-camera intrinsics in the KITTI ballpark; the LiDAR-to-camera
# rotation is the canonical axis permutation (x_cam = -y_velo,
# y_cam = -z_velo, z_cam = x_velo) plus a small translation.
_P2 = np.array([
    [721.5377, 0.0, 621.0, 44.85728],
    [0.0, 721.5377, 187.5, 0.2163791],
    [0.0, 0.0, 1.0, 2.745884e-3],
])
_TR_VELO_TO_CAM = np.array([
    [0.0, -1.0, 0.0, 0.0],
    [0.0, 0.0, -1.0, -0.08],
    [1.0, 0.0, 0.0, -0.27],
])

CATEGORY_SIZES = {
    # (length, width, height) meters
    "Car": (3.9, 1.6, 1.53),
    "Pedestrian": (0.8, 0.6, 1.76),
    "Cyclist": (1.76, 0.6, 1.74),
}

# (truncation, occlusion) patterns cycled over objects; together with large
# projected bbox heights they populate easy, moderate and hard strata.
_META_CYCLE = ((0.0, 0), (0.05, 0), (0.20, 1), (0.45, 2))

# Forward/lateral slots (meters); pairwise distances exceed any footprint,
# and |y|/x stays under ~0.55 so every box projects inside the image.
_SLOTS = ((10.0, -5.0), (12.0, 4.0), (18.0, -8.0), (20.0, 7.0),
          (26.0, 0.0), (16.0, 0.5), (24.0, -11.0), (28.0, 9.0))

_YAWS = (0.0, 0.5 * math.pi, -0.5 * math.pi, math.pi, 0.3, -1.1, 2.4, -2.8)


def synthetic_calibration(image_size=(1242, 375)) -> Calibration:
    return Calibration(
        cam_projection=_P2,
        rect_rotation=np.eye(3),
        velo_to_cam=_TR_VELO_TO_CAM,
        image_size=image_size,
    )


@dataclass(frozen=True)
class SyntheticObject:
    category: str
    box: Box3D
    truncation: float
    occlusion: int


@dataclass(frozen=True)
class SyntheticFrame:
    frame_id: str
    objects: tuple[SyntheticObject, ...]
    with_dontcare: bool


def synthetic_frame(index: int, seed: int = 0,
                    grid: GridConfig | None = None) -> SyntheticFrame:
    """Deterministic object layout for frame ``index``."""
    if grid is None:
        grid = GridConfig()
    rng = np.random.default_rng([seed, index, 1])
    n_objects = 3 + index % 3
    slot_offset = index % len(_SLOTS)
    categories = tuple(CATEGORY_SIZES)
    objects = []
    for k in range(n_objects):
        category = categories[(index + k) % len(categories)]
        length, width, height = CATEGORY_SIZES[category]
        sx, sy = _SLOTS[(slot_offset + k) % len(_SLOTS)]
        x = sx + float(rng.uniform(-0.8, 0.8))
        y = sy + float(rng.uniform(-0.8, 0.8))
        # Keep the whole footprint inside the camera frustum: the synthetic
        # intrinsics give a half-tangent of ~0.86, and every footprint point
        # is within the circumradius of the center, so capping |y| at
        # 0.82*(x - reach) - reach leaves margin at the nearest slots.
        reach = 0.5 * math.hypot(length, width)
        max_y = 0.82 * (x - reach) - reach
        if abs(y) > max_y:
            y = math.copysign(max_y, y)
        yaw = wrap_angle(_YAWS[(index + 2 * k) % len(_YAWS)]
                         + float(rng.uniform(-0.1, 0.1)))
        truncation, occlusion = _META_CYCLE[(index + k) % len(_META_CYCLE)]
        box = Box3D(x=x, y=y, z=grid.ground_z + 0.5 * height,
                    length=length, width=width, height=height, yaw=yaw)
        objects.append(SyntheticObject(category, box, truncation, occlusion))
    return SyntheticFrame(
        frame_id=f"{index:06d}",
        objects=tuple(objects),
        with_dontcare=index % 4 == 0,
    )


def synthetic_cloud(n_points: int, seed: int = 0,
                    grid: GridConfig | None = None,
                    frame: SyntheticFrame | None = None) -> np.ndarray:
    """Random in-grid cloud: FOV-shaped ground plus points on any objects."""
    if grid is None:
        grid = GridConfig()
    rng = np.random.default_rng([seed, 2])
    n_object_pts = 0
    object_pts = []
    if frame is not None and frame.objects and n_points >= 20:
        per_box = max(10, n_points // (5 * len(frame.objects)))
        for obj in frame.objects:
            b = obj.box
            local = rng.uniform(-0.5, 0.5, size=(per_box, 3))
            c, s = math.cos(b.yaw), math.sin(b.yaw)
            px = b.x + local[:, 0] * b.length * c - local[:, 1] * b.width * s
            py = b.y + local[:, 0] * b.length * s + local[:, 1] * b.width * c
            pz = b.z + local[:, 2] * b.height
            refl = rng.uniform(0.2, 0.9, size=per_box)
            object_pts.append(np.stack([px, py, pz, refl], axis=1))
        n_object_pts = sum(p.shape[0] for p in object_pts)
    n_ground = max(0, n_points - n_object_pts)
    gx = rng.uniform(2.0, grid.forward_range - 1.0, size=n_ground)
    gy = rng.uniform(-0.55, 0.55, size=n_ground) * gx
    gz = grid.ground_z + np.abs(rng.normal(0.0, 0.03, size=n_ground))
    gr = rng.uniform(0.05, 0.6, size=n_ground)
    parts = object_pts + [np.stack([gx, gy, gz, gr], axis=1)]
    cloud = np.concatenate(parts, axis=0).astype(np.float32)
    np.clip(cloud[:, 3], 0.0, 1.0, out=cloud[:, 3])
    return cloud


def _dontcare_label() -> ObjectLabel:
    return ObjectLabel(
        category="DontCare", truncation=-1.0, occlusion=-1, alpha=-10.0,
        bbox=(500.0, 150.0, 560.0, 190.0), dimensions=(-1.0, -1.0, -1.0),
        location=(-1000.0, -1000.0, -1000.0), rotation_y=-10.0)


def frame_labels(frame: SyntheticFrame, calib: Calibration) -> list[ObjectLabel]:
    labels = [
        box_to_label(obj.box, obj.category, calib,
                     truncation=obj.truncation, occlusion=obj.occlusion)
        for obj in frame.objects
    ]
    if frame.with_dontcare:
        labels.append(_dontcare_label())
    return labels


def _format_matrix(values: np.ndarray) -> str:
    return " ".join(f"{v:.12e}" for v in np.asarray(values).ravel())


def write_calibration(calib: Calibration, path) -> None:
    lines = [
        f"P2: {_format_matrix(calib.cam_projection)}",
        f"R0_rect: {_format_matrix(calib.rect_rotation)}",
        f"Tr_velo_to_cam: {_format_matrix(calib.velo_to_cam)}",
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def write_synthetic_dataset(root, n_frames: int = 12,
                            points_per_frame: int = 6000, seed: int = 0,
                            grid: GridConfig | None = None) -> list[str]:
    """Materialize a KITTI-layout dataset; returns the frame id list.

    Creates velodyne/, label_2/ and calib/ under ``root`` plus a split.txt
    naming every frame.
    """
    if grid is None:
        grid = GridConfig()
    root = Path(root)
    for sub in ("velodyne", "label_2", "calib"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    calib = synthetic_calibration()
    frame_ids = []
    for index in range(n_frames):
        frame = synthetic_frame(index, seed=seed, grid=grid)
        fid = frame.frame_id
        cloud = synthetic_cloud(points_per_frame, seed=seed + index,
                                grid=grid, frame=frame)
        save_point_cloud(cloud, root / "velodyne" / f"{fid}.bin")
        write_labels(frame_labels(frame, calib), root / "label_2" / f"{fid}.txt")
        write_calibration(calib, root / "calib" / f"{fid}.txt")
        frame_ids.append(fid)
    (root / "split.txt").write_text(
        "\n".join(frame_ids) + "\n", encoding="ascii")
    return frame_ids


def max_footprint_iou(frame: SyntheticFrame) -> float:
    """Largest pairwise BEV IoU among the frame's objects (diagnostic)."""
    from .geometry import rotated_iou
    worst = 0.0
    boxes = [o.box.footprint for o in frame.objects]
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            worst = max(worst, rotated_iou(boxes[i], boxes[j]))
    return worst


def corners_in_image(box: Box3D, calib: Calibration) -> bool:
    """True when all projected footprint corners land inside the image."""
    foot = box_corners(box.footprint)
    pts = np.concatenate(
        [foot, np.full((4, 1), box.z_bottom)], axis=1)
    u, v, depth = calib.project_lidar_to_image(pts)
    width, height = calib.image_size
    return bool(np.all((depth > 0) & (u >= 0) & (u < width)
                       & (v >= 0) & (v < height)))
