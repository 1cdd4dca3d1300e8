"""KITTI-format I/O: point clouds, calibration files, labels, detections.

Frames: the rectified camera frame has x right, y down, z forward; the LiDAR
frame has x forward, y left, z up. Label locations are bottom-face centers in
camera coordinates, while :class:`~bevkit.geometry.Box3D` uses volumetric
centers in LiDAR coordinates; headings relate by ``yaw = -rotation_y - pi/2``
(wrapped). Dimensions are stored as (h, w, l) in labels and as length/width/
height on boxes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geometry
from .geometry import Box3D, wrap_angle

# Rotation blocks of calibration matrices must satisfy R @ R.T == I to this
# absolute tolerance, else the file is rejected.
ORTHONORMALITY_TOL = 1e-3

DEFAULT_IMAGE_SIZE = (1242, 375)

_POINT_DTYPE = np.dtype("<f4")


class ParseError(ValueError):
    """A KITTI artifact violates its file format."""


def load_point_cloud(path) -> np.ndarray:
    """Read a .bin point cloud into an (N, 4) float32 array (x, y, z, r).

    The byte length must be a multiple of 16 (little-endian float32
    quadruples). Reflectance is clamped into [0, 1] on load.
    """
    data = np.fromfile(path, dtype=_POINT_DTYPE)
    if data.size % 4 != 0:
        raise ParseError(
            f"{path}: byte length {data.size * 4} is not a multiple of 16")
    cloud = data.reshape(-1, 4)
    np.clip(cloud[:, 3], 0.0, 1.0, out=cloud[:, 3])
    return cloud


def save_point_cloud(cloud, path) -> None:
    """Write an (N, 4) array as little-endian float32 quadruples."""
    arr = np.asarray(cloud)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise ValueError(f"expected an (N, 4) point array, got {arr.shape}")
    np.ascontiguousarray(arr, dtype=_POINT_DTYPE).tofile(path)


def _check_rotation(name: str, r: np.ndarray) -> None:
    err = np.abs(r @ r.T - np.eye(3)).max()
    if err > ORTHONORMALITY_TOL:
        raise ParseError(
            f"{name} rotation block is not orthonormal (error {err:.2e})")


@dataclass(frozen=True, eq=False)
class Calibration:
    """Projection and rigid-transform matrices for one frame.

    ``cam_projection`` is the 3x4 left-color-camera projection applied to
    rectified coordinates, ``rect_rotation`` the 3x3 rectifying rotation, and
    ``velo_to_cam`` the 3x4 rigid transform from LiDAR to unrectified camera
    coordinates. ``image_size`` is (width, height) in pixels.
    """

    cam_projection: np.ndarray
    rect_rotation: np.ndarray
    velo_to_cam: np.ndarray
    image_size: tuple[int, int] = DEFAULT_IMAGE_SIZE

    def __post_init__(self):
        p = np.array(self.cam_projection, dtype=np.float64)
        r = np.array(self.rect_rotation, dtype=np.float64)
        t = np.array(self.velo_to_cam, dtype=np.float64)
        if p.shape != (3, 4):
            raise ParseError(f"cam_projection must be 3x4, got {p.shape}")
        if r.shape != (3, 3):
            raise ParseError(f"rect_rotation must be 3x3, got {r.shape}")
        if t.shape != (3, 4):
            raise ParseError(f"velo_to_cam must be 3x4, got {t.shape}")
        _check_rotation("rect_rotation", r)
        _check_rotation("velo_to_cam", t[:, :3])

        rect4 = np.eye(4)
        rect4[:3, :3] = r
        velo4 = np.eye(4)
        velo4[:3, :] = t
        lidar_to_rect = rect4 @ velo4
        for a in (p, r, t, lidar_to_rect):
            a.setflags(write=False)
        object.__setattr__(self, "cam_projection", p)
        object.__setattr__(self, "rect_rotation", r)
        object.__setattr__(self, "velo_to_cam", t)
        object.__setattr__(self, "_lidar_to_rect", lidar_to_rect)
        inv = np.linalg.inv(lidar_to_rect)
        inv.setflags(write=False)
        object.__setattr__(self, "_rect_to_lidar", inv)

    def transform_lidar_to_rect(self, points) -> np.ndarray:
        """Map (N, 3) LiDAR points to rectified camera coordinates."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self._lidar_to_rect[:3, :3].T + self._lidar_to_rect[:3, 3]

    def transform_rect_to_lidar(self, points) -> np.ndarray:
        """Map (N, 3) rectified camera points to LiDAR coordinates."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self._rect_to_lidar[:3, :3].T + self._rect_to_lidar[:3, 3]

    def project_rect_to_image(self, points):
        """Project (N, 3) rectified points; returns (u, v, depth) arrays.

        ``depth`` is the rectified z coordinate; u/v are meaningless where
        depth <= 0 (the caller decides validity from depth).
        """
        pts = np.asarray(points, dtype=np.float64)
        hom = pts @ self.cam_projection[:, :3].T + self.cam_projection[:, 3]
        depth = hom[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = hom[:, 0] / depth
            v = hom[:, 1] / depth
        return u, v, depth

    def project_lidar_to_image(self, points):
        """Project (N, 3) LiDAR points; returns (u, v, depth) arrays."""
        return self.project_rect_to_image(self.transform_lidar_to_rect(points))


def project_points_to_image(points, calib: Calibration):
    """Project (N, >=3) LiDAR points into the image plane.

    Returns (u, v, valid) where valid marks points in front of the camera
    whose projection lands inside the image bounds. u and v are defined
    only where valid is True.
    """
    pts = np.asarray(points, dtype=np.float64)
    u, v, depth = calib.project_lidar_to_image(pts[:, :3])
    width, height = calib.image_size
    valid = (depth > 0) & (u >= 0) & (u < width) & (v >= 0) & (v < height)
    return u, v, valid


def camera_fov_mask(points, calib: Calibration) -> np.ndarray:
    """Boolean mask of points that project inside the camera image."""
    return project_points_to_image(points, calib)[2]


_CALIB_SHAPES = {
    "P2": (12, (3, 4)),
    "R0_rect": (9, (3, 3)),
    "Tr_velo_to_cam": (12, (3, 4)),
}


def parse_calibration(path, image_size=DEFAULT_IMAGE_SIZE) -> Calibration:
    """Parse a KITTI calib file; requires P2, R0_rect and Tr_velo_to_cam."""
    values = {}
    with open(path, "r", encoding="ascii") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or ":" not in line:
                continue
            key, _, rest = line.partition(":")
            values[key.strip()] = rest.split()
    matrices = {}
    for key, (count, shape) in _CALIB_SHAPES.items():
        if key not in values:
            raise ParseError(f"{path}: missing calibration key {key!r}")
        fields = values[key]
        if len(fields) != count:
            raise ParseError(
                f"{path}: key {key!r} has {len(fields)} values, expected {count}")
        try:
            matrices[key] = np.array(
                [float(v) for v in fields], dtype=np.float64).reshape(shape)
        except ValueError as exc:
            raise ParseError(f"{path}: key {key!r}: {exc}") from None
    return Calibration(
        cam_projection=matrices["P2"],
        rect_rotation=matrices["R0_rect"],
        velo_to_cam=matrices["Tr_velo_to_cam"],
        image_size=image_size,
    )


@dataclass(frozen=True)
class ObjectLabel:
    """One line of a KITTI label or detection file.

    ``dimensions`` is (h, w, l) and ``location`` the bottom-face center in
    rectified camera coordinates, both as in the raw files. ``score`` is None
    for ground-truth labels and set for detections.
    """

    category: str
    truncation: float
    occlusion: int
    alpha: float
    bbox: tuple[float, float, float, float]
    dimensions: tuple[float, float, float]
    location: tuple[float, float, float]
    rotation_y: float
    score: float | None = None

    def __post_init__(self):
        if not self.category:
            raise ParseError("empty category")
        left, top, right, bottom = self.bbox
        if right < left or bottom < top:
            raise ParseError(f"misordered bbox: {self.bbox}")
        object.__setattr__(self, "alpha", wrap_angle(self.alpha))
        object.__setattr__(self, "rotation_y", wrap_angle(self.rotation_y))

    @property
    def bbox_height(self) -> float:
        return self.bbox[3] - self.bbox[1]


def parse_label_line(line: str) -> ObjectLabel:
    """Parse one label line; 15 fields, or 16 when a score is appended."""
    fields = line.split()
    if len(fields) not in (15, 16):
        raise ParseError(
            f"label line has {len(fields)} fields, expected 15 or 16: {line!r}")
    try:
        vals = [float(v) for v in fields[1:]]
    except ValueError as exc:
        raise ParseError(f"bad label line {line!r}: {exc}") from None
    return ObjectLabel(
        category=fields[0],
        truncation=vals[0],
        occlusion=int(vals[1]),
        alpha=vals[2],
        bbox=(vals[3], vals[4], vals[5], vals[6]),
        dimensions=(vals[7], vals[8], vals[9]),
        location=(vals[10], vals[11], vals[12]),
        rotation_y=vals[13],
        score=vals[14] if len(fields) == 16 else None,
    )


def parse_labels(path) -> list[ObjectLabel]:
    """Parse a label file, skipping blank lines."""
    out = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                out.append(parse_label_line(line))
            except ParseError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from None
    return out


def format_label(label: ObjectLabel) -> str:
    """Render a label line (no newline); appends the score when present."""
    parts = [
        label.category,
        f"{label.truncation:.2f}",
        f"{label.occlusion:d}",
        f"{label.alpha:.2f}",
        f"{label.bbox[0]:.2f}",
        f"{label.bbox[1]:.2f}",
        f"{label.bbox[2]:.2f}",
        f"{label.bbox[3]:.2f}",
        f"{label.dimensions[0]:.6f}",
        f"{label.dimensions[1]:.6f}",
        f"{label.dimensions[2]:.6f}",
        f"{label.location[0]:.6f}",
        f"{label.location[1]:.6f}",
        f"{label.location[2]:.6f}",
        f"{label.rotation_y:.6f}",
    ]
    if label.score is not None:
        parts.append(f"{label.score:.6f}")
    return " ".join(parts)


def write_labels(labels, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for label in labels:
            fh.write(format_label(label) + "\n")


def camera_box_to_lidar(label: ObjectLabel, calib: Calibration) -> Box3D:
    """Convert a label to a LiDAR-frame box (volumetric center, yaw).

    Raises ValueError for labels without positive dimensions (e.g. DontCare).
    """
    h, w, l = label.dimensions
    bottom = calib.transform_rect_to_lidar(
        np.asarray(label.location, dtype=np.float64)[None, :])[0]
    return Box3D(
        x=float(bottom[0]),
        y=float(bottom[1]),
        z=float(bottom[2]) + 0.5 * h,
        length=l,
        width=w,
        height=h,
        yaw=wrap_angle(-label.rotation_y - 0.5 * math.pi),
    )


def lidar_box_to_camera(box: Box3D, calib: Calibration):
    """Inverse of :func:`camera_box_to_lidar`.

    Returns ``(dimensions (h, w, l), location, rotation_y)`` in the raw
    label convention.
    """
    bottom = calib.transform_lidar_to_rect(
        np.array([[box.x, box.y, box.z_bottom]], dtype=np.float64))[0]
    rotation_y = wrap_angle(-box.yaw - 0.5 * math.pi)
    dims = (box.height, box.width, box.length)
    return dims, (float(bottom[0]), float(bottom[1]), float(bottom[2])), rotation_y


def box_to_label(box: Box3D, category: str, calib: Calibration,
                 truncation: float = -1.0, occlusion: int = -1,
                 score: float | None = None) -> ObjectLabel:
    """Render a LiDAR box as a label line: projected bbox, alpha, pose.

    The 2D bbox is the image-plane hull of the eight projected corners,
    clipped to the image; it collapses to zeros when every corner is behind
    the camera.
    """
    dims, location, rotation_y = lidar_box_to_camera(box, calib)
    u, v, depth = calib.project_rect_to_image(
        calib.transform_lidar_to_rect(geometry.corners_3d(box)))
    front = depth > 0
    width, height = calib.image_size
    if not front.any():
        bbox = (0.0, 0.0, 0.0, 0.0)
    else:
        left = min(max(float(u[front].min()), 0.0), width - 1.0)
        right = min(max(float(u[front].max()), 0.0), width - 1.0)
        top = min(max(float(v[front].min()), 0.0), height - 1.0)
        bottom = min(max(float(v[front].max()), 0.0), height - 1.0)
        bbox = (left, top, right, bottom)
    alpha = wrap_angle(rotation_y - math.atan2(location[0], location[2]))
    return ObjectLabel(
        category=category,
        truncation=truncation,
        occlusion=occlusion,
        alpha=alpha,
        bbox=bbox,
        dimensions=dims,
        location=location,
        rotation_y=rotation_y,
        score=score,
    )


def detection_to_label(box: Box3D, category: str, score: float,
                       calib: Calibration) -> ObjectLabel:
    """Detection label: truncation/occlusion -1 (unknown) plus the score."""
    return box_to_label(box, category, calib, score=float(score))


def write_detections(detections, calib: Calibration, path) -> None:
    """Write (Box3D, category, score) triples as a 16-field result file."""
    labels = [detection_to_label(box, category, score, calib)
              for box, category, score in detections]
    write_labels(labels, path)


def read_detections(path) -> list[ObjectLabel]:
    """Parse a result file; every line must carry the trailing score."""
    labels = parse_labels(path)
    for label in labels:
        if label.score is None:
            raise ParseError(f"{path}: detection line without score field")
    return labels
