"""Bird's-eye-view rasterization of LiDAR clouds.

A cloud is binned onto a square grid (x forward mapped to columns, y left
mapped to rows top-down, so row 0 is the leftmost lateral extent) and three
per-cell channels are computed: normalized max height above a fixed ground
plane, mean reflectance, and log-normalized point density. All channels live
in [0, 1]; empty cells are zero everywhere.

Encoding is bit-exactly permutation invariant: points are canonically
ordered (by cell, then reflectance bit pattern) before the sequential
float64 reflectance accumulation, so shuffled input clouds produce identical
images.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from PIL import Image

from ._native import get_backend
from .geometry import Box3D, RotatedBox2D, wrap_angle
from .kitti_io import Calibration, camera_fov_mask


@dataclass(frozen=True)
class GridConfig:
    """BEV grid geometry and channel normalization constants."""

    cell_size: float = 0.05
    forward_range: float = 35.0
    lateral_range: float = 35.0
    max_height_above_ground: float = 3.0
    ground_z: float = -1.73
    density_saturation: int = 64

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        if self.forward_range <= 0 or self.lateral_range <= 0:
            raise ValueError("ranges must be positive")
        if self.max_height_above_ground <= 0:
            raise ValueError("max_height_above_ground must be positive")
        if self.density_saturation < 2:
            raise ValueError("density_saturation must be at least 2")

    @property
    def cols(self) -> int:
        return int(round(self.forward_range / self.cell_size))

    @property
    def rows(self) -> int:
        return int(round(2.0 * self.lateral_range / self.cell_size))

    @property
    def n_cells(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True, eq=False)
class BevImage:
    """Three-channel BEV raster: (3, rows, cols), channels in [0, 1]."""

    data: np.ndarray
    config: GridConfig

    def __post_init__(self):
        expected = (3, self.config.rows, self.config.cols)
        if self.data.shape != expected:
            raise ValueError(
                f"image shape {self.data.shape} does not match grid {expected}")

    @property
    def height(self) -> np.ndarray:
        return self.data[0]

    @property
    def intensity(self) -> np.ndarray:
        return self.data[1]

    @property
    def density(self) -> np.ndarray:
        return self.data[2]


def filter_cloud(cloud, calib: Calibration | None,
                 config: GridConfig) -> np.ndarray:
    """Keep points inside the grid, above ground, and in the camera FOV.

    Retains points with 0 <= x < forward_range, |y| < lateral_range and
    z >= ground_z (taller points are kept; the height channel clamps them).
    ``calib=None`` skips the field-of-view cut.
    """
    pts = np.asarray(cloud)
    if pts.shape[0] == 0:
        return pts.reshape(0, pts.shape[1] if pts.ndim == 2 else 4)
    x = pts[:, 0]
    y = pts[:, 1]
    z = pts[:, 2]
    mask = ((x >= 0.0) & (x < config.forward_range)
            & (np.abs(y) < config.lateral_range)
            & (z >= config.ground_z))
    if calib is not None:
        mask &= camera_fov_mask(pts, calib)
    return pts[mask]


def cell_index(x: float, y: float, config: GridConfig):
    """Map a point to (row, col), or None when outside the grid.

    Cells are half-open: col = floor(x / cell), row = floor((lateral - y) /
    cell), so x = forward_range is already out of range.
    """
    col = math.floor(float(x) / config.cell_size)
    row = math.floor((config.lateral_range - float(y)) / config.cell_size)
    if 0 <= row < config.rows and 0 <= col < config.cols:
        return row, col
    return None


@lru_cache(maxsize=None)
def _density_lut(saturation: int) -> np.ndarray:
    # lut[n] = min(1, ln(n+1)/ln(sat)); index is clamped to sat, which is
    # already in the flat region (density hits exactly 1.0 at n = sat - 1).
    log_sat = math.log(saturation)
    lut = np.array(
        [min(1.0, math.log(n + 1) / log_sat) for n in range(saturation + 1)],
        dtype=np.float64)
    lut.setflags(write=False)
    return lut


def _cell_stats(cloud, config: GridConfig):
    """Canonically sorted per-cell (counts, zmax float32, rsum float64)."""
    pts = np.asarray(cloud)
    x = pts[:, 0].astype(np.float64)
    y = pts[:, 1].astype(np.float64)
    col = np.floor(x / config.cell_size).astype(np.int64)
    row = np.floor((config.lateral_range - y) / config.cell_size).astype(np.int64)
    keep = (col >= 0) & (col < config.cols) & (row >= 0) & (row < config.rows)
    flat = (row[keep] * config.cols + col[keep]).astype(np.uint64)
    z = np.ascontiguousarray(pts[keep, 2], dtype=np.float32)
    # +0.0 maps -0.0 onto +0.0 so equal reflectances share one bit pattern;
    # the sort key (cell, reflectance bits) then fixes the accumulation
    # order up to reordering of identical values.
    refl = np.ascontiguousarray(pts[keep, 3], dtype=np.float32) + np.float32(0.0)
    key = (flat << np.uint64(32)) | refl.view(np.uint32).astype(np.uint64)
    order = np.argsort(key)
    flat_sorted = np.ascontiguousarray(flat[order].astype(np.int64))
    return get_backend().segment_stats(
        flat_sorted, np.ascontiguousarray(z[order]),
        np.ascontiguousarray(refl[order]), config.n_cells)


def point_counts(cloud, config: GridConfig) -> np.ndarray:
    """Raw per-cell point counts, shape (rows, cols)."""
    counts, _, _ = _cell_stats(cloud, config)
    return counts.reshape(config.rows, config.cols)


def encode(cloud, config: GridConfig) -> BevImage:
    """Rasterize a (range/FOV filtered) cloud into the three-channel image.

    Points outside the grid are ignored; points above the height cap
    saturate the height channel at 1.
    """
    counts, zmax, rsum = _cell_stats(cloud, config)
    data = np.zeros((3, config.n_cells), dtype=np.float64)
    occupied = counts > 0
    if occupied.any():
        cap = config.max_height_above_ground
        rise = zmax[occupied].astype(np.float64) - config.ground_z
        data[0, occupied] = np.clip(rise, 0.0, cap) / cap
        data[1, occupied] = rsum[occupied] / counts[occupied]
        lut = _density_lut(config.density_saturation)
        idx = np.minimum(counts[occupied], config.density_saturation)
        data[2, occupied] = lut[idx]
    return BevImage(data.reshape(3, config.rows, config.cols), config)


def box_to_bev_pixels(box: Box3D, config: GridConfig) -> RotatedBox2D:
    """Map a LiDAR-frame box footprint to pixel units.

    Center uses the continuous cell_index arithmetic (no flooring); sizes
    divide by the cell size; yaw is negated because the row axis flips y.
    Raises ValueError when the center is outside the grid.
    """
    px = box.x / config.cell_size
    py = (config.lateral_range - box.y) / config.cell_size
    if not (0.0 <= px < config.cols and 0.0 <= py < config.rows):
        raise ValueError(
            f"box center ({box.x}, {box.y}) is outside the grid")
    return RotatedBox2D(
        x=px,
        y=py,
        length=box.length / config.cell_size,
        width=box.width / config.cell_size,
        yaw=wrap_angle(-box.yaw),
    )


def bev_pixels_to_box(pixel_box: RotatedBox2D,
                      config: GridConfig) -> RotatedBox2D:
    """Inverse of :func:`box_to_bev_pixels` for the footprint (meters)."""
    return RotatedBox2D(
        x=pixel_box.x * config.cell_size,
        y=config.lateral_range - pixel_box.y * config.cell_size,
        length=pixel_box.length * config.cell_size,
        width=pixel_box.width * config.cell_size,
        yaw=wrap_angle(-pixel_box.yaw),
    )


def horizontal_flip(image: BevImage, boxes):
    """Mirror the scene about y=0: rows reverse, boxes get y/yaw negated."""
    flipped = BevImage(np.ascontiguousarray(image.data[:, ::-1, :]),
                       image.config)
    out_boxes = [
        Box3D(b.x, -b.y, b.z, b.length, b.width, b.height,
              wrap_angle(-b.yaw))
        for b in boxes
    ]
    return flipped, out_boxes


def write_bev_png(image: BevImage, path) -> None:
    """Export as an 8-bit RGB PNG (R=height, G=intensity, B=density).

    Quantization is round-half-up on channel*255; in-memory channels stay
    continuous, so this is the only lossy step.
    """
    scaled = np.floor(image.data * 255.0 + 0.5)
    bytes_ = np.clip(scaled, 0.0, 255.0).astype(np.uint8)
    rgb = np.ascontiguousarray(np.moveaxis(bytes_, 0, -1))
    Image.fromarray(rgb, mode="RGB").save(path, format="PNG")
