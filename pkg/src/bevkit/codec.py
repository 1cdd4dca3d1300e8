"""Regression target codecs linking proposals/references to oriented boxes.

Four codecs, each an exact mutual inverse pair:

* axis-aligned deltas (proposal -> axis-aligned target),
* rotated dims (proposal -> oriented footprint center/length/width; yaw is
  handled separately),
* height/z against a per-category reference box, with two selectable height
  modes: ``ratio`` (default, dh = w_h*ln(h/h_ref)) and ``literal``
  (dh = w_h*ln(h)/h_ref); both share dz = w_z*(z - z_ref)/h_ref,
* yaw bin-plus-residual over n equally spaced centers (c_0 = 0 = forward),
  residual normalized by the bin half-width so it spans [-1, 1].

``encode_box_targets``/``decode_box_targets`` compose them over a full Box3D.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import TAU, AabbBox2D, Box3D, RotatedBox2D, wrap_angle

HEIGHT_MODES = ("ratio", "literal")

# Mean training-sample heights (meters) per category, and the matching
# ground-plane-resting centroid elevations for ground_z = -1.73.
DEFAULT_REFERENCE_HEIGHTS = {"Car": 1.53, "Pedestrian": 1.76, "Cyclist": 1.74}
DEFAULT_GROUND_Z = -1.73


@dataclass(frozen=True)
class ReferenceBox:
    """Per-category reference: height and resting centroid elevation."""

    category: str
    h_ref: float
    z_ref: float

    def __post_init__(self):
        if self.h_ref <= 0:
            raise ValueError("h_ref must be positive")

    @classmethod
    def for_category(cls, category: str,
                     ground_z: float = DEFAULT_GROUND_Z) -> "ReferenceBox":
        """Default reference: z_ref puts the box bottom on the ground plane."""
        h_ref = DEFAULT_REFERENCE_HEIGHTS[category]
        return cls(category=category, h_ref=h_ref, z_ref=ground_z + 0.5 * h_ref)


def default_references(ground_z: float = DEFAULT_GROUND_Z) -> dict:
    return {name: ReferenceBox.for_category(name, ground_z)
            for name in DEFAULT_REFERENCE_HEIGHTS}


@dataclass(frozen=True)
class RegressionWeights:
    """Target normalization factors; defaults leave targets unscaled."""

    w_z: float = 1.0
    w_h: float = 1.0
    w_xy: float = 1.0
    w_lw: float = 1.0

    def __post_init__(self):
        for name in ("w_z", "w_h", "w_xy", "w_lw"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def _aabb_center_size(box: AabbBox2D):
    return box.x, box.y, box.sx, box.sy


def encode_aabb_delta(proposal: AabbBox2D, target: AabbBox2D,
                      weights: RegressionWeights = RegressionWeights()):
    """Standard two-stage box deltas (dx, dy, dsx, dsy)."""
    px, py, psx, psy = _aabb_center_size(proposal)
    tx, ty, tsx, tsy = _aabb_center_size(target)
    return (
        weights.w_xy * (tx - px) / psx,
        weights.w_xy * (ty - py) / psy,
        weights.w_lw * math.log(tsx / psx),
        weights.w_lw * math.log(tsy / psy),
    )


def decode_aabb_delta(proposal: AabbBox2D, deltas,
                      weights: RegressionWeights = RegressionWeights()
                      ) -> AabbBox2D:
    """Exact inverse of :func:`encode_aabb_delta`."""
    px, py, psx, psy = _aabb_center_size(proposal)
    dx, dy, dsx, dsy = deltas
    cx = px + dx / weights.w_xy * psx
    cy = py + dy / weights.w_xy * psy
    sx = psx * math.exp(dsx / weights.w_lw)
    sy = psy * math.exp(dsy / weights.w_lw)
    return AabbBox2D.from_center_size(cx, cy, sx, sy)


def encode_rotated_dims(proposal: AabbBox2D, target: RotatedBox2D,
                        weights: RegressionWeights = RegressionWeights()):
    """Deltas (dx, dy, dl, dw) from an axis-aligned proposal to an oriented
    footprint. Length pairs with the proposal x-extent, width with the
    y-extent; yaw is not encoded here.
    """
    px, py, psx, psy = _aabb_center_size(proposal)
    if target.length <= 0 or target.width <= 0:
        raise ValueError("target must have positive dimensions")
    return (
        weights.w_xy * (target.x - px) / psx,
        weights.w_xy * (target.y - py) / psy,
        weights.w_lw * math.log(target.length / psx),
        weights.w_lw * math.log(target.width / psy),
    )


def decode_rotated_dims(proposal: AabbBox2D, deltas,
                        weights: RegressionWeights = RegressionWeights()):
    """Exact inverse of :func:`encode_rotated_dims`; returns (x, y, l, w)."""
    px, py, psx, psy = _aabb_center_size(proposal)
    dx, dy, dl, dw = deltas
    return (
        px + dx / weights.w_xy * psx,
        py + dy / weights.w_xy * psy,
        psx * math.exp(dl / weights.w_lw),
        psy * math.exp(dw / weights.w_lw),
    )


def _check_mode(mode: str) -> None:
    if mode not in HEIGHT_MODES:
        raise ValueError(f"unknown height mode {mode!r}; one of {HEIGHT_MODES}")


def encode_height_z(h: float, z: float, ref: ReferenceBox,
                    weights: RegressionWeights = RegressionWeights(),
                    mode: str = "ratio"):
    """Encode box height and centroid elevation as (dh, dz).

    ``ratio`` uses dh = w_h*ln(h/h_ref); ``literal`` uses the alternative
    dh = w_h*ln(h)/h_ref. Both use dz = w_z*(z - z_ref)/h_ref. The modes
    coincide when h_ref = 1.
    """
    _check_mode(mode)
    if h <= 0:
        raise ValueError("height must be positive")
    if mode == "ratio":
        dh = weights.w_h * math.log(h / ref.h_ref)
    else:
        dh = weights.w_h * math.log(h) / ref.h_ref
    dz = weights.w_z * (z - ref.z_ref) / ref.h_ref
    return dh, dz


def decode_height_z(deltas, ref: ReferenceBox,
                    weights: RegressionWeights = RegressionWeights(),
                    mode: str = "ratio"):
    """Exact inverse of :func:`encode_height_z`; returns (h, z)."""
    _check_mode(mode)
    dh, dz = deltas
    if mode == "ratio":
        h = ref.h_ref * math.exp(dh / weights.w_h)
    else:
        h = math.exp(dh * ref.h_ref / weights.w_h)
    z = ref.z_ref + dz * ref.h_ref / weights.w_z
    return h, z


@dataclass(frozen=True)
class YawEncoding:
    """Discrete heading bin plus normalized in-bin residual."""

    bin: int
    residual: float

    def __post_init__(self):
        if not -1.0 <= self.residual <= 1.0:
            raise ValueError(f"residual {self.residual} outside [-1, 1]")


def yaw_bin_centers(n_bins: int) -> np.ndarray:
    """Centers wrap(k*2*pi/n) for k in [0, n); c_0 = 0 points forward."""
    _check_bins(n_bins)
    return np.array([wrap_angle(TAU * k / n_bins) for k in range(n_bins)],
                    dtype=np.float64)


def _check_bins(n_bins: int) -> None:
    # Divisibility by 4 keeps the cardinal orientations exactly on centers.
    if n_bins < 4 or n_bins % 4 != 0:
        raise ValueError(f"n_bins must be >= 4 and divisible by 4, got {n_bins}")


def encode_yaw(theta: float, n_bins: int = 12) -> YawEncoding:
    """Assign the nearest bin center and the half-width-normalized residual.

    Ties at exact bin boundaries go to the lower bin index. The residual
    lies in [-1, 1] by construction (clamped against rounding spill).
    """
    centers = yaw_bin_centers(n_bins)
    best = 0
    best_dist = math.inf
    for k in range(n_bins):
        d = abs(wrap_angle(theta - centers[k]))
        if d < best_dist:
            best = k
            best_dist = d
    residual = wrap_angle(theta - centers[best]) / (math.pi / n_bins)
    residual = min(1.0, max(-1.0, residual))
    return YawEncoding(bin=best, residual=residual)


def decode_yaw(enc: YawEncoding, n_bins: int = 12) -> float:
    """Reconstruct the heading: wrap(c_bin + residual * pi / n_bins)."""
    centers = yaw_bin_centers(n_bins)
    if not 0 <= enc.bin < n_bins:
        raise ValueError(f"bin {enc.bin} outside [0, {n_bins})")
    return wrap_angle(float(centers[enc.bin]) + enc.residual * (math.pi / n_bins))


def assemble_box3d(bev: RotatedBox2D, h: float, z: float) -> Box3D:
    """Compose a footprint (meters) with height/elevation into a Box3D."""
    return Box3D(x=bev.x, y=bev.y, z=z, length=bev.length, width=bev.width,
                 height=h, yaw=bev.yaw)


@dataclass(frozen=True)
class BoxTargets:
    """All regression targets for one box against one proposal."""

    dx: float
    dy: float
    dl: float
    dw: float
    dh: float
    dz: float
    yaw_bin: int
    yaw_residual: float


def encode_box_targets(proposal: AabbBox2D, box: Box3D, ref: ReferenceBox,
                       weights: RegressionWeights = RegressionWeights(),
                       mode: str = "ratio", n_bins: int = 12) -> BoxTargets:
    """Encode a full Box3D against a BEV proposal and category reference."""
    dx, dy, dl, dw = encode_rotated_dims(proposal, box.footprint, weights)
    dh, dz = encode_height_z(box.height, box.z, ref, weights, mode)
    yaw = encode_yaw(box.yaw, n_bins)
    return BoxTargets(dx=dx, dy=dy, dl=dl, dw=dw, dh=dh, dz=dz,
                      yaw_bin=yaw.bin, yaw_residual=yaw.residual)


def decode_box_targets(proposal: AabbBox2D, targets: BoxTargets,
                       ref: ReferenceBox,
                       weights: RegressionWeights = RegressionWeights(),
                       mode: str = "ratio", n_bins: int = 12) -> Box3D:
    """Exact inverse of :func:`encode_box_targets`."""
    x, y, length, width = decode_rotated_dims(
        proposal, (targets.dx, targets.dy, targets.dl, targets.dw), weights)
    h, z = decode_height_z((targets.dh, targets.dz), ref, weights, mode)
    yaw = decode_yaw(YawEncoding(targets.yaw_bin, targets.yaw_residual), n_bins)
    return Box3D(x=x, y=y, z=z, length=length, width=width, height=h, yaw=yaw)


def fit_weights(targets_matrix) -> RegressionWeights:
    """Reciprocal-standard-deviation weights from raw (unweighted) targets.

    ``targets_matrix`` is (n, 6) columns (dx, dy, dl, dw, dh, dz) encoded
    with unit weights; paired columns (xy, lw) share one pooled deviation.
    """
    m = np.asarray(targets_matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[1] != 6 or m.shape[0] < 2:
        raise ValueError("need an (n >= 2, 6) target matrix")

    def inv_std(cols):
        s = float(np.std(cols))
        if s <= 0:
            return 1.0
        return 1.0 / s

    return RegressionWeights(
        w_xy=inv_std(m[:, 0:2]),
        w_lw=inv_std(m[:, 2:4]),
        w_h=inv_std(m[:, 4]),
        w_z=inv_std(m[:, 5]),
    )
