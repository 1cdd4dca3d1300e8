"""Detection post-processing: rotated per-category NMS and the oracle
detector that round-trips ground truth through the target codecs in place
of a trained network.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from . import codec, geometry
from .codec import RegressionWeights, YawEncoding
from .geometry import Box3D, aabb_hull


@dataclass(frozen=True)
class Detection:
    """One scored oriented box."""

    box: Box3D
    category: str
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        if not self.category:
            raise ValueError("empty category")


@dataclass(frozen=True)
class DetectionSet:
    """All detections of one frame."""

    frame_id: str
    detections: tuple[Detection, ...]

    def __post_init__(self):
        object.__setattr__(self, "detections", tuple(self.detections))

    def __len__(self) -> int:
        return len(self.detections)

    def __iter__(self):
        return iter(self.detections)


def rotated_nms(dets: DetectionSet, iou_threshold: float = 0.3) -> DetectionSet:
    """Greedy per-category suppression on BEV footprints.

    Candidates are visited by descending score (ties: lower input index
    first); one is kept iff its rotated IoU with every already-kept
    detection of the same category is <= threshold (strictly above
    suppresses, so exactly-tangent boxes survive). Output keeps the visit
    order, i.e. scores are non-increasing.
    """
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold {iou_threshold} outside [0, 1]")
    items = dets.detections
    order = sorted(range(len(items)), key=lambda i: (-items[i].score, i))
    kept: list[int] = []
    kept_rows: dict[str, list[np.ndarray]] = {}
    for i in order:
        det = items[i]
        row = geometry.rotated_box_to_array(det.box.footprint)
        rows = kept_rows.setdefault(det.category, [])
        if rows:
            ious = geometry.rotated_iou_one_many(
                det.box.footprint, np.stack(rows))
            if float(ious.max()) > iou_threshold:
                continue
        rows.append(row)
        kept.append(i)
    return DetectionSet(dets.frame_id, tuple(items[i] for i in kept))


@dataclass(frozen=True)
class NoiseSpec:
    """Std deviations of the Gaussian noise injected per target dimension.

    ``proposal_jitter`` perturbs the pseudo-proposal itself (fractional
    center shift and log-size scale); the remaining sigmas act on the
    encoded targets: center offsets, log-size deltas, height delta, z delta
    and yaw residual. All zero means an exact codec round-trip.
    """

    sigma_xy: float = 0.0
    sigma_lw: float = 0.0
    sigma_h: float = 0.0
    sigma_z: float = 0.0
    sigma_yaw: float = 0.0
    proposal_jitter: float = 0.0

    def __post_init__(self):
        for name in ("sigma_xy", "sigma_lw", "sigma_h", "sigma_z",
                     "sigma_yaw", "proposal_jitter"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @classmethod
    def zero(cls) -> "NoiseSpec":
        return cls()

    def scaled(self, factor: float) -> "NoiseSpec":
        return NoiseSpec(self.sigma_xy * factor, self.sigma_lw * factor,
                         self.sigma_h * factor, self.sigma_z * factor,
                         self.sigma_yaw * factor,
                         self.proposal_jitter * factor)


def _frame_key(frame_id: str) -> int:
    if frame_id.isdigit():
        return int(frame_id)
    return zlib.crc32(frame_id.encode("utf-8"))


def oracle_detect(gt, noise: NoiseSpec, seed: int, frame_id: str = "000000",
                  references=None,
                  weights: RegressionWeights = RegressionWeights(),
                  height_mode: str = "ratio",
                  n_bins: int = 12) -> DetectionSet:
    """Deterministic stand-in for the trained network.

    For each (Box3D, category) ground truth: take the box's axis-aligned
    BEV hull as a pseudo-proposal (jittered when requested), encode all
    regression targets, add zero-mean Gaussian noise in target space,
    decode, and assemble the detection. The score is
    max(0, 1 - ||noise vector||), so zero noise scores exactly 1.0 and
    reproduces the ground truth to codec round-trip precision.

    The random stream depends only on (seed, frame_id) and the ground-truth
    order; each box always consumes the same number of draws, so results
    with some sigmas zero match the zero-sigma limit of the same stream.
    """
    if references is None:
        references = codec.default_references()
    rng = np.random.default_rng([seed, _frame_key(frame_id)])
    sigmas = np.array([noise.sigma_xy, noise.sigma_xy, noise.sigma_lw,
                       noise.sigma_lw, noise.sigma_h, noise.sigma_z,
                       noise.sigma_yaw], dtype=np.float64)
    out = []
    for box, category in gt:
        if category not in references:
            raise ValueError(f"no reference box for category {category!r}")
        ref = references[category]
        jitter = rng.normal(size=4)
        draws = rng.normal(size=7)

        hull = aabb_hull(box.footprint)
        if noise.proposal_jitter > 0.0:
            cx = 0.5 * (hull.x_min + hull.x_max)
            cy = 0.5 * (hull.y_min + hull.y_max)
            sx = (hull.x_max - hull.x_min) * float(
                np.exp(jitter[2] * noise.proposal_jitter))
            sy = (hull.y_max - hull.y_min) * float(
                np.exp(jitter[3] * noise.proposal_jitter))
            cx += float(jitter[0]) * noise.proposal_jitter * sx
            cy += float(jitter[1]) * noise.proposal_jitter * sy
            hull = geometry.AabbBox2D(cx - 0.5 * sx, cy - 0.5 * sy,
                                      cx + 0.5 * sx, cy + 0.5 * sy)

        dx, dy, dl, dw = codec.encode_rotated_dims(
            hull, box.footprint, weights)
        dh, dz = codec.encode_height_z(
            box.height, box.z, ref, weights, height_mode)
        yaw_enc = codec.encode_yaw(box.yaw, n_bins)

        eps = draws * sigmas
        noisy = np.array([dx, dy, dl, dw, dh, dz, yaw_enc.residual]) + eps
        residual = min(1.0, max(-1.0, float(noisy[6])))

        x, y, length, width = codec.decode_rotated_dims(
            hull, (float(noisy[0]), float(noisy[1]),
                   float(noisy[2]), float(noisy[3])), weights)
        h, z = codec.decode_height_z(
            (float(noisy[4]), float(noisy[5])), ref, weights, height_mode)
        yaw = codec.decode_yaw(YawEncoding(yaw_enc.bin, residual), n_bins)

        score = max(0.0, 1.0 - float(np.sqrt(np.sum(eps * eps))))
        out.append(Detection(
            box=Box3D(x, y, z, length, width, h, yaw),
            category=category,
            score=score,
        ))
    return DetectionSet(frame_id, tuple(out))
