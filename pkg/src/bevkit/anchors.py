"""Proposal-stage anchor generation and training-target assignment.

Anchors are axis-aligned BEV-pixel rectangles built from area-preserving
(scale, aspect-ratio) combinations, tiled over the downsampled feature grid.
Assignment labels each anchor foreground/background/ignore against the
axis-aligned hulls of the ground-truth footprints, with the usual argmax
forcing rule so every overlapped ground truth owns at least one foreground
anchor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import AabbBox2D

ANCHOR_BACKGROUND = 0
ANCHOR_FOREGROUND = 1
ANCHOR_IGNORE = 2


@dataclass(frozen=True)
class AnchorConfig:
    """Anchor shapes (pixel units), tiling stride, and IoU thresholds."""

    scales: tuple[float, ...] = (16.0, 48.0, 80.0)
    aspect_ratios: tuple[tuple[float, float], ...] = ((1, 1), (1, 2), (2, 1))
    stride: float = 8.0
    fg_iou: float = 0.7
    bg_iou: float = 0.3

    def __post_init__(self):
        if not self.scales or any(s <= 0 for s in self.scales):
            raise ValueError("scales must be positive")
        if self.stride <= 0:
            raise ValueError("stride must be positive")
        for a, b in self.aspect_ratios:
            if a <= 0 or b <= 0:
                raise ValueError("aspect ratios must be positive")
        if not 0 < self.bg_iou < self.fg_iou <= 1:
            raise ValueError("need 0 < bg_iou < fg_iou <= 1")

    @property
    def n_base(self) -> int:
        return len(self.scales) * len(self.aspect_ratios)


def base_anchors(config: AnchorConfig) -> list[AabbBox2D]:
    """Origin-centered anchors, scales outer loop, ratios inner.

    A ratio a:b gives r = b/a and area-preserving sides sx = s/sqrt(r),
    sy = s*sqrt(r), so every anchor of scale s covers s^2 pixels.
    """
    out = []
    for s in config.scales:
        for a, b in config.aspect_ratios:
            r = b / a
            sx = s / math.sqrt(r)
            sy = s * math.sqrt(r)
            out.append(AabbBox2D(-0.5 * sx, -0.5 * sy, 0.5 * sx, 0.5 * sy))
    return out


def tile_anchors(config: AnchorConfig, feature_rows: int,
                 feature_cols: int) -> np.ndarray:
    """Replicate base anchors over the feature grid.

    Centers are (stride*(j+0.5), stride*(i+0.5)) in BEV pixels; output is an
    (rows*cols*n_base, 4) array of (x_min, y_min, x_max, y_max), ordered
    row-major with the base-anchor index fastest. Anchors may extend past
    the image bounds and are kept.
    """
    if feature_rows <= 0 or feature_cols <= 0:
        raise ValueError("feature map dimensions must be positive")
    base = np.array(
        [(a.x_min, a.y_min, a.x_max, a.y_max) for a in base_anchors(config)],
        dtype=np.float64)
    cx = config.stride * (np.arange(feature_cols, dtype=np.float64) + 0.5)
    cy = config.stride * (np.arange(feature_rows, dtype=np.float64) + 0.5)
    grid_y, grid_x = np.meshgrid(cy, cx, indexing="ij")
    shifts = np.stack(
        [grid_x, grid_y, grid_x, grid_y], axis=-1).reshape(-1, 1, 4)
    return (shifts + base[None, :, :]).reshape(-1, 4)


def aabb_iou_matrix(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """Pairwise IoU of (n, 4) and (m, 4) min/max-corner arrays."""
    a = np.asarray(boxes_a, dtype=np.float64)
    b = np.asarray(boxes_b, dtype=np.float64)
    ix = (np.minimum(a[:, None, 2], b[None, :, 2])
          - np.maximum(a[:, None, 0], b[None, :, 0]))
    iy = (np.minimum(a[:, None, 3], b[None, :, 3])
          - np.maximum(a[:, None, 1], b[None, :, 1]))
    inter = np.clip(ix, 0.0, None) * np.clip(iy, 0.0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        iou = np.where(union > 0.0, inter / union, 0.0)
    return np.clip(iou, 0.0, 1.0)


def assign_anchor_targets(anchors: np.ndarray, gt_hulls: np.ndarray,
                          config: AnchorConfig):
    """Label anchors against ground-truth hulls.

    Returns ``(labels, matched_gt)``: labels is int8 with the
    ANCHOR_BACKGROUND/FOREGROUND/IGNORE constants; matched_gt holds the
    ground-truth row index for foreground anchors, -1 elsewhere.

    An anchor is foreground when its best IoU reaches fg_iou, or when it is
    the argmax-IoU anchor of some ground truth (ties to the lowest anchor
    index; zero-overlap ground truths force nothing). Forced anchors match
    the forcing ground truth, later ground truths overriding earlier ones.
    Background requires best IoU < bg_iou; everything else is ignore.
    """
    anchors = np.asarray(anchors, dtype=np.float64)
    n = anchors.shape[0]
    labels = np.full(n, ANCHOR_BACKGROUND, dtype=np.int8)
    matched = np.full(n, -1, dtype=np.int64)
    gt_hulls = np.asarray(gt_hulls, dtype=np.float64).reshape(-1, 4)
    m = gt_hulls.shape[0]
    if n == 0 or m == 0:
        return labels, matched

    iou = aabb_iou_matrix(anchors, gt_hulls)
    best = iou.max(axis=1)
    best_gt = iou.argmax(axis=1)

    labels[(best >= config.bg_iou) & (best < config.fg_iou)] = ANCHOR_IGNORE
    fg = best >= config.fg_iou
    labels[fg] = ANCHOR_FOREGROUND
    matched[fg] = best_gt[fg]

    for j in range(m):
        col = iou[:, j]
        top = col.max()
        if top <= 0.0:
            continue
        i = int(col.argmax())
        labels[i] = ANCHOR_FOREGROUND
        matched[i] = j
    return labels, matched
