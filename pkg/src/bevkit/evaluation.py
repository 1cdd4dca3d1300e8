"""KITTI-style average-precision evaluation at desk scale.

Ground truths are stratified into Easy/Moderate/Hard by image-plane bbox
height, occlusion and truncation; when evaluating a difficulty, strictly
harder ground truths are ignored (matching them costs nothing). Detections
match greedily by descending score to the unmatched same-category ground
truth of highest IoU above the category threshold; BEV matching uses rotated
footprint IoU, 3D matching volumetric IoU. DontCare regions absorb
detections whose BEV hull overlaps them by at least half. AP is interpolated
precision averaged over 11 or 40 recall samples.

Determinism: global ranking breaks score ties by (frame_id, in-frame index),
so results are invariant to frame order and to permutations of equal-score
detections across frames.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .geometry import Box3D
from .kitti_io import Calibration, ObjectLabel, camera_box_to_lidar
from .postproc import Detection, DetectionSet

DIFFICULTIES = ("easy", "moderate", "hard")
IGNORED = "ignored"
_RANK = {"easy": 0, "moderate": 1, "hard": 2, IGNORED: 3}

MATCH_TP = "tp"
MATCH_FP = "fp"
MATCH_IGNORED = "ignored"

DONTCARE_CATEGORY = "DontCare"
# A detection counts as inside a DontCare region when at least this fraction
# of its BEV hull area is covered.
DONTCARE_OVERLAP = 0.5

DEFAULT_IOU_THRESHOLDS = {"Car": 0.7, "Pedestrian": 0.5, "Cyclist": 0.5}

AP_MODES = ("11-point", "40-point")
METRICS = ("BEV", "3D")


@dataclass(frozen=True)
class DifficultyCriteria:
    """Inclusion thresholds for one difficulty stratum."""

    min_bbox_height: float
    max_occlusion: int
    max_truncation: float


DEFAULT_DIFFICULTY_CRITERIA = {
    "easy": DifficultyCriteria(40.0, 0, 0.15),
    "moderate": DifficultyCriteria(25.0, 1, 0.30),
    "hard": DifficultyCriteria(25.0, 2, 0.50),
}


@dataclass(frozen=True, eq=False)
class EvalConfig:
    """Evaluation protocol knobs."""

    iou_thresholds: dict = field(
        default_factory=lambda: dict(DEFAULT_IOU_THRESHOLDS))
    ap_mode: str = "40-point"
    metric: str = "BEV"
    criteria: dict = field(
        default_factory=lambda: dict(DEFAULT_DIFFICULTY_CRITERIA))

    def __post_init__(self):
        for category, thr in self.iou_thresholds.items():
            if not 0.0 < thr <= 1.0:
                raise ValueError(
                    f"IoU threshold for {category} must be in (0, 1]: {thr}")
        if self.ap_mode not in AP_MODES:
            raise ValueError(f"ap_mode must be one of {AP_MODES}")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")
        for name in DIFFICULTIES:
            if name not in self.criteria:
                raise ValueError(f"missing difficulty criteria for {name!r}")


def assign_difficulty(label: ObjectLabel, criteria=None) -> str:
    """Smallest difficulty the label qualifies for, else ``ignored``."""
    if criteria is None:
        criteria = DEFAULT_DIFFICULTY_CRITERIA
    height = label.bbox_height
    for name in DIFFICULTIES:
        c = criteria[name]
        if (height >= c.min_bbox_height
                and label.occlusion <= c.max_occlusion
                and label.truncation <= c.max_truncation):
            return name
    return IGNORED


@dataclass(frozen=True)
class GtObject:
    """One ground-truth label with its LiDAR box (None when degenerate)."""

    label: ObjectLabel
    box: Box3D | None
    difficulty: str


@dataclass(frozen=True)
class GroundTruthFrame:
    frame_id: str
    objects: tuple[GtObject, ...]

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))


def ground_truth_frame(frame_id: str, labels, calib: Calibration,
                       criteria=None) -> GroundTruthFrame:
    """Convert parsed labels of one frame for evaluation.

    Labels without positive dimensions (DontCare placeholders) keep
    ``box=None`` and can only act as ignore regions if they do have one.
    """
    objects = []
    for label in labels:
        if all(d > 0 for d in label.dimensions):
            box = camera_box_to_lidar(label, calib)
        else:
            box = None
        objects.append(GtObject(
            label=label, box=box,
            difficulty=assign_difficulty(label, criteria)))
    return GroundTruthFrame(frame_id, tuple(objects))


def detections_from_labels(frame_id: str, det_labels,
                           calib: Calibration) -> DetectionSet:
    """Convert parsed 16-field result lines back into a DetectionSet."""
    dets = []
    for label in det_labels:
        if label.score is None:
            raise ValueError(f"frame {frame_id}: detection without score")
        dets.append(Detection(
            box=camera_box_to_lidar(label, calib),
            category=label.category,
            score=label.score))
    return DetectionSet(frame_id, tuple(dets))


def _hull_row(box: Box3D) -> np.ndarray:
    hull = geometry.aabb_hull(box.footprint)
    return np.array([hull.x_min, hull.y_min, hull.x_max, hull.y_max])


def _hull_cover_fraction(det_hull: np.ndarray, region: np.ndarray) -> float:
    ix = min(det_hull[2], region[2]) - max(det_hull[0], region[0])
    iy = min(det_hull[3], region[3]) - max(det_hull[1], region[1])
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    area = (det_hull[2] - det_hull[0]) * (det_hull[3] - det_hull[1])
    if area <= 0.0:
        return 0.0
    return ix * iy / area


def match_frame(detections, gt_objects, category: str, iou_threshold: float,
                metric: str = "BEV", difficulty: str = "hard"):
    """Match one frame's detections of ``category`` against ground truth.

    Ground truths of the category with difficulty harder than ``difficulty``
    are ignore targets; DontCare regions absorb otherwise-unmatched
    detections. Returns ``(results, gt_matched)`` where results is a list of
    (input index, status) for each detection of the category, and gt_matched
    flags which ground-truth objects were claimed as true-positive targets.
    """
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}")
    rank = _RANK[difficulty]
    detections = list(detections)

    valid_idx = []
    ignored_idx = []
    dontcare_rows = []
    for gi, gt in enumerate(gt_objects):
        if gt.label.category == DONTCARE_CATEGORY:
            if gt.box is not None:
                dontcare_rows.append(_hull_row(gt.box))
            continue
        if gt.label.category != category or gt.box is None:
            continue
        if _RANK[gt.difficulty] <= rank:
            valid_idx.append(gi)
        else:
            ignored_idx.append(gi)

    det_idx = [i for i, d in enumerate(detections) if d.category == category]
    order = sorted(det_idx, key=lambda i: (-detections[i].score, i))

    candidates = [gt_objects[g].box for g in valid_idx + ignored_idx]
    n_valid = len(valid_idx)
    if order and candidates:
        det_boxes = [detections[i].box for i in order]
        if metric == "BEV":
            iou = geometry.rotated_iou_matrix(
                geometry.rotated_boxes_to_array(
                    [b.footprint for b in det_boxes]),
                geometry.rotated_boxes_to_array(
                    [b.footprint for b in candidates]))
        else:
            iou = geometry.iou_3d_matrix(
                geometry.boxes3d_to_array(det_boxes),
                geometry.boxes3d_to_array(candidates))
    else:
        iou = np.zeros((len(order), len(candidates)))

    gt_matched = [False] * len(gt_objects)
    taken = [False] * n_valid
    results = []
    for row, i in enumerate(order):
        status = MATCH_FP
        best_j = -1
        best_iou = 0.0
        for j in range(n_valid):
            if taken[j]:
                continue
            v = iou[row, j]
            if v >= iou_threshold and v > best_iou:
                best_iou = v
                best_j = j
        if best_j >= 0:
            taken[best_j] = True
            gt_matched[valid_idx[best_j]] = True
            status = MATCH_TP
        else:
            if any(iou[row, n_valid + k] >= iou_threshold
                   for k in range(len(ignored_idx))):
                status = MATCH_IGNORED
            elif dontcare_rows:
                det_hull = _hull_row(detections[i].box)
                if any(_hull_cover_fraction(det_hull, r) >= DONTCARE_OVERLAP
                       for r in dontcare_rows):
                    status = MATCH_IGNORED
        results.append((i, status))
    return results, gt_matched


def precision_recall(tp_flags, n_gt: int):
    """Precision/recall arrays over the score-ranked TP/FP sequence."""
    if n_gt < 0:
        raise ValueError("n_gt must be non-negative")
    flags = np.asarray(tp_flags, dtype=bool)
    n = flags.shape[0]
    tp = np.cumsum(flags)
    ranks = np.arange(1, n + 1, dtype=np.float64)
    precision = tp / ranks if n else np.zeros(0)
    recall = tp / n_gt if n_gt > 0 else np.zeros(n, dtype=np.float64)
    return precision, recall


def _recall_samples(ap_mode: str):
    if ap_mode == "11-point":
        return [i / 10.0 for i in range(11)]
    if ap_mode == "40-point":
        return [(i + 1) / 40.0 for i in range(40)]
    raise ValueError(f"ap_mode must be one of {AP_MODES}")


def average_precision(precision, recall, ap_mode: str = "40-point") -> float:
    """Mean interpolated precision over the mode's recall samples.

    Interpolated precision at recall r is the maximum precision among curve
    points with recall >= r (0 when unreachable).
    """
    precision = np.asarray(precision, dtype=np.float64)
    recall = np.asarray(recall, dtype=np.float64)
    samples = _recall_samples(ap_mode)
    if precision.shape[0] == 0:
        return 0.0
    total = 0.0
    for r in samples:
        mask = recall >= r
        if mask.any():
            total += float(precision[mask].max())
    return total / len(samples)


@dataclass(frozen=True)
class CellResult:
    """AP and supporting counts for one (category, difficulty) cell."""

    ap: float
    n_gt: int
    n_tp: int
    n_fp: int


@dataclass(frozen=True, eq=False)
class EvalResult:
    metric: str
    ap_mode: str
    cells: dict

    def ap(self, category: str, difficulty: str) -> float:
        return self.cells[(category, difficulty)].ap


def _frames_by_id(frames, kind: str) -> dict:
    out = {}
    for f in frames:
        if f.frame_id in out:
            raise ValueError(f"duplicate {kind} frame id {f.frame_id!r}")
        out[f.frame_id] = f
    return out


def evaluate(det_frames, gt_frames, config: EvalConfig) -> EvalResult:
    """AP per (category, difficulty) for the configured metric and AP mode.

    ``det_frames`` is a sequence of DetectionSet, ``gt_frames`` of
    GroundTruthFrame; every detection frame id must appear in the ground
    truth. Cells without any valid ground truth get AP 0 with n_gt 0.
    """
    gts = _frames_by_id(gt_frames, "ground-truth")
    dets = _frames_by_id(det_frames, "detection")
    unknown = sorted(set(dets) - set(gts))
    if unknown:
        raise ValueError(f"detections reference unknown frame ids: {unknown}")

    frame_ids = sorted(gts)
    cells = {}
    for category, threshold in config.iou_thresholds.items():
        for difficulty in DIFFICULTIES:
            records = []
            n_gt = 0
            for fid in frame_ids:
                gt_frame = gts[fid]
                for gt in gt_frame.objects:
                    if (gt.label.category == category and gt.box is not None
                            and _RANK[gt.difficulty] <= _RANK[difficulty]):
                        n_gt += 1
                det_frame = dets.get(fid)
                if det_frame is None or len(det_frame) == 0:
                    continue
                results, _ = match_frame(
                    det_frame.detections, gt_frame.objects, category,
                    threshold, config.metric, difficulty)
                for det_index, status in results:
                    if status == MATCH_IGNORED:
                        continue
                    det = det_frame.detections[det_index]
                    records.append(
                        (-det.score, fid, det_index, status == MATCH_TP))
            records.sort()
            flags = [tp for _, _, _, tp in records]
            n_tp = sum(flags)
            n_fp = len(flags) - n_tp
            if n_gt == 0:
                ap = 0.0
            else:
                precision, recall = precision_recall(flags, n_gt)
                ap = average_precision(precision, recall, config.ap_mode)
            cells[(category, difficulty)] = CellResult(
                ap=ap, n_gt=n_gt, n_tp=int(n_tp), n_fp=int(n_fp))
    return EvalResult(metric=config.metric, ap_mode=config.ap_mode,
                      cells=cells)


def format_text_table(result: EvalResult) -> str:
    """Human-readable AP table for one (metric, AP mode) evaluation."""
    categories = sorted({cat for cat, _ in result.cells})
    lines = [f"AP {result.metric} ({result.ap_mode})"]
    header = f"{'category':<12}" + "".join(
        f"{d:>12}" for d in DIFFICULTIES) + f"{'n_gt e/m/h':>16}"
    lines.append(header)
    for cat in categories:
        row = f"{cat:<12}"
        counts = []
        for d in DIFFICULTIES:
            cell = result.cells[(cat, d)]
            row += f"{cell.ap:>12.4f}"
            counts.append(str(cell.n_gt))
        row += f"{'/'.join(counts):>16}"
        lines.append(row)
    return "\n".join(lines)


def format_csv_rows(results) -> str:
    """Machine-readable rows: metric,ap_mode,category,difficulty,ap,n_gt."""
    lines = ["metric,ap_mode,category,difficulty,ap,n_gt"]
    for result in results:
        for (cat, diff) in sorted(result.cells):
            cell = result.cells[(cat, diff)]
            lines.append(
                f"{result.metric},{result.ap_mode},{cat},{diff},"
                f"{cell.ap:.12g},{cell.n_gt}")
    return "\n".join(lines) + "\n"
