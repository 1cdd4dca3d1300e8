"""Array-in/array-out boundary over bevkit for external training loops.

Every function takes plain numeric arrays and delegates element-wise to the
bevkit library, so results are bit-identical to calling it directly. The
boundary holds no state besides the explicit category registry, and equal
inputs always produce equal outputs.

Array layouts:
    points       N x 4   x, y, z, reflectance
    proposals    N x 4   center_x, center_y, size_x, size_y
    boxes        N x 7   x, y, z, length, width, height, yaw
    targets      N x 8   dx, dy, dl, dw, dh, dz, yaw_bin, yaw_residual
    detections   N x 9   box columns, category id, score

Categories cross the boundary as integer ids; call register_categories
once to map each id to its reference height and elevation.
"""

import numpy as np

from bevkit import __version__ as _bevkit_version
from bevkit import bev, codec, postproc
from bevkit.geometry import AabbBox2D, Box3D

__version__ = _bevkit_version

__all__ = [
    "register_categories",
    "registered_categories",
    "bev_encode_array",
    "encode_targets_array",
    "decode_targets_array",
    "rotated_nms_array",
]

_registry: dict[int, codec.ReferenceBox] = {}


def register_categories(references):
    """Map integer category ids to (h_ref, z_ref) reference pairs.

    Ids already registered are overwritten; others are kept. The codec
    functions reject rows whose id has no registration.
    """
    staged = {}
    for cat_id, pair in references.items():
        if not isinstance(cat_id, int) or isinstance(cat_id, bool):
            raise ValueError(f"category id {cat_id!r} is not an int")
        h_ref, z_ref = (float(v) for v in pair)
        staged[cat_id] = codec.ReferenceBox(
            category=str(cat_id), h_ref=h_ref, z_ref=z_ref)
    _registry.update(staged)


def registered_categories():
    """Currently registered ids mapped to their (h_ref, z_ref) pairs."""
    return {cat_id: (ref.h_ref, ref.z_ref)
            for cat_id, ref in sorted(_registry.items())}


def _check_matrix(name, arr, n_cols):
    arr = np.asarray(arr)
    if arr.ndim != 2 or arr.shape[1] != n_cols:
        raise ValueError(
            f"{name} must have shape (N, {n_cols}), got {arr.shape}")
    if np.issubdtype(arr.dtype, np.floating) and np.isnan(arr).any():
        raise ValueError(f"{name} contains NaN")
    return arr


def _as_float_matrix(name, arr, n_cols):
    return np.ascontiguousarray(
        _check_matrix(name, arr, n_cols), dtype=np.float64)


def _references_for(category_ids, n_rows):
    ids = np.asarray(category_ids)
    if ids.shape != (n_rows,):
        raise ValueError(
            f"category_ids must have shape ({n_rows},), got {ids.shape}")
    if not np.issubdtype(ids.dtype, np.integer):
        raise ValueError(f"category_ids must be integers, got {ids.dtype}")
    refs = []
    for cat_id in ids.tolist():
        if cat_id not in _registry:
            raise KeyError(
                f"category id {cat_id} is not registered; known ids: "
                f"{sorted(_registry)}")
        refs.append(_registry[cat_id])
    return refs


def bev_encode_array(points, **grid_params):
    """Rasterize an N x 4 cloud into the (3, rows, cols) channel stack.

    Keyword arguments are forwarded to the grid configuration (cell_size,
    forward_range, lateral_range, max_height_above_ground, ground_z,
    density_saturation); omitted ones keep the library defaults. The input
    array is passed through unchanged, so any dtype the library accepts
    gives the identical result here.
    """
    points = _check_matrix("points", points, 4)
    config = bev.GridConfig(**grid_params)
    return bev.encode(points, config).data


def _weights(w_z, w_h, w_xy, w_lw):
    return codec.RegressionWeights(w_z=w_z, w_h=w_h, w_xy=w_xy, w_lw=w_lw)


def encode_targets_array(proposals, boxes, category_ids, *, w_z=1.0,
                         w_h=1.0, w_xy=1.0, w_lw=1.0, mode="ratio",
                         n_bins=12):
    """Encode N boxes against N proposals into an N x 8 target matrix."""
    proposals = _as_float_matrix("proposals", proposals, 4)
    boxes = _as_float_matrix("boxes", boxes, 7)
    if len(proposals) != len(boxes):
        raise ValueError(
            f"proposals and boxes disagree on N: "
            f"{len(proposals)} vs {len(boxes)}")
    refs = _references_for(category_ids, len(boxes))
    weights = _weights(w_z, w_h, w_xy, w_lw)
    out = np.empty((len(boxes), 8), dtype=np.float64)
    for i in range(len(boxes)):
        proposal = AabbBox2D.from_center_size(*proposals[i])
        targets = codec.encode_box_targets(
            proposal, Box3D(*boxes[i]), refs[i], weights,
            mode=mode, n_bins=n_bins)
        out[i] = (targets.dx, targets.dy, targets.dl, targets.dw,
                  targets.dh, targets.dz, float(targets.yaw_bin),
                  targets.yaw_residual)
    return out


def decode_targets_array(proposals, targets, category_ids, *, w_z=1.0,
                         w_h=1.0, w_xy=1.0, w_lw=1.0, mode="ratio",
                         n_bins=12):
    """Decode an N x 8 target matrix back into N x 7 boxes."""
    proposals = _as_float_matrix("proposals", proposals, 4)
    targets = _as_float_matrix("targets", targets, 8)
    if len(proposals) != len(targets):
        raise ValueError(
            f"proposals and targets disagree on N: "
            f"{len(proposals)} vs {len(targets)}")
    refs = _references_for(category_ids, len(targets))
    weights = _weights(w_z, w_h, w_xy, w_lw)
    out = np.empty((len(targets), 7), dtype=np.float64)
    for i in range(len(targets)):
        proposal = AabbBox2D.from_center_size(*proposals[i])
        row = targets[i]
        if row[6] != int(row[6]):
            raise ValueError(f"yaw_bin column holds non-integer {row[6]}")
        parsed = codec.BoxTargets(
            dx=row[0], dy=row[1], dl=row[2], dw=row[3], dh=row[4],
            dz=row[5], yaw_bin=int(row[6]), yaw_residual=row[7])
        box = codec.decode_box_targets(
            proposal, parsed, refs[i], weights, mode=mode, n_bins=n_bins)
        out[i] = (box.x, box.y, box.z, box.length, box.width, box.height,
                  box.yaw)
    return out


def rotated_nms_array(detections, iou_threshold=0.3):
    """Suppress an N x 9 detection matrix; returns kept row indices.

    Indices come back in the suppression's visit order (descending score,
    ties by row). Category ids only partition the detections here, so they
    do not need to be registered.
    """
    detections = _as_float_matrix("detections", detections, 9)
    items = []
    for row in detections:
        cat_id = int(row[7])
        if row[7] != cat_id:
            raise ValueError(f"category id column holds non-integer {row[7]}")
        items.append(postproc.Detection(
            Box3D(*row[:7]), str(cat_id), float(row[8])))
    kept = postproc.rotated_nms(
        postproc.DetectionSet("arrays", tuple(items)), iou_threshold)
    index_of = {id(det): i for i, det in enumerate(items)}
    return np.array([index_of[id(det)] for det in kept], dtype=np.int64)
