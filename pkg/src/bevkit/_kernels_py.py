"""Pure NumPy/Python fallback for the compiled kernels.

Every function mirrors its twin in ``_kernels.pyx`` operation for operation:
the backends must produce bit-identical output (the test suite asserts this),
so any change here must be made in lockstep with the .pyx file. That is also
why trigonometry uses :mod:`math` (libm, same as C) rather than NumPy ufuncs.
"""

from __future__ import annotations

import math

import numpy as np

# Tolerance for "on the clip edge" during polygon clipping, expressed as a
# perpendicular distance. Applied to raw cross products scaled by edge length.
_EPS = 1e-9


def segment_stats(flat_sorted, z_sorted, refl_sorted, n_cells):
    """Per-cell stats of points grouped by sorted flat cell index.

    ``flat_sorted`` (int64), ``z_sorted``/``refl_sorted`` (float32) must
    already be ordered by a canonical sort; reflectance sums accumulate the
    run sequentially in float64, matching the compiled loop.

    Returns ``(counts int64, zmax float32, rsum float64)`` of length
    ``n_cells``; cells with no points keep count 0, zmax 0, rsum 0.
    """
    counts = np.zeros(n_cells, dtype=np.int64)
    zmax = np.zeros(n_cells, dtype=np.float32)
    rsum = np.zeros(n_cells, dtype=np.float64)
    n = flat_sorted.shape[0]
    if n == 0:
        return counts, zmax, rsum
    boundaries = np.flatnonzero(flat_sorted[1:] != flat_sorted[:-1]) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [n]))
    ids = flat_sorted[starts]
    counts[ids] = ends - starts
    zmax[ids] = np.maximum.reduceat(z_sorted, starts)
    refl64 = refl_sorted.astype(np.float64)
    for cell, s, e in zip(ids, starts, ends):
        acc = 0.0
        for i in range(s, e):
            acc += refl64[i]
        rsum[cell] = acc
    return counts, zmax, rsum


def _box_corners(cx, cy, length, width, yaw):
    """Footprint corners, counter-clockwise, starting at the rear-right one."""
    cc = math.cos(yaw)
    ss = math.sin(yaw)
    hl = 0.5 * length
    hw = 0.5 * width
    out = []
    for dx, dy in ((-hl, -hw), (hl, -hw), (hl, hw), (-hl, hw)):
        out.append((cx + dx * cc - dy * ss, cy + dx * ss + dy * cc))
    return out


def _shoelace(poly):
    n = len(poly)
    acc = 0.0
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        acc += x1 * y2 - x2 * y1
    return 0.5 * acc


def _clip(subject, clipper):
    """Sutherland-Hodgman clip of ``subject`` by convex CCW ``clipper``.

    Points within ``_EPS`` (perpendicular distance) of a clip edge count as
    inside. Returns the clipped vertex list, possibly empty.
    """
    output = list(subject)
    m = len(clipper)
    for i in range(m):
        if len(output) < 3:
            return []
        px, py = clipper[i]
        qx, qy = clipper[(i + 1) % m]
        ex = qx - px
        ey = qy - py
        tol = _EPS * math.sqrt(ex * ex + ey * ey)
        inp = output
        output = []
        n = len(inp)
        dist = [ex * (y - py) - ey * (x - px) for x, y in inp]
        for j in range(n):
            k = j + 1 if j + 1 < n else 0
            ds = dist[j]
            dt = dist[k]
            s_in = ds >= -tol
            t_in = dt >= -tol
            if s_in:
                output.append(inp[j])
            if s_in != t_in:
                sx, sy = inp[j]
                tx, ty = inp[k]
                t = ds / (ds - dt)
                output.append((sx + t * (tx - sx), sy + t * (ty - sy)))
    if len(output) < 3:
        return []
    return output


def convex_intersection_area(poly_a, poly_b):
    """Intersection area of two convex CCW polygons given as (n, 2) arrays."""
    a = [(float(x), float(y)) for x, y in poly_a]
    b = [(float(x), float(y)) for x, y in poly_b]
    clipped = _clip(a, b)
    if not clipped:
        return 0.0
    area = _shoelace(clipped)
    return area if area > 0.0 else 0.0


def _lex_swap5(a, b):
    """True when ``a`` sorts strictly after ``b`` over the 5 parameters."""
    for i in range(5):
        if a[i] < b[i]:
            return False
        if a[i] > b[i]:
            return True
    return False


def _lex_swap7(a, b):
    for i in range(7):
        if a[i] < b[i]:
            return False
        if a[i] > b[i]:
            return True
    return False


def _iou_bev(ax, ay, al, aw, ayaw, bx, by, bl, bw, byaw):
    # Canonical argument order makes the result exactly symmetric.
    if _lex_swap5((ax, ay, al, aw, ayaw), (bx, by, bl, bw, byaw)):
        ax, ay, al, aw, ayaw, bx, by, bl, bw, byaw = (
            bx, by, bl, bw, byaw, ax, ay, al, aw, ayaw)
    ca = _box_corners(ax, ay, al, aw, ayaw)
    cb = _box_corners(bx, by, bl, bw, byaw)
    clipped = _clip(ca, cb)
    inter = _shoelace(clipped) if clipped else 0.0
    if inter <= 0.0:
        return 0.0
    # Shoelace areas on both sides keep IoU(x, x) == 1.0 exactly.
    area_a = _shoelace(ca)
    area_b = _shoelace(cb)
    union = area_a + area_b - inter
    if union <= 0.0:
        return 0.0
    iou = inter / union
    if iou < 0.0:
        return 0.0
    if iou > 1.0:
        return 1.0
    return iou


def _overlap_1d(ac, ah, bc, bh):
    lo = max(ac - 0.5 * ah, bc - 0.5 * bh)
    hi = min(ac + 0.5 * ah, bc + 0.5 * bh)
    return hi - lo


def _iou_3d(a, b):
    # a, b: (x, y, z, l, w, h, yaw) with z at the volumetric center.
    if _lex_swap7(a, b):
        a, b = b, a
    ca = _box_corners(a[0], a[1], a[3], a[4], a[6])
    cb = _box_corners(b[0], b[1], b[3], b[4], b[6])
    clipped = _clip(ca, cb)
    foot = _shoelace(clipped) if clipped else 0.0
    if foot <= 0.0:
        return 0.0
    dz = _overlap_1d(a[2], a[5], b[2], b[5])
    if dz <= 0.0:
        return 0.0
    inter = foot * dz
    vol_a = _shoelace(ca) * a[5]
    vol_b = _shoelace(cb) * b[5]
    union = vol_a + vol_b - inter
    if union <= 0.0:
        return 0.0
    iou = inter / union
    if iou < 0.0:
        return 0.0
    if iou > 1.0:
        return 1.0
    return iou


def rotated_iou_pair(a, b):
    """BEV IoU of two (x, y, l, w, yaw) boxes."""
    return _iou_bev(
        float(a[0]), float(a[1]), float(a[2]), float(a[3]), float(a[4]),
        float(b[0]), float(b[1]), float(b[2]), float(b[3]), float(b[4]))


def rotated_iou_one_many(a, boxes):
    """BEV IoU of one (x, y, l, w, yaw) box against an (m, 5) array."""
    boxes = np.ascontiguousarray(boxes, dtype=np.float64)
    m = boxes.shape[0]
    out = np.empty(m, dtype=np.float64)
    ax, ay, al, aw, ayaw = (float(a[0]), float(a[1]), float(a[2]),
                            float(a[3]), float(a[4]))
    for i in range(m):
        out[i] = _iou_bev(ax, ay, al, aw, ayaw,
                          boxes[i, 0], boxes[i, 1], boxes[i, 2],
                          boxes[i, 3], boxes[i, 4])
    return out


def rotated_iou_matrix(boxes_a, boxes_b):
    """Pairwise BEV IoU matrix between (n, 5) and (m, 5) box arrays."""
    boxes_a = np.ascontiguousarray(boxes_a, dtype=np.float64)
    boxes_b = np.ascontiguousarray(boxes_b, dtype=np.float64)
    n = boxes_a.shape[0]
    m = boxes_b.shape[0]
    out = np.empty((n, m), dtype=np.float64)
    for i in range(n):
        for j in range(m):
            out[i, j] = _iou_bev(
                boxes_a[i, 0], boxes_a[i, 1], boxes_a[i, 2],
                boxes_a[i, 3], boxes_a[i, 4],
                boxes_b[j, 0], boxes_b[j, 1], boxes_b[j, 2],
                boxes_b[j, 3], boxes_b[j, 4])
    return out


def iou3d_pair(a, b):
    """IoU of two (x, y, z, l, w, h, yaw) volumes (z at center height)."""
    return _iou_3d(tuple(float(v) for v in a), tuple(float(v) for v in b))


def iou3d_matrix(boxes_a, boxes_b):
    """Pairwise 3D IoU matrix between (n, 7) and (m, 7) box arrays."""
    boxes_a = np.ascontiguousarray(boxes_a, dtype=np.float64)
    boxes_b = np.ascontiguousarray(boxes_b, dtype=np.float64)
    n = boxes_a.shape[0]
    m = boxes_b.shape[0]
    out = np.empty((n, m), dtype=np.float64)
    for i in range(n):
        ai = tuple(boxes_a[i])
        for j in range(m):
            out[i, j] = _iou_3d(ai, tuple(boxes_b[j]))
    return out
