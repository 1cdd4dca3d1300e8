# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: per-cell cloud statistics and rotated-box IoU.

Every function mirrors its twin in ``_kernels_py.py`` operation for
operation; the two backends must produce bit-identical results (asserted by
the test suite). That is why min/max mirror Python's argument-order
semantics, reflectance accumulates sequentially in float64, and the build
forbids FMA contraction.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, isnan, sin, sqrt
from libc.stdlib cimport free, malloc

cnp.import_array()

cdef double _EPS = 1e-9


def segment_stats(cnp.int64_t[::1] flat_sorted,
                  cnp.float32_t[::1] z_sorted,
                  cnp.float32_t[::1] refl_sorted,
                  Py_ssize_t n_cells):
    """Per-cell stats of points grouped by sorted flat cell index."""
    counts = np.zeros(n_cells, dtype=np.int64)
    zmax = np.zeros(n_cells, dtype=np.float32)
    rsum = np.zeros(n_cells, dtype=np.float64)
    cdef cnp.int64_t[::1] counts_v = counts
    cdef cnp.float32_t[::1] zmax_v = zmax
    cdef cnp.float64_t[::1] rsum_v = rsum
    cdef Py_ssize_t n = flat_sorted.shape[0]
    cdef Py_ssize_t i = 0, j
    cdef cnp.int64_t cell
    cdef double acc
    cdef float zbest, zv
    while i < n:
        cell = flat_sorted[i]
        zbest = z_sorted[i]
        acc = 0.0
        j = i
        while j < n and flat_sorted[j] == cell:
            zv = z_sorted[j]
            # NaN, once seen, sticks (mirrors np.maximum.reduceat).
            if isnan(zv) or zv > zbest:
                zbest = zv
            acc += <double> refl_sorted[j]
            j += 1
        counts_v[cell] = j - i
        zmax_v[cell] = zbest
        rsum_v[cell] = acc
        i = j
    return counts, zmax, rsum


# Python max(x, y)/min(x, y) keep the FIRST argument on ties; mirror that.
cdef inline double _pymax(double x, double y) nogil:
    return y if y > x else x


cdef inline double _pymin(double x, double y) nogil:
    return y if y < x else x


cdef inline void _box_corners(double cx, double cy, double length,
                              double width, double yaw,
                              double* xs, double* ys) nogil:
    cdef double cc = cos(yaw)
    cdef double ss = sin(yaw)
    cdef double hl = 0.5 * length
    cdef double hw = 0.5 * width
    xs[0] = cx + (-hl) * cc - (-hw) * ss
    ys[0] = cy + (-hl) * ss + (-hw) * cc
    xs[1] = cx + hl * cc - (-hw) * ss
    ys[1] = cy + hl * ss + (-hw) * cc
    xs[2] = cx + hl * cc - hw * ss
    ys[2] = cy + hl * ss + hw * cc
    xs[3] = cx + (-hl) * cc - hw * ss
    ys[3] = cy + (-hl) * ss + hw * cc


cdef inline double _shoelace(double* xs, double* ys, int n) nogil:
    cdef double acc = 0.0
    cdef int i, k
    for i in range(n):
        k = i + 1 if i + 1 < n else 0
        acc += xs[i] * ys[k] - xs[k] * ys[i]
    return 0.5 * acc


cdef int _clip(double* sub_x, double* sub_y, int n_sub,
               double* clip_x, double* clip_y, int n_clip,
               double* out_x, double* out_y,
               double* buf_x, double* buf_y, double* dist,
               int cap) nogil:
    """Sutherland-Hodgman clip; returns vertex count (0 when degenerate),
    -1 on buffer overflow (non-convex garbage input). Result in out_x/out_y.
    """
    cdef double* cur_x = out_x
    cdef double* cur_y = out_y
    cdef double* nxt_x = buf_x
    cdef double* nxt_y = buf_y
    cdef double* tmp
    cdef int n = n_sub
    cdef int i, j, k, m
    cdef double px, py, qx, qy, ex, ey, tol, ds, dt, t
    cdef bint s_in, t_in
    for i in range(n_sub):
        cur_x[i] = sub_x[i]
        cur_y[i] = sub_y[i]
    for i in range(n_clip):
        if n < 3:
            return 0
        px = clip_x[i]
        py = clip_y[i]
        qx = clip_x[i + 1] if i + 1 < n_clip else clip_x[0]
        qy = clip_y[i + 1] if i + 1 < n_clip else clip_y[0]
        ex = qx - px
        ey = qy - py
        tol = _EPS * sqrt(ex * ex + ey * ey)
        for j in range(n):
            dist[j] = ex * (cur_y[j] - py) - ey * (cur_x[j] - px)
        m = 0
        for j in range(n):
            k = j + 1 if j + 1 < n else 0
            ds = dist[j]
            dt = dist[k]
            s_in = ds >= -tol
            t_in = dt >= -tol
            if s_in:
                if m >= cap:
                    return -1
                nxt_x[m] = cur_x[j]
                nxt_y[m] = cur_y[j]
                m += 1
            if s_in != t_in:
                if m >= cap:
                    return -1
                t = ds / (ds - dt)
                nxt_x[m] = cur_x[j] + t * (cur_x[k] - cur_x[j])
                nxt_y[m] = cur_y[j] + t * (cur_y[k] - cur_y[j])
                m += 1
        tmp = cur_x; cur_x = nxt_x; nxt_x = tmp
        tmp = cur_y; cur_y = nxt_y; nxt_y = tmp
        n = m
    if n < 3:
        return 0
    if cur_x is not out_x:
        for i in range(n):
            out_x[i] = cur_x[i]
            out_y[i] = cur_y[i]
    return n


cdef bint _lex_swap5(double a0, double a1, double a2, double a3, double a4,
                     double b0, double b1, double b2, double b3,
                     double b4) nogil:
    if a0 < b0: return False
    if a0 > b0: return True
    if a1 < b1: return False
    if a1 > b1: return True
    if a2 < b2: return False
    if a2 > b2: return True
    if a3 < b3: return False
    if a3 > b3: return True
    if a4 > b4: return True
    return False


cdef double _iou_bev(double ax, double ay, double al, double aw, double ayaw,
                     double bx, double by, double bl, double bw,
                     double byaw) nogil:
    cdef double t
    # Canonical argument order makes the result exactly symmetric.
    if _lex_swap5(ax, ay, al, aw, ayaw, bx, by, bl, bw, byaw):
        t = ax; ax = bx; bx = t
        t = ay; ay = by; by = t
        t = al; al = bl; bl = t
        t = aw; aw = bw; bw = t
        t = ayaw; ayaw = byaw; byaw = t
    cdef double cax[4]
    cdef double cay[4]
    cdef double cbx[4]
    cdef double cby[4]
    cdef double ox[24]
    cdef double oy[24]
    cdef double bx_[24]
    cdef double by_[24]
    cdef double dist[24]
    _box_corners(ax, ay, al, aw, ayaw, cax, cay)
    _box_corners(bx, by, bl, bw, byaw, cbx, cby)
    cdef int n = _clip(cax, cay, 4, cbx, cby, 4, ox, oy, bx_, by_, dist, 24)
    cdef double inter = _shoelace(ox, oy, n) if n >= 3 else 0.0
    if inter <= 0.0:
        return 0.0
    cdef double area_a = _shoelace(cax, cay, 4)
    cdef double area_b = _shoelace(cbx, cby, 4)
    cdef double union_ = area_a + area_b - inter
    if union_ <= 0.0:
        return 0.0
    cdef double iou = inter / union_
    if iou < 0.0:
        return 0.0
    if iou > 1.0:
        return 1.0
    return iou


cdef inline double _overlap_1d(double ac, double ah, double bc,
                               double bh) nogil:
    cdef double lo = _pymax(ac - 0.5 * ah, bc - 0.5 * bh)
    cdef double hi = _pymin(ac + 0.5 * ah, bc + 0.5 * bh)
    return hi - lo


cdef bint _lex_swap7(double* a, double* b) nogil:
    cdef int i
    for i in range(7):
        if a[i] < b[i]:
            return False
        if a[i] > b[i]:
            return True
    return False


cdef double _iou_3d(double* a_in, double* b_in) nogil:
    cdef double a[7]
    cdef double b[7]
    cdef int i
    for i in range(7):
        a[i] = a_in[i]
        b[i] = b_in[i]
    cdef double t
    if _lex_swap7(a, b):
        for i in range(7):
            t = a[i]; a[i] = b[i]; b[i] = t
    cdef double cax[4]
    cdef double cay[4]
    cdef double cbx[4]
    cdef double cby[4]
    cdef double ox[24]
    cdef double oy[24]
    cdef double bx_[24]
    cdef double by_[24]
    cdef double dist[24]
    _box_corners(a[0], a[1], a[3], a[4], a[6], cax, cay)
    _box_corners(b[0], b[1], b[3], b[4], b[6], cbx, cby)
    cdef int n = _clip(cax, cay, 4, cbx, cby, 4, ox, oy, bx_, by_, dist, 24)
    cdef double foot = _shoelace(ox, oy, n) if n >= 3 else 0.0
    if foot <= 0.0:
        return 0.0
    cdef double dz = _overlap_1d(a[2], a[5], b[2], b[5])
    if dz <= 0.0:
        return 0.0
    cdef double inter = foot * dz
    cdef double vol_a = _shoelace(cax, cay, 4) * a[5]
    cdef double vol_b = _shoelace(cbx, cby, 4) * b[5]
    cdef double union_ = vol_a + vol_b - inter
    if union_ <= 0.0:
        return 0.0
    cdef double iou = inter / union_
    if iou < 0.0:
        return 0.0
    if iou > 1.0:
        return 1.0
    return iou


def convex_intersection_area(poly_a, poly_b):
    """Intersection area of two convex CCW polygons given as (n, 2) arrays."""
    cdef cnp.float64_t[:, ::1] a = np.ascontiguousarray(poly_a, dtype=np.float64)
    cdef cnp.float64_t[:, ::1] b = np.ascontiguousarray(poly_b, dtype=np.float64)
    cdef int na = a.shape[0]
    cdef int nb = b.shape[0]
    if na < 3 or nb < 3:
        return 0.0
    cdef int cap = na + 2 * nb + 8
    cdef double* mem = <double*> malloc(sizeof(double) * (cap * 5 + 2 * (na + nb)))
    if mem == NULL:
        raise MemoryError()
    cdef double* sx = mem
    cdef double* sy = mem + na
    cdef double* cx = mem + 2 * na
    cdef double* cy = mem + 2 * na + nb
    cdef double* ox = mem + 2 * (na + nb)
    cdef double* oy = ox + cap
    cdef double* ux = oy + cap
    cdef double* uy = ux + cap
    cdef double* dist = uy + cap
    cdef int i, n
    cdef double area
    try:
        for i in range(na):
            sx[i] = a[i, 0]
            sy[i] = a[i, 1]
        for i in range(nb):
            cx[i] = b[i, 0]
            cy[i] = b[i, 1]
        n = _clip(sx, sy, na, cx, cy, nb, ox, oy, ux, uy, dist, cap)
        if n == -1:
            raise ValueError("polygon clipping overflow; inputs must be convex")
        if n < 3:
            return 0.0
        area = _shoelace(ox, oy, n)
        return area if area > 0.0 else 0.0
    finally:
        free(mem)


def rotated_iou_pair(a, b):
    """BEV IoU of two (x, y, l, w, yaw) boxes."""
    return _iou_bev(float(a[0]), float(a[1]), float(a[2]), float(a[3]),
                    float(a[4]),
                    float(b[0]), float(b[1]), float(b[2]), float(b[3]),
                    float(b[4]))


def rotated_iou_one_many(a, boxes):
    """BEV IoU of one (x, y, l, w, yaw) box against an (m, 5) array."""
    cdef cnp.float64_t[:, ::1] bv = np.ascontiguousarray(boxes, dtype=np.float64)
    cdef Py_ssize_t m = bv.shape[0]
    out = np.empty(m, dtype=np.float64)
    cdef cnp.float64_t[::1] ov = out
    cdef double ax = float(a[0])
    cdef double ay = float(a[1])
    cdef double al = float(a[2])
    cdef double aw = float(a[3])
    cdef double ayaw = float(a[4])
    cdef Py_ssize_t i
    for i in range(m):
        ov[i] = _iou_bev(ax, ay, al, aw, ayaw,
                         bv[i, 0], bv[i, 1], bv[i, 2], bv[i, 3], bv[i, 4])
    return out


def rotated_iou_matrix(boxes_a, boxes_b):
    """Pairwise BEV IoU matrix between (n, 5) and (m, 5) box arrays."""
    cdef cnp.float64_t[:, ::1] av = np.ascontiguousarray(boxes_a, dtype=np.float64)
    cdef cnp.float64_t[:, ::1] bv = np.ascontiguousarray(boxes_b, dtype=np.float64)
    cdef Py_ssize_t n = av.shape[0]
    cdef Py_ssize_t m = bv.shape[0]
    out = np.empty((n, m), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] ov = out
    cdef Py_ssize_t i, j
    for i in range(n):
        for j in range(m):
            ov[i, j] = _iou_bev(
                av[i, 0], av[i, 1], av[i, 2], av[i, 3], av[i, 4],
                bv[j, 0], bv[j, 1], bv[j, 2], bv[j, 3], bv[j, 4])
    return out


def iou3d_pair(a, b):
    """IoU of two (x, y, z, l, w, h, yaw) volumes (z at center height)."""
    cdef double av[7]
    cdef double bv[7]
    cdef int i
    for i in range(7):
        av[i] = float(a[i])
        bv[i] = float(b[i])
    return _iou_3d(av, bv)


def iou3d_matrix(boxes_a, boxes_b):
    """Pairwise 3D IoU matrix between (n, 7) and (m, 7) box arrays."""
    cdef cnp.float64_t[:, ::1] av = np.ascontiguousarray(boxes_a, dtype=np.float64)
    cdef cnp.float64_t[:, ::1] bv = np.ascontiguousarray(boxes_b, dtype=np.float64)
    cdef Py_ssize_t n = av.shape[0]
    cdef Py_ssize_t m = bv.shape[0]
    out = np.empty((n, m), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] ov = out
    cdef Py_ssize_t i, j
    for i in range(n):
        for j in range(m):
            ov[i, j] = _iou_3d(&av[i, 0], &bv[j, 0])
    return out
