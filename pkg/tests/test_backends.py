"""The compiled kernels and the pure fallback must agree bit for bit."""

import math

import numpy as np
import pytest

from bevkit import bev
from bevkit._native import active_backend_name, available_backends, get_backend

HAVE_COMPILED = "compiled" in available_backends()

needs_compiled = pytest.mark.skipif(
    not HAVE_COMPILED, reason="compiled extension not built")


def random_segments(rng, n_cells=64, n_points=400):
    """Canonically sorted (flat, z, refl) arrays covering awkward values."""
    flat = np.sort(rng.integers(0, n_cells, n_points)).astype(np.int64)
    z = rng.uniform(-5, 5, n_points).astype(np.float32)
    # Inject duplicates and exact zeros into the reflectances.
    refl = rng.uniform(0, 1, n_points).astype(np.float32)
    refl[rng.uniform(size=n_points) < 0.2] = np.float32(0.25)
    refl[rng.uniform(size=n_points) < 0.05] = np.float32(0.0)
    refl = refl + np.float32(0.0)
    order = np.lexsort((refl.view(np.uint32), flat))
    return (np.ascontiguousarray(flat[order]),
            np.ascontiguousarray(z[order]),
            np.ascontiguousarray(refl[order]))


def test_python_backend_always_available():
    assert "python" in available_backends()


def test_env_var_selects_backend(monkeypatch):
    monkeypatch.setenv("BEVKIT_BACKEND", "python")
    assert active_backend_name() == "python"
    monkeypatch.setenv("BEVKIT_BACKEND", "nonsense")
    with pytest.raises(ValueError, match="unknown kernel backend"):
        get_backend()
    monkeypatch.delenv("BEVKIT_BACKEND")
    assert active_backend_name() in available_backends()


@needs_compiled
def test_env_var_compiled(monkeypatch):
    monkeypatch.setenv("BEVKIT_BACKEND", "compiled")
    assert active_backend_name() == "compiled"


@needs_compiled
def test_segment_stats_bit_equal():
    py = get_backend("python")
    cc = get_backend("compiled")
    rng = np.random.default_rng(101)
    for _ in range(50):
        n_cells = int(rng.integers(1, 200))
        n_points = int(rng.integers(0, 500))
        flat, z, refl = random_segments(rng, n_cells, n_points)
        c_py, z_py, r_py = py.segment_stats(flat, z, refl, n_cells)
        c_cc, z_cc, r_cc = cc.segment_stats(flat, z, refl, n_cells)
        assert c_py.dtype == c_cc.dtype == np.int64
        assert z_py.dtype == z_cc.dtype == np.float32
        assert r_py.dtype == r_cc.dtype == np.float64
        np.testing.assert_array_equal(c_py, c_cc)
        np.testing.assert_array_equal(z_py, z_cc)
        np.testing.assert_array_equal(r_py, r_cc)


@needs_compiled
def test_rotated_iou_bit_equal():
    py = get_backend("python")
    cc = get_backend("compiled")
    rng = np.random.default_rng(103)
    boxes = np.column_stack([
        rng.uniform(-3, 3, 60), rng.uniform(-3, 3, 60),
        rng.uniform(0.2, 5, 60), rng.uniform(0.2, 5, 60),
        rng.uniform(-math.pi, math.pi, 60)])
    m_py = py.rotated_iou_matrix(boxes, boxes)
    m_cc = cc.rotated_iou_matrix(boxes, boxes)
    np.testing.assert_array_equal(m_py, m_cc)
    for i in range(0, 60, 7):
        one_py = py.rotated_iou_one_many(boxes[i], boxes)
        one_cc = cc.rotated_iou_one_many(boxes[i], boxes)
        np.testing.assert_array_equal(one_py, one_cc)
        for j in range(0, 60, 11):
            assert py.rotated_iou_pair(boxes[i], boxes[j]) == \
                cc.rotated_iou_pair(boxes[i], boxes[j])


@needs_compiled
def test_iou3d_bit_equal():
    py = get_backend("python")
    cc = get_backend("compiled")
    rng = np.random.default_rng(107)
    boxes = np.column_stack([
        rng.uniform(-3, 3, 40), rng.uniform(-3, 3, 40),
        rng.uniform(-1, 1, 40), rng.uniform(0.2, 5, 40),
        rng.uniform(0.2, 5, 40), rng.uniform(0.3, 3, 40),
        rng.uniform(-math.pi, math.pi, 40)])
    np.testing.assert_array_equal(py.iou3d_matrix(boxes, boxes),
                                  cc.iou3d_matrix(boxes, boxes))
    for i in range(0, 40, 5):
        for j in range(0, 40, 9):
            assert py.iou3d_pair(boxes[i], boxes[j]) == \
                cc.iou3d_pair(boxes[i], boxes[j])


@needs_compiled
def test_convex_intersection_bit_equal():
    py = get_backend("python")
    cc = get_backend("compiled")
    rng = np.random.default_rng(109)
    for _ in range(200):
        # Random convex polygons: boxes and regular k-gons.
        def poly(k):
            angles = np.sort(rng.uniform(0, 2 * math.pi, k))
            radius = rng.uniform(0.5, 3)
            cx, cy = rng.uniform(-2, 2, 2)
            return np.column_stack([cx + radius * np.cos(angles),
                                    cy + radius * np.sin(angles)])

        pa = poly(int(rng.integers(3, 8)))
        pb = poly(int(rng.integers(3, 8)))
        assert py.convex_intersection_area(pa, pb) == \
            cc.convex_intersection_area(pa, pb)


@needs_compiled
def test_encode_bit_identical_across_backends(monkeypatch):
    grid = bev.GridConfig(cell_size=0.1, forward_range=10.0, lateral_range=5.0)
    rng = np.random.default_rng(113)
    for _ in range(20):
        n = int(rng.integers(0, 3000))
        cloud = np.column_stack([
            rng.uniform(-1, 11, n), rng.uniform(-6, 6, n),
            rng.uniform(-3, 3, n), rng.uniform(0, 1, n),
        ]).astype(np.float32)
        monkeypatch.setenv("BEVKIT_BACKEND", "python")
        img_py = bev.encode(cloud, grid)
        monkeypatch.setenv("BEVKIT_BACKEND", "compiled")
        img_cc = bev.encode(cloud, grid)
        assert img_py.data.tobytes() == img_cc.data.tobytes()
