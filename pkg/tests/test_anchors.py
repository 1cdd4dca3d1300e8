"""Anchor generation and foreground/background assignment."""

import math

import numpy as np
import pytest

from bevkit.anchors import (ANCHOR_BACKGROUND, ANCHOR_FOREGROUND,
                            ANCHOR_IGNORE, AnchorConfig, aabb_iou_matrix,
                            assign_anchor_targets, base_anchors, tile_anchors)
from bevkit.geometry import aabb_iou, AabbBox2D

CONFIG = AnchorConfig()


def hull_row(x, y, sx, sy):
    return [x - 0.5 * sx, y - 0.5 * sy, x + 0.5 * sx, y + 0.5 * sy]


class TestBaseAnchors:
    def test_count_and_order(self):
        base = base_anchors(CONFIG)
        assert len(base) == 9
        # Scales vary slowest: the first three entries share scale 16.
        for anchor in base[:3]:
            assert anchor.area == pytest.approx(16.0 ** 2, rel=1e-12)
        for anchor in base[3:6]:
            assert anchor.area == pytest.approx(48.0 ** 2, rel=1e-12)

    def test_square_anchor(self):
        square = base_anchors(CONFIG)[0]
        assert (square.sx, square.sy) == (16.0, 16.0)
        assert (square.x, square.y) == (0.0, 0.0)

    def test_area_preserving_aspect(self):
        # 48 at 1:2 has r = 2: sx = 48/sqrt(2), sy = 48*sqrt(2).
        tall = base_anchors(CONFIG)[4]
        assert tall.sx == pytest.approx(33.94112549695428, rel=1e-12)
        assert tall.sy == pytest.approx(67.88225099390856, rel=1e-12)
        wide = base_anchors(CONFIG)[5]
        assert wide.sx == pytest.approx(tall.sy, rel=1e-12)
        assert wide.sy == pytest.approx(tall.sx, rel=1e-12)

    def test_all_areas_match_scale(self):
        for config in (CONFIG, AnchorConfig(scales=(10.0,),
                                            aspect_ratios=((2, 3), (5, 1)))):
            base = base_anchors(config)
            scales = [s for s in config.scales
                      for _ in config.aspect_ratios]
            for anchor, s in zip(base, scales):
                assert anchor.area == pytest.approx(s * s, rel=1e-12)


class TestTiling:
    def test_shape(self):
        tiled = tile_anchors(CONFIG, 2, 2)
        assert tiled.shape == (2 * 2 * 9, 4)

    def test_single_cell_centers(self):
        tiled = tile_anchors(CONFIG, 1, 1)
        centers_x = 0.5 * (tiled[:, 0] + tiled[:, 2])
        centers_y = 0.5 * (tiled[:, 1] + tiled[:, 3])
        np.testing.assert_allclose(centers_x, 4.0, atol=1e-12)
        np.testing.assert_allclose(centers_y, 4.0, atol=1e-12)

    def test_anchor_index_fastest(self):
        tiled = tile_anchors(CONFIG, 2, 3)
        n_base = CONFIG.n_base
        base = base_anchors(CONFIG)
        # Block k covers feature cell (k // 3, k % 3).
        for k, (i, j) in enumerate([(0, 0), (0, 1), (0, 2), (1, 0)]):
            block = tiled[k * n_base:(k + 1) * n_base]
            cx = CONFIG.stride * (j + 0.5)
            cy = CONFIG.stride * (i + 0.5)
            expected = np.array([[cx + a.x_min, cy + a.y_min,
                                  cx + a.x_max, cy + a.y_max] for a in base])
            np.testing.assert_allclose(block, expected, atol=1e-12)

    def test_translation_by_stride(self):
        tiled = tile_anchors(CONFIG, 1, 2)
        n_base = CONFIG.n_base
        shifted = tiled[:n_base].copy()
        shifted[:, [0, 2]] += CONFIG.stride
        np.testing.assert_allclose(tiled[n_base:2 * n_base], shifted,
                                   atol=1e-12)

    def test_rejects_empty_grid(self):
        with pytest.raises(ValueError, match="positive"):
            tile_anchors(CONFIG, 0, 5)


class TestIouMatrix:
    def test_matches_scalar(self):
        rng = np.random.default_rng(71)
        a = np.sort(rng.uniform(-10, 10, (20, 4)).reshape(20, 2, 2),
                    axis=1).reshape(20, 4)[:, [0, 2, 1, 3]]
        b = np.sort(rng.uniform(-10, 10, (15, 4)).reshape(15, 2, 2),
                    axis=1).reshape(15, 4)[:, [0, 2, 1, 3]]
        got = aabb_iou_matrix(a, b)
        for i in range(20):
            for j in range(15):
                try:
                    box_a = AabbBox2D(*a[i])
                    box_b = AabbBox2D(*b[j])
                except ValueError:
                    continue
                assert got[i, j] == pytest.approx(aabb_iou(box_a, box_b),
                                                  abs=1e-12)

    def test_fixture(self):
        a = np.array([[0.0, 0.0, 2.0, 2.0]])
        b = np.array([[1.0, 0.0, 3.0, 2.0], [5.0, 5.0, 6.0, 6.0]])
        got = aabb_iou_matrix(a, b)
        np.testing.assert_allclose(got, [[1.0 / 3.0, 0.0]], atol=1e-12)


class TestAssignment:
    def test_exact_match_is_foreground(self):
        anchors = tile_anchors(CONFIG, 4, 4)
        gt = anchors[17:18].copy()
        labels, matched = assign_anchor_targets(anchors, gt, CONFIG)
        assert labels[17] == ANCHOR_FOREGROUND
        assert matched[17] == 0

    def test_threshold_bands(self):
        # Anchor 1 sits exactly on the gt so it wins the argmax forcing,
        # leaving anchor 0 labeled purely by its IoU band. Shifting two
        # 10x10 squares by d gives IoU (10-d)/(10+d).
        cases = [
            (0.0, ANCHOR_FOREGROUND),   # IoU 1.0
            (1.0, ANCHOR_FOREGROUND),   # IoU 9/11 >= 0.7
            (2.0, ANCHOR_IGNORE),       # IoU 2/3
            (6.0, ANCHOR_BACKGROUND),   # IoU 0.25
            (30.0, ANCHOR_BACKGROUND),  # IoU 0
        ]
        for shift, expected in cases:
            anchors = np.array([hull_row(0, 0, 10, 10),
                                hull_row(shift, 0, 10, 10)])
            gt = np.array([hull_row(shift, 0, 10, 10)])
            labels, _ = assign_anchor_targets(anchors, gt, CONFIG)
            assert labels[0] == expected, shift
            assert labels[1] == ANCHOR_FOREGROUND

    def test_argmax_forcing_below_threshold(self):
        # Best IoU 0.4 < fg_iou, but the gt still claims its best anchor.
        anchors = np.array([hull_row(0, 0, 10, 10), hull_row(40, 0, 10, 10)])
        gt = np.array([hull_row(4.2857142857142856, 0, 10, 10)])
        iou = aabb_iou_matrix(anchors, gt)
        assert 0.3 < iou[0, 0] < 0.7
        labels, matched = assign_anchor_targets(anchors, gt, CONFIG)
        assert labels[0] == ANCHOR_FOREGROUND
        assert matched[0] == 0
        assert labels[1] == ANCHOR_BACKGROUND
        assert matched[1] == -1

    def test_zero_overlap_forces_nothing(self):
        anchors = np.array([hull_row(0, 0, 10, 10)])
        gt = np.array([hull_row(100, 100, 10, 10)])
        labels, matched = assign_anchor_targets(anchors, gt, CONFIG)
        assert labels[0] == ANCHOR_BACKGROUND
        assert matched[0] == -1

    def test_forcing_tie_takes_lowest_anchor_index(self):
        # Two anchors straddle the gt symmetrically: identical IoU.
        anchors = np.array([hull_row(-2, 0, 10, 10), hull_row(2, 0, 10, 10)])
        gt = np.array([hull_row(0, 0, 10, 10)])
        labels, matched = assign_anchor_targets(anchors, gt, CONFIG)
        assert labels[0] == ANCHOR_FOREGROUND
        assert matched[0] == 0
        assert labels[1] == ANCHOR_IGNORE

    def test_later_gt_overrides_forced_match(self):
        # One anchor is the best anchor of both gts; the later gt wins.
        anchors = np.array([hull_row(0, 0, 10, 10)])
        gt = np.array([hull_row(3, 0, 10, 10), hull_row(4, 0, 10, 10)])
        labels, matched = assign_anchor_targets(anchors, gt, CONFIG)
        assert labels[0] == ANCHOR_FOREGROUND
        assert matched[0] == 1

    def test_every_overlapped_gt_owns_an_anchor(self):
        rng = np.random.default_rng(72)
        anchors = tile_anchors(CONFIG, 6, 6)
        for _ in range(50):
            gt = np.array([hull_row(rng.uniform(4, 44), rng.uniform(4, 44),
                                    rng.uniform(6, 30), rng.uniform(6, 30))
                           for _ in range(4)])
            labels, matched = assign_anchor_targets(anchors, gt, CONFIG)
            iou = aabb_iou_matrix(anchors, gt)
            claimed = set(matched[labels == ANCHOR_FOREGROUND])
            for j in range(4):
                if iou[:, j].max() > 0.0:
                    # Claimable unless every later gt stole the argmax.
                    others = [k for k in range(4) if k != j]
                    if j in claimed:
                        continue
                    best_anchor = int(iou[:, j].argmax())
                    assert any(matched[best_anchor] == k for k in others)

    def test_partition_and_matched_consistency(self):
        rng = np.random.default_rng(73)
        anchors = tile_anchors(CONFIG, 5, 5)
        gt = np.array([hull_row(12, 12, 16, 16), hull_row(30, 20, 20, 12)])
        labels, matched = assign_anchor_targets(anchors, gt, CONFIG)
        assert set(np.unique(labels)) <= {ANCHOR_BACKGROUND,
                                          ANCHOR_FOREGROUND, ANCHOR_IGNORE}
        assert ((matched >= 0) == (labels == ANCHOR_FOREGROUND)).all()
        iou = aabb_iou_matrix(anchors, gt)
        best = iou.max(axis=1)
        forced = np.zeros(len(anchors), dtype=bool)
        for j in range(2):
            forced[int(iou[:, j].argmax())] = True
        fg = labels == ANCHOR_FOREGROUND
        assert ((best >= CONFIG.fg_iou) | forced)[fg].all()
        assert (best[labels == ANCHOR_BACKGROUND] < CONFIG.bg_iou).all()

    def test_no_ground_truth(self):
        anchors = tile_anchors(CONFIG, 2, 2)
        labels, matched = assign_anchor_targets(
            anchors, np.zeros((0, 4)), CONFIG)
        assert (labels == ANCHOR_BACKGROUND).all()
        assert (matched == -1).all()

    def test_label_dtypes(self):
        labels, matched = assign_anchor_targets(
            tile_anchors(CONFIG, 1, 1), np.zeros((0, 4)), CONFIG)
        assert labels.dtype == np.int8
        assert matched.dtype == np.int64


class TestConfigValidation:
    def test_threshold_order(self):
        with pytest.raises(ValueError, match="bg_iou"):
            AnchorConfig(fg_iou=0.3, bg_iou=0.7)

    def test_positive_fields(self):
        with pytest.raises(ValueError, match="scales"):
            AnchorConfig(scales=())
        with pytest.raises(ValueError, match="scales"):
            AnchorConfig(scales=(16.0, -1.0))
        with pytest.raises(ValueError, match="stride"):
            AnchorConfig(stride=0.0)
        with pytest.raises(ValueError, match="ratio"):
            AnchorConfig(aspect_ratios=((1, 0),))

    def test_n_base(self):
        assert CONFIG.n_base == 9
        assert AnchorConfig(scales=(8.0, 16.0),
                            aspect_ratios=((1, 1),)).n_base == 2
