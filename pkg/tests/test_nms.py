"""Greedy rotated non-maximum suppression."""

import math

import numpy as np
import pytest

from bevkit.geometry import Box3D, rotated_iou
from bevkit.postproc import Detection, DetectionSet, rotated_nms


def det(x, y, score, length=4.0, width=2.0, yaw=0.0, category="Car"):
    return Detection(Box3D(x, y, -1.0, length, width, 1.5, yaw),
                     category, score)


def frame(*dets):
    return DetectionSet("000000", tuple(dets))


def random_frame(rng, n, categories=("Car",)):
    dets = []
    for _ in range(n):
        dets.append(det(rng.uniform(-10, 10), rng.uniform(-10, 10),
                        float(rng.uniform(0, 1)),
                        rng.uniform(1, 5), rng.uniform(0.5, 3),
                        rng.uniform(-math.pi, math.pi),
                        str(rng.choice(categories))))
    return frame(*dets)


def pairwise_max_iou(kept):
    worst = 0.0
    by_cat = {}
    for d in kept:
        by_cat.setdefault(d.category, []).append(d.box.footprint)
    for boxes in by_cat.values():
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                worst = max(worst, rotated_iou(boxes[i], boxes[j]))
    return worst


class TestBasics:
    def test_empty(self):
        out = rotated_nms(frame())
        assert len(out) == 0
        assert out.frame_id == "000000"

    def test_single(self):
        a = det(0, 0, 0.9)
        assert rotated_nms(frame(a)).detections == (a,)

    def test_hand_fixture(self):
        # B overlaps A at IoU exactly 0.5 (4x2 boxes shifted by 4/3), so it
        # is suppressed at threshold 0.3; C is disjoint and survives.
        a = det(0.0, 0.0, 0.9)
        b = det(4.0 / 3.0, 0.0, 0.8)
        c = det(20.0, 0.0, 0.7)
        assert rotated_iou(a.box.footprint, b.box.footprint) == \
            pytest.approx(0.5, abs=1e-12)
        out = rotated_nms(frame(a, b, c), 0.3)
        assert out.detections == (a, c)

    def test_equality_at_threshold_keeps_both(self):
        a = det(0.0, 0.0, 0.9)
        b = det(1.1, 0.4, 0.8, yaw=0.2)
        threshold = rotated_iou(a.box.footprint, b.box.footprint)
        assert 0.0 < threshold < 1.0
        out = rotated_nms(frame(a, b), threshold)
        assert out.detections == (a, b)

    def test_just_below_threshold_suppresses(self):
        a = det(0.0, 0.0, 0.9)
        b = det(1.1, 0.4, 0.8, yaw=0.2)
        threshold = rotated_iou(a.box.footprint, b.box.footprint)
        out = rotated_nms(frame(a, b), threshold * (1 - 1e-9))
        assert out.detections == (a,)

    def test_categories_do_not_interact(self):
        a = det(0.0, 0.0, 0.9, category="Car")
        b = det(0.0, 0.0, 0.8, category="Pedestrian")
        out = rotated_nms(frame(a, b), 0.3)
        assert out.detections == (a, b)

    def test_output_sorted_by_score(self):
        rng = np.random.default_rng(81)
        out = rotated_nms(random_frame(rng, 40), 0.4)
        scores = [d.score for d in out]
        assert scores == sorted(scores, reverse=True)

    def test_score_tie_prefers_lower_input_index(self):
        a = det(0.0, 0.0, 0.8)
        b = det(0.5, 0.0, 0.8)
        out = rotated_nms(frame(a, b), 0.1)
        assert out.detections == (a,)
        out_swapped = rotated_nms(frame(b, a), 0.1)
        assert out_swapped.detections == (b,)

    def test_threshold_one_keeps_everything(self):
        a = det(0.0, 0.0, 0.9)
        dup = det(0.0, 0.0, 0.4)
        out = rotated_nms(frame(a, dup, det(1.0, 0.0, 0.6)), 1.0)
        assert len(out) == 3

    def test_threshold_zero_gives_disjoint_survivors(self):
        rng = np.random.default_rng(82)
        for _ in range(20):
            out = rotated_nms(random_frame(rng, 15), 0.0)
            assert pairwise_max_iou(out) == 0.0

    def test_invalid_threshold(self):
        with pytest.raises(ValueError, match="iou_threshold"):
            rotated_nms(frame(), -0.1)
        with pytest.raises(ValueError, match="iou_threshold"):
            rotated_nms(frame(), 1.5)

    def test_invalid_score(self):
        with pytest.raises(ValueError, match="score"):
            det(0, 0, 1.5)
        with pytest.raises(ValueError, match="score"):
            det(0, 0, -0.1)


class TestProperties:
    def test_idempotent(self):
        rng = np.random.default_rng(83)
        for _ in range(30):
            once = rotated_nms(random_frame(rng, 25), 0.3)
            twice = rotated_nms(once, 0.3)
            assert twice.detections == once.detections

    def test_kept_is_subsequence_of_score_order(self):
        rng = np.random.default_rng(84)
        full = random_frame(rng, 30)
        out = rotated_nms(full, 0.35)
        ranked = sorted(full.detections, key=lambda d: -d.score)
        it = iter(ranked)
        assert all(d in it for d in out)

    def test_input_permutation_invariance(self):
        # Scores drawn continuously, so ties have probability zero and the
        # kept set is permutation independent.
        rng = np.random.default_rng(85)
        for _ in range(15):
            full = random_frame(rng, 20, categories=("Car", "Cyclist"))
            base = set(rotated_nms(full, 0.3).detections)
            for _ in range(4):
                perm = rng.permutation(len(full.detections))
                shuffled = frame(*(full.detections[i] for i in perm))
                assert set(rotated_nms(shuffled, 0.3).detections) == base

    def test_suppression_certificates(self):
        # Fuzz: every suppressed det overlaps some kept same-category det
        # above threshold with a higher rank; every kept pair is <= threshold.
        rng = np.random.default_rng(86)
        for _ in range(200):
            n = int(rng.integers(0, 25))
            threshold = float(rng.uniform(0.05, 0.95))
            full = random_frame(rng, n, categories=("Car", "Pedestrian"))
            out = rotated_nms(full, threshold)
            kept = list(out.detections)
            assert pairwise_max_iou(kept) <= threshold
            kept_set = set(kept)
            for d in full.detections:
                if d in kept_set:
                    continue
                blockers = [
                    k for k in kept
                    if k.category == d.category and k.score >= d.score
                    and rotated_iou(k.box.footprint, d.box.footprint)
                    > threshold
                ]
                assert blockers, "suppressed without an overlapping blocker"

    def test_monotone_in_threshold(self):
        rng = np.random.default_rng(87)
        full = random_frame(rng, 25)
        sizes = [len(rotated_nms(full, t))
                 for t in (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)]
        assert sizes == sorted(sizes)
