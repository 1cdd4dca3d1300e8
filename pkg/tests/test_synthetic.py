"""Synthetic scene generator used by the demo pipeline and benchmarks."""

import numpy as np
import pytest

from bevkit.bev import GridConfig
from bevkit.evaluation import DIFFICULTIES, assign_difficulty
from bevkit.kitti_io import load_point_cloud, parse_calibration, parse_labels
from bevkit.synthetic import (corners_in_image, frame_labels,
                              max_footprint_iou, synthetic_calibration,
                              synthetic_cloud, synthetic_frame,
                              write_calibration, write_synthetic_dataset)

GRID = GridConfig()


class TestFrames:
    def test_deterministic(self):
        a = synthetic_frame(3, seed=5)
        b = synthetic_frame(3, seed=5)
        assert a == b
        assert a != synthetic_frame(3, seed=6)
        assert a != synthetic_frame(4, seed=5)

    def test_footprints_never_overlap(self):
        for index in range(24):
            frame = synthetic_frame(index, seed=0)
            assert max_footprint_iou(frame) == 0.0, index

    def test_objects_inside_grid_and_image(self):
        calib = synthetic_calibration()
        for index in range(24):
            for obj in synthetic_frame(index, seed=0).objects:
                assert 0 < obj.box.x < GRID.forward_range
                assert abs(obj.box.y) < GRID.lateral_range
                assert corners_in_image(obj.box, calib)

    def test_boxes_rest_on_ground(self):
        for obj in synthetic_frame(1, seed=0).objects:
            assert obj.box.z_bottom == pytest.approx(GRID.ground_z, abs=1e-12)

    def test_every_difficulty_appears(self):
        calib = synthetic_calibration()
        seen = set()
        for index in range(12):
            frame = synthetic_frame(index, seed=0)
            for label in frame_labels(frame, calib):
                if label.category != "DontCare":
                    seen.add(assign_difficulty(label))
        assert seen >= set(DIFFICULTIES)

    def test_dontcare_every_fourth_frame(self):
        flags = [synthetic_frame(i, seed=0).with_dontcare for i in range(8)]
        assert flags == [True, False, False, False, True, False, False, False]


class TestClouds:
    def test_shape_and_determinism(self):
        a = synthetic_cloud(500, seed=1)
        b = synthetic_cloud(500, seed=1)
        assert a.shape == (500, 4)
        assert a.dtype == np.float32
        assert a.tobytes() == b.tobytes()
        assert synthetic_cloud(500, seed=2).tobytes() != a.tobytes()

    def test_reflectance_range(self):
        cloud = synthetic_cloud(2000, seed=3)
        assert (cloud[:, 3] >= 0.0).all()
        assert (cloud[:, 3] <= 1.0).all()

    def test_ground_points_in_grid(self):
        cloud = synthetic_cloud(2000, seed=4)
        assert (cloud[:, 0] > 0).all()
        assert (np.abs(cloud[:, 1]) < GRID.lateral_range).all()
        assert (cloud[:, 2] >= np.float32(GRID.ground_z)).all()

    def test_object_points_cluster_on_boxes(self):
        frame = synthetic_frame(2, seed=0)
        cloud = synthetic_cloud(3000, seed=0, frame=frame)
        # Some points must fall within each object's footprint circumradius.
        for obj in frame.objects:
            d = np.hypot(cloud[:, 0] - obj.box.x, cloud[:, 1] - obj.box.y)
            reach = 0.5 * np.hypot(obj.box.length, obj.box.width) + 1e-3
            assert (d < reach).sum() >= 10


class TestCalibration:
    def test_orthonormal_and_parseable(self, tmp_path):
        calib = synthetic_calibration()
        r = calib.velo_to_cam[:, :3]
        np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-12)
        path = tmp_path / "calib.txt"
        write_calibration(calib, path)
        parsed = parse_calibration(path)
        np.testing.assert_allclose(parsed.cam_projection,
                                   calib.cam_projection, rtol=1e-10)


class TestDataset:
    def test_layout_and_round_trip(self, tmp_path):
        frame_ids = write_synthetic_dataset(tmp_path, n_frames=3,
                                            points_per_frame=400, seed=0)
        assert frame_ids == ["000000", "000001", "000002"]
        split = (tmp_path / "split.txt").read_text().split()
        assert split == frame_ids
        for fid in frame_ids:
            cloud = load_point_cloud(tmp_path / "velodyne" / f"{fid}.bin")
            assert cloud.shape[0] >= 400
            labels = parse_labels(tmp_path / "label_2" / f"{fid}.txt")
            assert labels
            parse_calibration(tmp_path / "calib" / f"{fid}.txt")

    def test_rerun_is_byte_identical(self, tmp_path):
        write_synthetic_dataset(tmp_path / "a", n_frames=2,
                                points_per_frame=300, seed=9)
        write_synthetic_dataset(tmp_path / "b", n_frames=2,
                                points_per_frame=300, seed=9)
        for rel in ("velodyne/000001.bin", "label_2/000001.txt",
                    "calib/000000.txt", "split.txt"):
            assert (tmp_path / "a" / rel).read_bytes() == \
                (tmp_path / "b" / rel).read_bytes(), rel

    def test_labels_parse_to_expected_categories(self, tmp_path):
        write_synthetic_dataset(tmp_path, n_frames=1, points_per_frame=100,
                                seed=0)
        labels = parse_labels(tmp_path / "label_2" / "000000.txt")
        known = {"Car", "Pedestrian", "Cyclist", "DontCare"}
        assert {l.category for l in labels} <= known
