"""LiDAR bird's-eye-view detection machinery.

Everything around the neural network of a BEV 3D detector: KITTI I/O and
frame transforms, BEV rasterization, oriented-box geometry and IoU,
regression target codecs, anchor generation/assignment, rotated NMS, an
oracle detector, and KITTI-style AP evaluation. Hot kernels run through an
optional compiled extension with a bit-identical pure NumPy fallback.
"""

from ._native import active_backend_name, available_backends, get_backend
from .anchors import (ANCHOR_BACKGROUND, ANCHOR_FOREGROUND, ANCHOR_IGNORE,
                      AnchorConfig, assign_anchor_targets, base_anchors,
                      tile_anchors)
from .bev import (BevImage, GridConfig, bev_pixels_to_box, box_to_bev_pixels,
                  cell_index, encode, filter_cloud, horizontal_flip,
                  point_counts, write_bev_png)
from .codec import (BoxTargets, ReferenceBox, RegressionWeights, YawEncoding,
                    assemble_box3d, decode_aabb_delta, decode_box_targets,
                    decode_height_z, decode_rotated_dims, decode_yaw,
                    default_references, encode_aabb_delta, encode_box_targets,
                    encode_height_z, encode_rotated_dims, encode_yaw,
                    fit_weights, yaw_bin_centers)
from .config import (ConfigError, DataPaths, PipelineConfig, default_config,
                     load_config, save_config)
from .evaluation import (DifficultyCriteria, EvalConfig, EvalResult,
                         GroundTruthFrame, assign_difficulty,
                         average_precision, evaluate, ground_truth_frame,
                         match_frame, precision_recall)
from .geometry import (AabbBox2D, Box3D, RotatedBox2D, aabb_hull, aabb_iou,
                       box_corners, convex_intersection_area, corners_3d,
                       iou_3d, iou_3d_matrix, polygon_area, rotated_iou,
                       rotated_iou_matrix, rotated_iou_one_many, wrap_angle,
                       wrap_angles)
from .kitti_io import (Calibration, ObjectLabel, ParseError, box_to_label,
                       camera_box_to_lidar, camera_fov_mask,
                       detection_to_label, lidar_box_to_camera,
                       load_point_cloud, parse_calibration, parse_labels,
                       project_points_to_image, read_detections,
                       save_point_cloud, write_detections, write_labels)
from .postproc import (Detection, DetectionSet, NoiseSpec, oracle_detect,
                       rotated_nms)

__version__ = "0.1.0"
