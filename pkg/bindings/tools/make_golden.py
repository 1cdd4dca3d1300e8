"""Regenerate the committed golden fixtures for the bindings parity tests.

Runs everything through the bevkit library directly (never through
bevkit_bindings), so the fixtures pin down the direct library path.
Deterministic: rerunning writes byte-identical arrays.

Usage: python3 bindings/tools/make_golden.py
"""

import math
from pathlib import Path

import numpy as np

from bevkit import bev, codec, postproc
from bevkit.geometry import AabbBox2D, Box3D

GOLDEN = Path(__file__).resolve().parent.parent / "tests" / "golden"

GRID = dict(cell_size=0.25, forward_range=10.0, lateral_range=5.0,
            max_height_above_ground=2.5, ground_z=-1.8,
            density_saturation=48)

CATEGORY_REFS = {
    1: codec.ReferenceBox.for_category("Car"),
    2: codec.ReferenceBox.for_category("Pedestrian"),
}

WEIGHTS = codec.RegressionWeights(w_z=1.7, w_h=0.8, w_xy=2.2, w_lw=0.6)


def bev_cases(rng):
    config = bev.GridConfig(**GRID)
    single = np.array([[3.2, -1.1, -0.9, 0.5]], dtype=np.float32)
    cloud = np.column_stack([
        rng.uniform(-1.0, 11.0, 1500),
        rng.uniform(-6.0, 6.0, 1500),
        rng.uniform(-2.3, 1.5, 1500),
        rng.uniform(0.0, 1.0, 1500),
    ]).astype(np.float32)
    return {
        "bev_single_points": single,
        "bev_single_image": bev.encode(single, config).data,
        "bev_cloud_points": cloud,
        "bev_cloud_image": bev.encode(cloud, config).data,
    }


def codec_cases(rng):
    n = 64
    proposals = np.column_stack([
        rng.uniform(-20, 20, n), rng.uniform(-20, 20, n),
        rng.uniform(0.5, 8, n), rng.uniform(0.5, 8, n)])
    boxes = np.column_stack([
        rng.uniform(-20, 20, n), rng.uniform(-20, 20, n),
        rng.uniform(-2, 1, n), rng.uniform(0.5, 6, n),
        rng.uniform(0.5, 3, n), rng.uniform(0.5, 2.5, n),
        rng.uniform(-math.pi, math.pi, n)])
    ids = rng.integers(1, 3, n)
    out = {"codec_proposals": proposals, "codec_boxes": boxes,
           "codec_ids": ids}
    for mode in ("ratio", "literal"):
        targets = np.empty((n, 8))
        decoded = np.empty((n, 7))
        for i in range(n):
            proposal = AabbBox2D.from_center_size(*proposals[i])
            ref = CATEGORY_REFS[int(ids[i])]
            enc = codec.encode_box_targets(
                proposal, Box3D(*boxes[i]), ref, WEIGHTS, mode=mode)
            targets[i] = (enc.dx, enc.dy, enc.dl, enc.dw, enc.dh, enc.dz,
                          float(enc.yaw_bin), enc.yaw_residual)
            back = codec.decode_box_targets(
                proposal, enc, ref, WEIGHTS, mode=mode)
            decoded[i] = (back.x, back.y, back.z, back.length, back.width,
                          back.height, back.yaw)
        out[f"codec_targets_{mode}"] = targets
        out[f"codec_decoded_{mode}"] = decoded

    # Zero targets decode to the proposal completed with reference values.
    zero_decoded = np.empty((n, 7))
    zeros = codec.BoxTargets(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0, 0.0)
    for i in range(n):
        proposal = AabbBox2D.from_center_size(*proposals[i])
        back = codec.decode_box_targets(
            proposal, zeros, CATEGORY_REFS[int(ids[i])], WEIGHTS)
        zero_decoded[i] = (back.x, back.y, back.z, back.length, back.width,
                          back.height, back.yaw)
    out["codec_zero_decoded"] = zero_decoded
    return out


def nms_cases(rng):
    # Hand-built: boxes 0 and 1 overlap at IoU exactly 0.5, box 2 is clear.
    hand = np.array([
        [0.0, 0.0, -1.0, 4.0, 2.0, 1.5, 0.0, 1.0, 0.9],
        [4.0 / 3.0, 0.0, -1.0, 4.0, 2.0, 1.5, 0.0, 1.0, 0.8],
        [20.0, 0.0, -1.0, 4.0, 2.0, 1.5, 0.0, 1.0, 0.7],
    ])
    # Identical footprints survive together when categories differ.
    cats = np.array([
        [5.0, 5.0, -1.0, 3.0, 1.5, 1.4, 0.3, 1.0, 0.9],
        [5.0, 5.0, -1.0, 3.0, 1.5, 1.4, 0.3, 2.0, 0.6],
    ])
    crowd = np.column_stack([
        rng.uniform(-10, 10, 30), rng.uniform(-10, 10, 30),
        np.full(30, -1.0), rng.uniform(1, 5, 30), rng.uniform(0.5, 3, 30),
        np.full(30, 1.5), rng.uniform(-math.pi, math.pi, 30),
        rng.integers(1, 3, 30).astype(np.float64), rng.uniform(0, 1, 30)])

    out = {}
    for name, dets, threshold in (("hand", hand, 0.3), ("cats", cats, 0.3),
                                  ("crowd", crowd, 0.3)):
        items = tuple(
            postproc.Detection(Box3D(*row[:7]), str(int(row[7])),
                               float(row[8]))
            for row in dets)
        kept = postproc.rotated_nms(
            postproc.DetectionSet("golden", items), threshold)
        index_of = {id(det): i for i, det in enumerate(items)}
        out[f"nms_{name}_dets"] = dets
        out[f"nms_{name}_threshold"] = np.float64(threshold)
        out[f"nms_{name}_kept"] = np.array(
            [index_of[id(det)] for det in kept], dtype=np.int64)
    return out


def main():
    rng = np.random.default_rng(77)
    arrays = {}
    arrays.update(bev_cases(rng))
    arrays.update(codec_cases(rng))
    arrays.update(nms_cases(rng))
    arrays["grid_params"] = np.array([
        GRID["cell_size"], GRID["forward_range"], GRID["lateral_range"],
        GRID["max_height_above_ground"], GRID["ground_z"],
        float(GRID["density_saturation"])])
    arrays["category_refs"] = np.array(
        [[float(cat_id), ref.h_ref, ref.z_ref]
         for cat_id, ref in sorted(CATEGORY_REFS.items())])
    arrays["codec_weights"] = np.array(
        [WEIGHTS.w_z, WEIGHTS.w_h, WEIGHTS.w_xy, WEIGHTS.w_lw])
    GOLDEN.mkdir(parents=True, exist_ok=True)
    np.savez(GOLDEN / "golden.npz", **arrays)
    print(f"wrote {GOLDEN / 'golden.npz'} ({len(arrays)} arrays)")


if __name__ == "__main__":
    main()
