"""Command-line pipeline: encode, oracle, eval, viz, bench, make-synthetic.

Every subcommand is deterministic given (config, seed): artifacts are
byte-identical across runs. Batch commands isolate per-frame failures
(the run continues, failures are listed, and the exit code is nonzero).
Exit codes: 0 success, 2 config/usage error, 3 data error.
"""

from __future__ import annotations

import json
import os
import statistics
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np
from PIL import Image, ImageDraw

from . import bev, evaluation, kitti_io, postproc, synthetic
from ._native import active_backend_name, get_backend
from .config import ConfigError, PipelineConfig, load_config
from .geometry import box_corners
from .postproc import NoiseSpec

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3

_WORKERS_ENV = "BEVKIT_WORKERS"

# Overlay palette: ground truth plus per-category detection colors.
_GT_COLOR = (255, 255, 255)
_DET_COLORS = {
    "Car": (255, 80, 80),
    "Pedestrian": (80, 255, 80),
    "Cyclist": (80, 144, 255),
}
_DET_FALLBACK = (255, 224, 64)


def _workers() -> int:
    raw = os.environ.get(_WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise click.ClickException(f"{_WORKERS_ENV} must be an integer: {raw!r}")
    return max(1, n)


def _read_split(path) -> list[str]:
    ids = []
    for line in Path(path).read_text(encoding="ascii").splitlines():
        line = line.strip()
        if line:
            ids.append(line)
    return ids


def _frame_inputs(cfg: PipelineConfig, frame_id: str, need_labels: bool):
    calib = kitti_io.parse_calibration(
        cfg.data.calib_path(frame_id), image_size=cfg.data.image_size)
    cloud = kitti_io.load_point_cloud(cfg.data.velodyne_path(frame_id))
    labels = (kitti_io.parse_labels(cfg.data.label_path(frame_id))
              if need_labels else None)
    return calib, cloud, labels


def _run_frames(frame_ids, worker):
    """Run ``worker(frame_id)`` over frames, preserving order.

    Returns (results keyed by frame id, failures as (frame id, message)).
    """
    failures = []
    results = {}
    n_workers = _workers()
    if n_workers == 1:
        pairs = ((fid, _guarded(worker, fid)) for fid in frame_ids)
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            outs = list(pool.map(lambda f: _guarded(worker, f), frame_ids))
        pairs = zip(frame_ids, outs)
    for fid, (ok, payload) in pairs:
        if ok:
            results[fid] = payload
        else:
            failures.append((fid, payload))
    return results, failures


def _guarded(worker, frame_id):
    try:
        return True, worker(frame_id)
    except Exception as exc:
        return False, f"{type(exc).__name__}: {exc}"


def _report_failures(failures) -> None:
    for fid, message in failures:
        click.echo(f"frame {fid}: {message}", err=True)


class _Context:
    def __init__(self, config: PipelineConfig):
        self.config = config


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="YAML config file; omit to use all defaults.")
@click.pass_context
def main(ctx, config_path):
    """LiDAR BEV encoding, oracle detection, and KITTI-style evaluation."""
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        ctx.exit(EXIT_CONFIG)
    ctx.obj = _Context(cfg)


@main.command()
@click.option("--split", "split_path", required=True, type=click.Path(exists=True),
              help="Newline-separated frame ids.")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.pass_obj
def encode(obj, split_path, out_dir):
    """Rasterize frames to BEV PNGs plus a manifest."""
    cfg = obj.config
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    frame_ids = _read_split(split_path)

    def worker(fid):
        calib, cloud, _ = _frame_inputs(cfg, fid, need_labels=False)
        filtered = bev.filter_cloud(cloud, calib, cfg.grid)
        image = bev.encode(filtered, cfg.grid)
        png = out / f"{fid}.png"
        bev.write_bev_png(image, png)
        return {"frame_id": fid, "png": png.name,
                "points_in_grid": int(filtered.shape[0])}

    results, failures = _run_frames(frame_ids, worker)
    manifest = {
        "grid": {"rows": cfg.grid.rows, "cols": cfg.grid.cols,
                 "cell_size": cfg.grid.cell_size},
        "frames": [results[fid] for fid in frame_ids if fid in results],
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n",
        encoding="ascii")
    _report_failures(failures)
    click.echo(f"encoded {len(results)}/{len(frame_ids)} frames -> {out}")
    if failures:
        sys.exit(EXIT_DATA)


@main.command()
@click.option("--split", "split_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--noise", type=float, default=0.0, show_default=True,
              help="Std dev applied to every encoded target dimension.")
@click.option("--jitter", type=float, default=0.0, show_default=True,
              help="Fractional jitter of the pseudo-proposals.")
@click.pass_obj
def oracle(obj, split_path, out_dir, seed, noise, jitter):
    """Round-trip ground truth through the codecs and write result files."""
    cfg = obj.config
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    frame_ids = _read_split(split_path)
    spec = NoiseSpec(sigma_xy=noise, sigma_lw=noise, sigma_h=noise,
                     sigma_z=noise, sigma_yaw=noise, proposal_jitter=jitter)

    def worker(fid):
        calib, _, labels = _frame_inputs(cfg, fid, need_labels=True)
        gt = [(kitti_io.camera_box_to_lidar(lbl, calib), lbl.category)
              for lbl in labels if lbl.category in cfg.codec.references]
        dets = postproc.oracle_detect(
            gt, spec, seed, frame_id=fid,
            references=cfg.codec.references, weights=cfg.codec.weights,
            height_mode=cfg.codec.height_mode, n_bins=cfg.codec.n_bins)
        kept = postproc.rotated_nms(dets, cfg.nms_iou_threshold)
        kitti_io.write_detections(
            [(d.box, d.category, d.score) for d in kept],
            calib, out / f"{fid}.txt")
        return len(kept)

    results, failures = _run_frames(frame_ids, worker)
    _report_failures(failures)
    total = sum(results.values())
    click.echo(f"wrote {total} detections over {len(results)} frames -> {out}")
    if failures:
        sys.exit(EXIT_DATA)


@main.command("eval")
@click.option("--det-dir", required=True, type=click.Path(exists=True),
              help="Directory of KITTI result files (one per frame).")
@click.option("--split", "split_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Also write ap_tables.txt / ap_tables.csv here.")
@click.pass_obj
def eval_cmd(obj, det_dir, split_path, out_dir):
    """Evaluate detections against dataset labels (both metrics and modes)."""
    cfg = obj.config
    det_dir = Path(det_dir)
    frame_ids = _read_split(split_path)
    gt_frames = []
    det_frames = []
    failures = []
    for fid in frame_ids:
        try:
            calib, _, labels = _frame_inputs(cfg, fid, need_labels=True)
            gt_frames.append(evaluation.ground_truth_frame(
                fid, labels, calib, cfg.eval.criteria))
            det_path = det_dir / f"{fid}.txt"
            if det_path.exists():
                det_frames.append(evaluation.detections_from_labels(
                    fid, kitti_io.read_detections(det_path), calib))
        except Exception as exc:
            failures.append((fid, f"{type(exc).__name__}: {exc}"))
    _report_failures(failures)
    if failures:
        sys.exit(EXIT_DATA)

    results = []
    for metric in evaluation.METRICS:
        for ap_mode in evaluation.AP_MODES:
            eval_cfg = evaluation.EvalConfig(
                iou_thresholds=dict(cfg.eval.iou_thresholds),
                ap_mode=ap_mode, metric=metric,
                criteria=dict(cfg.eval.criteria))
            results.append(evaluation.evaluate(det_frames, gt_frames, eval_cfg))
    text = "\n\n".join(evaluation.format_text_table(r) for r in results)
    click.echo(text)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ap_tables.txt").write_text(text + "\n", encoding="ascii")
        (out / "ap_tables.csv").write_text(
            evaluation.format_csv_rows(results), encoding="ascii")


def _draw_box(draw, box, grid, color) -> bool:
    try:
        pixel = bev.box_to_bev_pixels(box, grid)
    except ValueError:
        return False
    corners = box_corners(pixel)
    pts = [(float(px), float(py)) for px, py in corners]
    draw.line(pts + [pts[0]], fill=color, width=1)
    return True


@main.command()
@click.option("--frame", "frame_id", required=True)
@click.option("--det-file", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.pass_obj
def viz(obj, frame_id, det_file, out_path):
    """Render one frame's BEV image with ground truth and detections."""
    cfg = obj.config
    try:
        calib, cloud, labels = _frame_inputs(cfg, frame_id, need_labels=True)
    except Exception as exc:
        click.echo(f"frame {frame_id}: {type(exc).__name__}: {exc}", err=True)
        sys.exit(EXIT_DATA)
    filtered = bev.filter_cloud(cloud, calib, cfg.grid)
    image = bev.encode(filtered, cfg.grid)
    scaled = np.clip(np.floor(image.data * 255.0 + 0.5), 0.0, 255.0)
    rgb = np.ascontiguousarray(
        np.moveaxis(scaled.astype(np.uint8), 0, -1))
    pil = Image.fromarray(rgb, mode="RGB")
    draw = ImageDraw.Draw(pil)

    skipped = 0
    for label in labels:
        if not all(d > 0 for d in label.dimensions):
            continue
        box = kitti_io.camera_box_to_lidar(label, calib)
        if not _draw_box(draw, box, cfg.grid, _GT_COLOR):
            skipped += 1
    if det_file is not None:
        for det in kitti_io.read_detections(det_file):
            box = kitti_io.camera_box_to_lidar(det, calib)
            color = _DET_COLORS.get(det.category, _DET_FALLBACK)
            if not _draw_box(draw, box, cfg.grid, color):
                skipped += 1
    if skipped:
        click.echo(f"skipped {skipped} box(es) outside the grid", err=True)
    pil.save(out_path, format="PNG")
    click.echo(f"wrote {out_path}")


def _timing_row(name: str, samples) -> str:
    if not samples:
        return f"{name:<24} (no samples)"
    med = statistics.median(samples) * 1e3
    p95 = sorted(samples)[max(0, int(round(0.95 * len(samples))) - 1)] * 1e3
    return (f"{name:<24} median {med:9.3f} ms   p95 {p95:9.3f} ms"
            f"   n={len(samples)}")


@main.command()
@click.option("--frames", "n_frames", type=int, default=5, show_default=True)
@click.option("--points", type=int, default=120_000, show_default=True,
              help="Cloud size for the single-cloud encode timing.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--backend", type=click.Choice(["auto", "compiled", "python", "both"]),
              default="both", show_default=True)
@click.pass_obj
def bench(obj, n_frames, points, seed, backend):
    """Time encode/NMS/eval on synthetic frames, per kernel backend."""
    cfg = obj.config
    if n_frames < 0:
        click.echo("--frames must be >= 0", err=True)
        sys.exit(EXIT_CONFIG)
    if backend == "both":
        names = []
        try:
            get_backend("compiled")
            names.append("compiled")
        except ValueError:
            pass
        names.append("python")
    else:
        names = [active_backend_name() if backend == "auto" else backend]

    click.echo(f"benchmark: {n_frames} frames, single cloud {points} points")
    if n_frames == 0:
        return
    frames = [synthetic.synthetic_frame(i, seed=seed) for i in range(n_frames)]
    clouds = [synthetic.synthetic_cloud(6000, seed=seed + i, grid=cfg.grid,
                                        frame=frames[i])
              for i in range(n_frames)]
    big_cloud = synthetic.synthetic_cloud(points, seed=seed, grid=cfg.grid)
    noise = NoiseSpec(sigma_xy=0.05, sigma_lw=0.05, sigma_h=0.05,
                      sigma_z=0.05, sigma_yaw=0.05)

    for name in names:
        try:
            kernel = get_backend(name)
        except ValueError as exc:
            click.echo(f"backend {name}: {exc}", err=True)
            continue
        del kernel
        os.environ["BEVKIT_BACKEND"] = name
        try:
            encode_times = []
            for cloud in clouds:
                t0 = time.perf_counter()
                bev.encode(cloud, cfg.grid)
                encode_times.append(time.perf_counter() - t0)
            t0 = time.perf_counter()
            bev.encode(big_cloud, cfg.grid)
            big_time = time.perf_counter() - t0

            nms_times = []
            det_sets = []
            for i, frame in enumerate(frames):
                dets = postproc.oracle_detect(
                    [(o.box, o.category) for o in frame.objects],
                    noise, seed, frame_id=frame.frame_id,
                    references=cfg.codec.references,
                    weights=cfg.codec.weights,
                    height_mode=cfg.codec.height_mode,
                    n_bins=cfg.codec.n_bins)
                t0 = time.perf_counter()
                det_sets.append(postproc.rotated_nms(dets, cfg.nms_iou_threshold))
                nms_times.append(time.perf_counter() - t0)

            calib = synthetic.synthetic_calibration()
            gt_frames = [
                evaluation.ground_truth_frame(
                    f.frame_id, synthetic.frame_labels(f, calib), calib,
                    cfg.eval.criteria)
                for f in frames
            ]
            t0 = time.perf_counter()
            evaluation.evaluate(det_sets, gt_frames, evaluation.EvalConfig(
                iou_thresholds=dict(cfg.eval.iou_thresholds)))
            eval_time = time.perf_counter() - t0
        finally:
            os.environ.pop("BEVKIT_BACKEND", None)

        click.echo(f"\nbackend: {name}")
        click.echo(_timing_row("encode (6k pts)", encode_times))
        click.echo(f"{'encode ' + str(points) + ' pts':<24} "
                   f"{big_time * 1e3:9.3f} ms (single run)")
        click.echo(_timing_row("rotated NMS", nms_times))
        click.echo(f"{'evaluate (all frames)':<24} {eval_time * 1e3:9.3f} ms")


@main.command("make-synthetic")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--frames", "n_frames", type=int, default=12, show_default=True)
@click.option("--points", type=int, default=6000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.pass_obj
def make_synthetic(obj, out_dir, n_frames, points, seed):
    """Write a synthetic KITTI-layout dataset (clouds, labels, calib)."""
    frame_ids = synthetic.write_synthetic_dataset(
        out_dir, n_frames=n_frames, points_per_frame=points, seed=seed,
        grid=obj.config.grid)
    click.echo(f"wrote {len(frame_ids)} synthetic frames under {out_dir}")


if __name__ == "__main__":
    main()
