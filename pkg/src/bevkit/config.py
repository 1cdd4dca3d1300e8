"""Pipeline configuration: one YAML file holding every tunable constant.

Running without a config file reproduces all defaults (grid geometry,
anchor shapes, codec references, NMS and evaluation thresholds). Parsing is
strict: unknown keys are rejected so typos cannot silently fall back to
defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .anchors import AnchorConfig
from .bev import GridConfig
from .codec import (DEFAULT_REFERENCE_HEIGHTS, HEIGHT_MODES, ReferenceBox,
                    RegressionWeights)
from .evaluation import (AP_MODES, DEFAULT_DIFFICULTY_CRITERIA,
                         DEFAULT_IOU_THRESHOLDS, METRICS, DifficultyCriteria,
                         EvalConfig)


class ConfigError(ValueError):
    """The config file is malformed or violates an invariant."""


@dataclass(frozen=True)
class CodecSettings:
    """Target-codec knobs plus the per-category reference table."""

    height_mode: str = "ratio"
    n_bins: int = 12
    weights: RegressionWeights = field(default_factory=RegressionWeights)
    references: dict = None

    def __post_init__(self):
        if self.height_mode not in HEIGHT_MODES:
            raise ConfigError(
                f"codec.height_mode must be one of {HEIGHT_MODES}")
        if self.n_bins < 4 or self.n_bins % 4 != 0:
            raise ConfigError("codec.n_bins must be >= 4 and divisible by 4")
        if self.references is None:
            raise ConfigError("codec.references must be provided")


@dataclass(frozen=True)
class DataPaths:
    """Dataset layout: KITTI-style subdirectories under one root."""

    root: str = "."
    velodyne_dir: str = "velodyne"
    label_dir: str = "label_2"
    calib_dir: str = "calib"
    image_size: tuple[int, int] = (1242, 375)

    def velodyne_path(self, frame_id: str) -> Path:
        return Path(self.root) / self.velodyne_dir / f"{frame_id}.bin"

    def label_path(self, frame_id: str) -> Path:
        return Path(self.root) / self.label_dir / f"{frame_id}.txt"

    def calib_path(self, frame_id: str) -> Path:
        return Path(self.root) / self.calib_dir / f"{frame_id}.txt"


@dataclass(frozen=True, eq=False)
class PipelineConfig:
    grid: GridConfig
    anchors: AnchorConfig
    codec: CodecSettings
    nms_iou_threshold: float
    eval: EvalConfig
    data: DataPaths

    def __post_init__(self):
        if not 0.0 <= self.nms_iou_threshold <= 1.0:
            raise ConfigError("nms.iou_threshold must be in [0, 1]")


def _default_references(ground_z: float) -> dict:
    return {
        name: ReferenceBox(name, h_ref, ground_z + 0.5 * h_ref)
        for name, h_ref in DEFAULT_REFERENCE_HEIGHTS.items()
    }


def default_config() -> PipelineConfig:
    grid = GridConfig()
    return PipelineConfig(
        grid=grid,
        anchors=AnchorConfig(),
        codec=CodecSettings(references=_default_references(grid.ground_z)),
        nms_iou_threshold=0.3,
        eval=EvalConfig(),
        data=DataPaths(),
    )


class _Section:
    """Mapping wrapper that tracks consumed keys and rejects leftovers."""

    def __init__(self, name: str, mapping):
        if mapping is None:
            mapping = {}
        if not isinstance(mapping, dict):
            raise ConfigError(f"section {name!r} must be a mapping")
        self.name = name
        self.mapping = dict(mapping)

    def take(self, key, default):
        return self.mapping.pop(key, default)

    def sub(self, key) -> "_Section":
        return _Section(f"{self.name}.{key}", self.mapping.pop(key, {}))

    def finish(self):
        if self.mapping:
            raise ConfigError(
                f"unknown keys in section {self.name!r}: "
                f"{sorted(self.mapping)}")


def _parse_ratio(value) -> tuple[float, float]:
    if isinstance(value, str):
        parts = value.split(":")
        if len(parts) != 2:
            raise ConfigError(f"bad aspect ratio {value!r}; use 'a:b'")
        return float(parts[0]), float(parts[1])
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return float(value[0]), float(value[1])
    raise ConfigError(f"bad aspect ratio {value!r}")


def config_from_dict(raw) -> PipelineConfig:
    """Build a config from a parsed YAML tree (missing keys -> defaults)."""
    top = _Section("<root>", raw)
    try:
        g = top.sub("grid")
        grid = GridConfig(
            cell_size=float(g.take("cell_size", 0.05)),
            forward_range=float(g.take("forward_range", 35.0)),
            lateral_range=float(g.take("lateral_range", 35.0)),
            max_height_above_ground=float(
                g.take("max_height_above_ground", 3.0)),
            ground_z=float(g.take("ground_z", -1.73)),
            density_saturation=int(g.take("density_saturation", 64)),
        )
        g.finish()

        a = top.sub("anchors")
        ratios = a.take("aspect_ratios", ["1:1", "1:2", "2:1"])
        anchors = AnchorConfig(
            scales=tuple(float(s) for s in a.take("scales", [16, 48, 80])),
            aspect_ratios=tuple(_parse_ratio(r) for r in ratios),
            stride=float(a.take("stride", 8.0)),
            fg_iou=float(a.take("fg_iou", 0.7)),
            bg_iou=float(a.take("bg_iou", 0.3)),
        )
        a.finish()

        c = top.sub("codec")
        w = c.sub("weights")
        weights = RegressionWeights(
            w_z=float(w.take("w_z", 1.0)),
            w_h=float(w.take("w_h", 1.0)),
            w_xy=float(w.take("w_xy", 1.0)),
            w_lw=float(w.take("w_lw", 1.0)),
        )
        w.finish()
        refs_raw = c.take("references", None)
        if refs_raw is None:
            references = _default_references(grid.ground_z)
        else:
            if not isinstance(refs_raw, dict):
                raise ConfigError("codec.references must be a mapping")
            references = {}
            for name, entry in refs_raw.items():
                section = _Section(f"codec.references.{name}", entry)
                h_ref = section.take("h_ref", None)
                if h_ref is None:
                    raise ConfigError(
                        f"codec.references.{name}: h_ref is required")
                h_ref = float(h_ref)
                z_ref = section.take("z_ref", None)
                z_ref = (grid.ground_z + 0.5 * h_ref if z_ref is None
                         else float(z_ref))
                section.finish()
                references[str(name)] = ReferenceBox(str(name), h_ref, z_ref)
        codec_settings = CodecSettings(
            height_mode=str(c.take("height_mode", "ratio")),
            n_bins=int(c.take("n_bins", 12)),
            weights=weights,
            references=references,
        )
        c.finish()

        n = top.sub("nms")
        nms_iou = float(n.take("iou_threshold", 0.3))
        n.finish()

        e = top.sub("eval")
        thresholds_raw = e.take("iou_thresholds", None)
        if thresholds_raw is None:
            thresholds = dict(DEFAULT_IOU_THRESHOLDS)
        else:
            if not isinstance(thresholds_raw, dict):
                raise ConfigError("eval.iou_thresholds must be a mapping")
            thresholds = {str(k): float(v) for k, v in thresholds_raw.items()}
        criteria_raw = e.take("criteria", None)
        if criteria_raw is None:
            criteria = dict(DEFAULT_DIFFICULTY_CRITERIA)
        else:
            criteria = {}
            for name, entry in dict(criteria_raw).items():
                section = _Section(f"eval.criteria.{name}", entry)
                criteria[str(name)] = DifficultyCriteria(
                    min_bbox_height=float(section.take("min_bbox_height", 25)),
                    max_occlusion=int(section.take("max_occlusion", 2)),
                    max_truncation=float(section.take("max_truncation", 0.5)),
                )
                section.finish()
        eval_config = EvalConfig(
            iou_thresholds=thresholds,
            ap_mode=str(e.take("ap_mode", "40-point")),
            metric=str(e.take("metric", "BEV")),
            criteria=criteria,
        )
        e.finish()

        d = top.sub("data")
        image_size = d.take("image_size", [1242, 375])
        if (not isinstance(image_size, (list, tuple))
                or len(image_size) != 2):
            raise ConfigError("data.image_size must be [width, height]")
        data = DataPaths(
            root=str(d.take("root", ".")),
            velodyne_dir=str(d.take("velodyne_dir", "velodyne")),
            label_dir=str(d.take("label_dir", "label_2")),
            calib_dir=str(d.take("calib_dir", "calib")),
            image_size=(int(image_size[0]), int(image_size[1])),
        )
        d.finish()
        top.finish()

        return PipelineConfig(
            grid=grid, anchors=anchors, codec=codec_settings,
            nms_iou_threshold=nms_iou, eval=eval_config, data=data)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path=None) -> PipelineConfig:
    """Load a YAML config; ``None`` returns the all-defaults config."""
    if path is None:
        return default_config()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    return config_from_dict(raw if raw is not None else {})


def config_to_dict(cfg: PipelineConfig) -> dict:
    """Plain-dict form of a config; parsing it back is an exact round-trip."""
    return {
        "grid": {
            "cell_size": cfg.grid.cell_size,
            "forward_range": cfg.grid.forward_range,
            "lateral_range": cfg.grid.lateral_range,
            "max_height_above_ground": cfg.grid.max_height_above_ground,
            "ground_z": cfg.grid.ground_z,
            "density_saturation": cfg.grid.density_saturation,
        },
        "anchors": {
            "scales": list(cfg.anchors.scales),
            "aspect_ratios": [list(r) for r in cfg.anchors.aspect_ratios],
            "stride": cfg.anchors.stride,
            "fg_iou": cfg.anchors.fg_iou,
            "bg_iou": cfg.anchors.bg_iou,
        },
        "codec": {
            "height_mode": cfg.codec.height_mode,
            "n_bins": cfg.codec.n_bins,
            "weights": {
                "w_z": cfg.codec.weights.w_z,
                "w_h": cfg.codec.weights.w_h,
                "w_xy": cfg.codec.weights.w_xy,
                "w_lw": cfg.codec.weights.w_lw,
            },
            "references": {
                name: {"h_ref": ref.h_ref, "z_ref": ref.z_ref}
                for name, ref in sorted(cfg.codec.references.items())
            },
        },
        "nms": {"iou_threshold": cfg.nms_iou_threshold},
        "eval": {
            "iou_thresholds": dict(sorted(cfg.eval.iou_thresholds.items())),
            "ap_mode": cfg.eval.ap_mode,
            "metric": cfg.eval.metric,
            "criteria": {
                name: {
                    "min_bbox_height": crit.min_bbox_height,
                    "max_occlusion": crit.max_occlusion,
                    "max_truncation": crit.max_truncation,
                }
                for name, crit in sorted(cfg.eval.criteria.items())
            },
        },
        "data": {
            "root": cfg.data.root,
            "velodyne_dir": cfg.data.velodyne_dir,
            "label_dir": cfg.data.label_dir,
            "calib_dir": cfg.data.calib_dir,
            "image_size": list(cfg.data.image_size),
        },
    }


def save_config(cfg: PipelineConfig, path) -> None:
    Path(path).write_text(
        yaml.safe_dump(config_to_dict(cfg), sort_keys=True),
        encoding="utf-8")
