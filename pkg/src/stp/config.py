"""Flat key=value configuration with dotted section keys.

One format for files, CLI overrides, and run manifests: `section.key=value`
lines, `#` comments, blank lines ignored. Every key has a typed default
below; unknown keys are rejected by name (and file, when read from one).
"""

from __future__ import annotations

import hashlib
from pathlib import Path

from .errors import ConfigError
from .features.synthetic import MAX_CLASSES, GeneratorSpec

DEFAULTS: dict[str, object] = {
    # synthetic data
    "data.num_clips": 200,
    "data.frames": 64,
    "data.num_classes": 3,
    "data.channels": 64,
    "data.min_len": 8,
    "data.max_len": 20,
    "data.min_actions": 1,
    "data.max_actions": 3,
    "data.gap": 2,
    "data.noise": 0.1,
    "data.signal_gain": 2.0,
    "data.pose_jitter": 0.004,
    "data.visibility_dropout": 0.05,
    # distance stream
    "features.gcn_layers": 2,
    "features.gcn_hidden": 64,
    # stream interaction; k = -1 means channels/4
    "fusion.k": -1,
    # encoder
    "encoder.layers": 6,
    "encoder.heads": 4,
    "encoder.dim": 256,
    "encoder.ffn_mult": 4,
    "encoder.segment_len": 32,
    # decoder
    "decoder.num_queries": 16,
    "decoder.blocks": 2,
    "decoder.ffn_mult": 4,
    "decoder.mask_rule": "staircase",
    "decoder.scale_logits": True,
    # component switches (ablations)
    "model.use_temporal": True,
    "model.use_distance": True,
    "model.use_fusion": True,
    "model.use_causal_mask": True,
    # optimization
    "train.lr": 1e-3,
    "train.beta1": 0.9,
    "train.beta2": 0.999,
    "train.eps": 1e-8,
    "train.weight_decay": 0.01,
    "train.power": 0.9,
    "train.schedule": "cosine",
    "train.steps": 2000,
    "train.batch_size": 8,
    "train.reduction": "mean",
    "train.dtype": "f64",
    "train.shuffle": True,
    "train.l_cls": 1.0,
    "train.l_reg": 1.5,
    "train.gamma": 2.0,
    "train.alpha": 0.25,
    # inference / metrics
    "eval.nms_sigma": 0.5,
    "eval.nms_threshold": 0.2,
    "eval.allow_reuse": False,
    # micro-benchmark
    "bench.runs": 100,
}


def _parse_value(key: str, raw: str, where: str) -> object:
    default = DEFAULTS[key]
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(
            f"bad value {raw!r} for key {key!r} in {where} "
            f"(expected {type(default).__name__})"
        ) from None


def parse_line(line: str, where: str, cfg: dict) -> None:
    stripped = line.split("#", 1)[0].strip()
    if not stripped:
        return
    if "=" not in stripped:
        raise ConfigError(f"malformed line {line!r} in {where}: expected key=value")
    key, raw = stripped.split("=", 1)
    key = key.strip()
    if key not in DEFAULTS:
        raise ConfigError(f"unknown config key {key!r} in {where}")
    cfg[key] = _parse_value(key, raw, where)


def load_config(path=None, overrides: list[str] | None = None) -> dict:
    """Defaults, overlaid by `path` (if given), overlaid by override
    strings; validated as a whole."""
    cfg = dict(DEFAULTS)
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        for line in path.read_text().splitlines():
            parse_line(line, str(path), cfg)
    for ov in overrides or []:
        parse_line(ov, "command line", cfg)
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    def bad(msg: str):
        raise ConfigError(msg)

    if cfg["data.channels"] % 2 or cfg["data.channels"] < 2:
        bad("data.channels must be even and positive")
    if not 1 <= cfg["data.num_classes"] <= MAX_CLASSES:
        bad(f"data.num_classes must be in [1, {MAX_CLASSES}]")
    if cfg["encoder.dim"] % cfg["encoder.heads"]:
        bad("encoder.dim must be divisible by encoder.heads")
    if cfg["encoder.segment_len"] < 1:
        bad("encoder.segment_len must be positive")
    k = cfg["fusion.k"]
    if k != -1 and not 0 <= k <= cfg["data.channels"]:
        bad(f"fusion.k must be -1 (auto) or in [0, {cfg['data.channels']}]")
    if cfg["decoder.mask_rule"] not in ("staircase", "paper_literal"):
        bad("decoder.mask_rule must be staircase or paper_literal")
    if cfg["train.schedule"] not in ("cosine", "poly"):
        bad("train.schedule must be cosine or poly")
    if cfg["train.reduction"] not in ("mean", "sum"):
        bad("train.reduction must be mean or sum")
    if cfg["train.dtype"] not in ("f32", "f64"):
        bad("train.dtype must be f32 or f64")
    for key in ("data.num_clips", "data.frames", "features.gcn_layers", "encoder.layers",
                "encoder.heads", "encoder.dim", "encoder.ffn_mult", "decoder.num_queries",
                "decoder.blocks", "decoder.ffn_mult", "train.steps", "train.batch_size",
                "bench.runs", "features.gcn_hidden"):
        if cfg[key] < 1:
            bad(f"{key} must be >= 1")


def fusion_width(cfg: dict) -> int:
    k = cfg["fusion.k"]
    return cfg["data.channels"] // 4 if k == -1 else k


def generator_spec(cfg: dict) -> GeneratorSpec:
    return GeneratorSpec(
        frames=cfg["data.frames"],
        num_classes=cfg["data.num_classes"],
        channels=cfg["data.channels"],
        min_len=cfg["data.min_len"],
        max_len=cfg["data.max_len"],
        min_actions=cfg["data.min_actions"],
        max_actions=cfg["data.max_actions"],
        gap=cfg["data.gap"],
        noise=cfg["data.noise"],
        signal_gain=cfg["data.signal_gain"],
        pose_jitter=cfg["data.pose_jitter"],
        visibility_dropout=cfg["data.visibility_dropout"],
    )


def dumps_config(cfg: dict) -> str:
    return "".join(f"{k}={cfg[k]}\n" for k in sorted(cfg))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(dumps_config(cfg).encode("utf-8")).hexdigest()[:16]
