"""Command-line surface: gen / train / eval / infer / bench / gradcheck.

Every command takes --seed plus optional key=value config overrides,
writes a run manifest next to its outputs, and exits non-zero on any
failure without leaving a final metrics file behind. STP_LOG controls
verbosity (quiet|info|debug).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import subprocess
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import _backend
from .config import config_hash, dumps_config, generator_spec, load_config
from .errors import ConfigError, InputError, STPError
from .evaluation import accuracy, ao_score, classification_pairs, per_class_table
from .features.synthetic import Clip, generate_dataset, load_clip, load_dataset
from .model import build_params, count_params, infer
from .numerics import set_default_dtype
from .rng import substream
from .segments import ActionSegment
from .training import dataset_metrics, load_checkpoint_into, train
from .training.loop import clip_loss

log = logging.getLogger("stp")

ABLATIONS = {
    "no_distance": "model.use_distance",
    "no_temporal": "model.use_temporal",
    "no_fusion": "model.use_fusion",
    "no_causal_mask": "model.use_causal_mask",
}

# smallest full model: every module present, every dim tiny
MINIMAL_OVERRIDES = [
    "data.frames=8",
    "data.channels=16",
    "data.min_len=2",
    "data.max_len=4",
    "data.max_actions=2",
    "features.gcn_hidden=8",
    "encoder.dim=16",
    "encoder.layers=1",
    "encoder.heads=2",
    "encoder.ffn_mult=2",
    # one segment: recurrence detaches its cache, so a multi-segment run
    # would make finite differences see gradient paths the tape truncates
    "encoder.segment_len=8",
    "decoder.blocks=1",
    "decoder.num_queries=4",
    "decoder.ffn_mult=2",
]


def _setup_logging() -> None:
    level = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("STP_LOG", "info").lower(), logging.INFO
    )
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


def _git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5,
        )
        return out.stdout.strip() or "unknown"
    except OSError:
        return "unknown"


def _write_json(path: Path, payload) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


def write_manifest(out_dir: Path, command: str, cfg: dict, seed: int,
                   started: str, outputs: list[str]) -> None:
    _write_json(out_dir / "manifest.json", {
        "command": command,
        "config": {k: cfg[k] for k in sorted(cfg)},
        "config_hash": config_hash(cfg),
        "seed": seed,
        "backend": _backend.BACKEND_NAME,
        "git_describe": _git_describe(),
        "started_utc": started,
        "finished_utc": datetime.now(timezone.utc).isoformat(),
        "outputs": sorted(outputs),
    })


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _load_clips(data_dir) -> tuple[dict, list[Clip]]:
    spec, _, clip_dirs = load_dataset(data_dir)
    clips = [load_clip(d, spec.num_classes) for d in clip_dirs]
    meta = {"num_classes": spec.num_classes, "frames": spec.frames,
            "channels": spec.channels}
    return meta, clips


def _train_config(args) -> dict:
    cfg = load_config(args.config, args.override)
    if args.ablate:
        if args.ablate not in ABLATIONS:
            raise ConfigError(
                f"unknown ablation {args.ablate!r}; choose from {sorted(ABLATIONS)}"
            )
        cfg[ABLATIONS[args.ablate]] = False
    return cfg


def _check_data_matches(cfg: dict, meta: dict) -> None:
    for cfg_key, meta_key in (("data.num_classes", "num_classes"),
                              ("data.channels", "channels")):
        if cfg[cfg_key] != meta[meta_key]:
            raise ConfigError(
                f"{cfg_key}={cfg[cfg_key]} but the dataset was generated "
                f"with {meta_key}={meta[meta_key]}"
            )


# -- commands -----------------------------------------------------------------


def cmd_gen(args) -> int:
    cfg = load_config(args.config, args.override)
    out = Path(args.out)
    if (out / "dataset.json").exists() and not args.force:
        raise InputError(f"{out} already holds a dataset; pass --force to overwrite")
    started = _now()
    t0 = time.perf_counter()
    dirs = generate_dataset(out, generator_spec(cfg), args.seed, cfg["data.num_clips"])
    log.info("generated %d clips in %.2fs -> %s", len(dirs), time.perf_counter() - t0, out)
    write_manifest(out, "gen", cfg, args.seed, started, [d.name for d in dirs])
    return 0


def cmd_train(args) -> int:
    cfg = _train_config(args)
    set_default_dtype(np.float32 if cfg["train.dtype"] == "f32" else np.float64)
    meta, clips = _load_clips(args.data)
    _check_data_matches(cfg, meta)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = _now()
    if args.report_params:
        print(f"learnable parameters: {count_params(build_params(cfg, args.seed))}")
    result = train(
        clips, cfg, args.seed, out,
        resume=args.resume, label=args.ablate or "", log=log.info,
    )
    (out / "config.txt").write_text(dumps_config(cfg))
    _write_json(out / "final_metrics.json", result.final_metrics)
    write_manifest(out, "train", cfg, args.seed, started, [
        result.checkpoint_path.name, result.log_path.name,
        "config.txt", "final_metrics.json",
    ])
    log.info("final train metrics: %s", result.final_metrics)
    print(json.dumps(result.final_metrics, sort_keys=True))
    return 0


def _config_near_checkpoint(args) -> dict:
    if args.config:
        return load_config(args.config, args.override)
    sibling = Path(args.checkpoint).parent / "config.txt"
    if not sibling.exists():
        raise ConfigError(
            f"no --config given and {sibling} not found next to the checkpoint"
        )
    return load_config(sibling, args.override)


def _restore(args, cfg: dict):
    store = build_params(cfg, args.seed)
    load_checkpoint_into(args.checkpoint, store, None)
    return store


def _predict_clips(store, clips, cfg, jobs: int):
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(lambda c: infer(store, c, cfg), clips))
    return [infer(store, c, cfg) for c in clips]


def cmd_infer(args) -> int:
    cfg = _config_near_checkpoint(args)
    set_default_dtype(np.float32 if cfg["train.dtype"] == "f32" else np.float64)
    meta, clips = _load_clips(args.data)
    _check_data_matches(cfg, meta)
    store = _restore(args, cfg)
    rows = []
    for clip, preds in zip(clips, _predict_clips(store, clips, cfg, args.jobs)):
        for p in preds:
            rows.append({"video_id": clip.video_id, "start": p.start, "end": p.end,
                         "class": p.label, "score": p.score})
    _write_json(Path(args.out), rows)
    log.info("wrote %d predictions for %d clips -> %s", len(rows), len(clips), args.out)
    return 0


def _load_predictions(path) -> dict[str, list[ActionSegment]]:
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, list):
        raise InputError(f"{path} must hold a JSON list of predictions")
    by_video: dict[str, list[ActionSegment]] = {}
    for row in raw:
        seg = ActionSegment(float(row["start"]), float(row["end"]),
                            int(row["class"]), float(row.get("score", 1.0)))
        by_video.setdefault(str(row["video_id"]), []).append(seg)
    return by_video


def cmd_eval(args) -> int:
    if bool(args.checkpoint) == bool(args.predictions):
        raise InputError("pass exactly one of --checkpoint or --predictions")
    started = _now()
    if args.checkpoint:
        cfg = _config_near_checkpoint(args)
        set_default_dtype(np.float32 if cfg["train.dtype"] == "f32" else np.float64)
        meta, clips = _load_clips(args.data)
        _check_data_matches(cfg, meta)
        store = _restore(args, cfg)
        preds_per_clip = _predict_clips(store, clips, cfg, args.jobs)
    else:
        cfg = load_config(args.config, args.override)
        meta, clips = _load_clips(args.data)
        by_video = _load_predictions(args.predictions)
        preds_per_clip = [by_video.get(c.video_id, []) for c in clips]

    scores, pairs = [], []
    for clip, preds in zip(clips, preds_per_clip):
        scores.append(ao_score(preds, clip.segments, cfg["eval.allow_reuse"]))
        pairs.extend(classification_pairs(preds, clip.segments))
    top1, mean1 = accuracy([p for p, _ in pairs], [t for _, t in pairs]) if pairs else (0.0, 0.0)
    metrics = {
        "ao_score": float(np.mean(scores)) if scores else 0.0,
        "top1": top1,
        "mean1": mean1,
        "num_clips": len(clips),
        "per_class": per_class_table(pairs, meta["num_classes"]),
    }

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "metrics.json", metrics)
    with open(out / "metrics.csv", "w") as fh:
        fh.write("metric,value\n")
        for key in ("ao_score", "top1", "mean1", "num_clips"):
            fh.write(f"{key},{metrics[key]}\n")
        for row in metrics["per_class"]:
            rec = row["recall"]
            fh.write(f"class_{row['class']}_recall,{'' if rec is None else rec}\n")
    write_manifest(out, "eval", cfg, args.seed, started, ["metrics.json", "metrics.csv"])
    print(json.dumps({k: metrics[k] for k in ("ao_score", "top1", "mean1")}, sort_keys=True))
    return 0


def cmd_bench(args) -> int:
    from .bench import run_bench  # heavy-ish import kept off the common path

    cfg = load_config(args.config, args.override)
    report = run_bench(cfg, args.seed)
    payload = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        tmp = out.with_suffix(out.suffix + ".tmp")
        tmp.write_text(payload + "\n")
        os.replace(tmp, out)
    print(payload)
    return 0


def cmd_gradcheck(args) -> int:
    from .numerics import grad_check

    cfg = load_config(args.config, MINIMAL_OVERRIDES + (args.override or []))
    set_default_dtype(np.float64)
    clip = _gradcheck_clip(cfg, args.seed)
    store = build_params(cfg, args.seed)
    t0 = time.perf_counter()
    err = grad_check(lambda: clip_loss(store, clip, cfg)[0], store)
    dt = time.perf_counter() - t0
    print(f"max relative error {err:.3e} over {count_params(store)} parameters "
          f"in {dt:.1f}s (tolerance 1e-4)")
    return 0


def _gradcheck_clip(cfg: dict, seed: int) -> Clip:
    from .features.synthetic import generate_clip

    return generate_clip(generator_spec(cfg), seed, 0)


def main(argv=None) -> int:
    _setup_logging()
    parser = argparse.ArgumentParser(
        prog="stp",
        description="synthetic-scale spatial-temporal action localization toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--jobs", type=int, default=1)
        if needs_out:
            p.add_argument("--out", required=True)
        p.add_argument("override", nargs="*", metavar="key=value",
                       help="config overrides")

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    common(p)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train on a generated dataset")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.add_argument("--ablate", default=None,
                   help="|".join(sorted(ABLATIONS)))
    p.add_argument("--report-params", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="write predictions JSON for a dataset")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="metrics for a checkpoint or predictions file")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--predictions", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="forward-pass micro-benchmark")
    common(p, needs_out=False)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gradcheck", help="finite-difference check of the minimal model")
    common(p, needs_out=False)
    p.set_defaults(func=cmd_gradcheck)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except STPError as e:
        log.error("%s", e)
        return 1


if __name__ == "__main__":
    sys.exit(main())
