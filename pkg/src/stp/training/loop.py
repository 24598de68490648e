"""Optimization loop: batched query-matching loss, AdamW, per-epoch
checkpointing and a CSV metrics log.

Determinism contract: given (dataset, config, seed), every run produces
the same parameter trajectory; clip order is drawn from the "shuffle"
substream per epoch, so data generation and initialization cannot
perturb it.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import InputError, NumericsError
from ..evaluation import ao_score, classification_pairs, accuracy
from ..features.synthetic import Clip
from ..model import build_params, forward, infer
from ..numerics import ParamStore, mul, softmax_rows, tensor_io
from ..rng import substream
from .losses import LossConfig, total_loss
from .matching import match
from .optim import AdamW, OptConfig, lr_at

CSV_COLUMNS = ("epoch", "loss_total", "loss_cls", "loss_reg", "lr", "train_ao_score")


@dataclass
class TrainResult:
    store: ParamStore
    steps_done: int
    rows: list[dict] = field(default_factory=list)
    final_metrics: dict = field(default_factory=dict)
    checkpoint_path: Path | None = None
    log_path: Path | None = None


def _loss_config(cfg: dict) -> LossConfig:
    return LossConfig(
        l_cls=cfg["train.l_cls"], l_reg=cfg["train.l_reg"],
        gamma=cfg["train.gamma"], alpha=cfg["train.alpha"],
    )


def _opt_config(cfg: dict) -> OptConfig:
    return OptConfig(
        lr=cfg["train.lr"], beta1=cfg["train.beta1"], beta2=cfg["train.beta2"],
        eps=cfg["train.eps"], weight_decay=cfg["train.weight_decay"],
        power=cfg["train.power"], schedule=cfg["train.schedule"],
    )


def clip_loss(store: ParamStore, clip: Clip, cfg: dict) -> tuple:
    """(loss tensor, cls part, reg part) for one clip."""
    boxes, logits = forward(store, clip, cfg)
    probs = softmax_rows(logits).data
    result = match(
        boxes.data, probs, clip.segments, clip.frames,
        l_cls=cfg["train.l_cls"], l_reg=cfg["train.l_reg"],
    )
    return total_loss(boxes, logits, clip.segments, result, clip.frames, _loss_config(cfg))


def dataset_metrics(store: ParamStore, clips: list[Clip], cfg: dict) -> dict:
    """AO-Score / Top-1 / Mean-1 of the current parameters over `clips`."""
    scores = []
    pairs = []
    for clip in clips:
        preds = infer(store, clip, cfg)
        scores.append(ao_score(preds, clip.segments, cfg["eval.allow_reuse"]))
        pairs.extend(classification_pairs(preds, clip.segments))
    out = {"ao_score": float(np.mean(scores))}
    if pairs:
        top1, mean1 = accuracy([p for p, _ in pairs], [t for _, t in pairs])
        out["top1"], out["mean1"] = top1, mean1
    else:
        out["top1"], out["mean1"] = 0.0, 0.0
    return out


def save_checkpoint(path: Path, store: ParamStore, opt: AdamW) -> None:
    tensors = {k: t.data for k, t in store.items()}
    tensors.update(opt.state_tensors())
    tmp = path.with_suffix(".tmp")
    tensor_io.save_checkpoint(tmp, tensors)
    os.replace(tmp, path)


def load_checkpoint_into(path, store: ParamStore, opt: AdamW | None) -> int:
    """Restore parameters (and optimizer state if `opt` given); returns
    the saved step count."""
    tensors = tensor_io.load_checkpoint(path)
    params = {k: v for k, v in tensors.items() if not k.startswith("optim/")}
    for k, arr in params.items():
        t = store.tensor(k)
        t.data = np.ascontiguousarray(arr.astype(t.data.dtype, copy=False))
    step = int(tensors.get("optim/step", np.zeros(1))[0])
    if opt is not None and "optim/step" in tensors:
        opt.load_state(tensors)
    return step


def train(
    clips: list[Clip],
    cfg: dict,
    seed: int,
    out_dir,
    resume: str | None = None,
    label: str = "",
    log=lambda msg: None,
) -> TrainResult:
    if not clips:
        raise InputError("training needs a non-empty dataset")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / "checkpoint.stpc"
    log_name = f"train_log_{label}.csv" if label else "train_log.csv"
    log_path = out_dir / log_name

    store = build_params(cfg, seed)
    opt = AdamW(store, _opt_config(cfg))
    start_step = 0
    if resume is not None:
        start_step = load_checkpoint_into(resume, store, opt)
        log(f"resumed from {resume} at step {start_step}")

    t_max = cfg["train.steps"]
    batch_size = min(cfg["train.batch_size"], len(clips))
    mean_reduce = cfg["train.reduction"] == "mean"
    opt_cfg = _opt_config(cfg)

    rows: list[dict] = []
    mode = "a" if (resume is not None and log_path.exists()) else "w"
    with open(log_path, mode, newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        if mode == "w":
            writer.writeheader()

        step = start_step
        epoch = 0 if start_step == 0 else start_step * batch_size // max(len(clips), 1)
        while step < t_max:
            order = substream(seed, "shuffle", epoch).permutation(len(clips))
            epoch_losses, epoch_cls, epoch_reg = [], [], []
            last_lr = lr_at(step, t_max, opt_cfg)
            for lo in range(0, len(order), batch_size):
                if step >= t_max:
                    break
                batch = [clips[i] for i in order[lo: lo + batch_size]]
                store.zero_grads()
                b_tot = b_cls = b_reg = 0.0
                try:
                    for clip in batch:
                        loss, cls_part, reg_part = clip_loss(store, clip, cfg)
                        scale = (1.0 / len(batch)) if mean_reduce else 1.0
                        mul(loss, scale).backward()
                        b_tot += scale * loss.item()
                        b_cls += scale * cls_part
                        b_reg += scale * reg_part
                    if not math.isfinite(b_tot):
                        raise NumericsError(f"loss diverged to {b_tot}")
                except NumericsError as e:
                    raise NumericsError(
                        f"training aborted at step {step}: {e}; "
                        f"last good checkpoint: {ckpt_path}"
                    ) from e
                last_lr = lr_at(step, t_max, opt_cfg)
                opt.step(last_lr)
                step += 1
                epoch_losses.append(b_tot)
                epoch_cls.append(b_cls)
                epoch_reg.append(b_reg)

            metrics = dataset_metrics(store, clips, cfg)
            row = {
                "epoch": epoch,
                "loss_total": float(np.mean(epoch_losses)) if epoch_losses else float("nan"),
                "loss_cls": float(np.mean(epoch_cls)) if epoch_cls else float("nan"),
                "loss_reg": float(np.mean(epoch_reg)) if epoch_reg else float("nan"),
                "lr": last_lr,
                "train_ao_score": metrics["ao_score"],
            }
            rows.append(row)
            writer.writerow(row)
            fh.flush()
            save_checkpoint(ckpt_path, store, opt)
            log(
                f"epoch {epoch} step {step}/{t_max} "
                f"loss {row['loss_total']:.4f} ao {row['train_ao_score']:.4f}"
            )
            epoch += 1

    final = dataset_metrics(store, clips, cfg)
    return TrainResult(
        store=store, steps_done=step, rows=rows,
        final_metrics=final, checkpoint_path=ckpt_path, log_path=log_path,
    )
