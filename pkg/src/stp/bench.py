"""Forward-pass micro-benchmark.

Numbers cover the synthetic-scale model only — no video/pose backbones
run here, so they are NOT comparable to published full-pipeline
latency/parameter figures.
"""

from __future__ import annotations

import time

import numpy as np

from . import _backend
from .config import config_hash, generator_spec
from .decoder import CausalMask, build_mask, causal_cross_attention
from .features.synthetic import generate_clip
from .model import build_params, count_params, forward
from .numerics import Tensor
from .rng import substream


def _stats(samples_s: list[float]) -> dict:
    ms = np.sort(np.asarray(samples_s)) * 1e3
    return {
        "mean_ms": float(ms.mean()),
        "p50_ms": float(np.percentile(ms, 50)),
        "p99_ms": float(np.percentile(ms, 99)),
    }


def _time(fn, runs: int, warmup: int = 3) -> dict:
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(runs):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return _stats(samples)


def run_bench(cfg: dict, seed: int) -> dict:
    clip = generate_clip(generator_spec(cfg), seed, 0)
    store = build_params(cfg, seed)
    runs = cfg["bench.runs"]

    report = {
        "backend": _backend.BACKEND_NAME,
        "config_hash": config_hash(cfg),
        "parameters": count_params(store),
        "frames": clip.frames,
        "runs": runs,
        "forward": _time(lambda: forward(store, clip, cfg), runs),
        "comparable_to_published_numbers": False,
        "note": "synthetic-scale model without video/pose backbones; "
                "not comparable to full-pipeline latency or parameter counts",
    }

    # staircase masking skips attention columns; an all-ones mask is the
    # dense baseline on identical shapes
    n, n_q, d = clip.frames, cfg["decoder.num_queries"], cfg["encoder.dim"]
    rng = substream(seed, "bench")
    frames = Tensor(rng.normal(size=(n, d)))
    queries = Tensor(rng.normal(size=(n_q, d)))
    staircase = build_mask(n, n_q)
    dense = CausalMask(np.full(n_q, n, dtype=np.int64), n)
    attn = lambda mask: causal_cross_attention(
        store, "decoder/0/cross", queries, frames, mask, cfg["decoder.scale_logits"]
    )
    report["masked_attention"] = {
        "staircase": _time(lambda: attn(staircase), runs),
        "dense_baseline": _time(lambda: attn(dense), runs),
    }

    # every importable kernel backend head-to-head on this config's shapes
    logits = np.ascontiguousarray(rng.normal(size=(n, n)))
    pts = np.ascontiguousarray(clip.points)
    vis = np.ascontiguousarray(clip.visible().astype(np.uint8))
    report["kernels"] = {
        name: {
            "softmax_rows_fwd": _time(lambda: mod.softmax_rows_fwd(logits), runs),
            "pairwise_distances": _time(lambda: mod.pairwise_distances(pts, vis), runs),
        }
        for name, mod in _backend.backends()
    }
    return report
