"""Full pipeline: streams -> interaction -> recurrent encoder -> masked
query decoder -> heads.

Parameter initialization draws every array from its own named
substream, so configurations that share a parameter (e.g. ablations
that drop a stream) initialize the shared part identically for the
same seed.
"""

from __future__ import annotations

import numpy as np

from . import fusion as fusion_mod
from .config import fusion_width
from .decoder import CausalMask, build_mask, decode, predict
from .encoder import encode_sequence
from .errors import InputError, STPError, ShapeError
from .features import FeatureClip, gcn_distance_features, positional_embedding
from .features.skeleton import NUM_KEYPOINTS
from .features.synthetic import Clip
from .numerics import ParamStore, Tensor, add, linear, softmax_rows
from .rng import substream
from .segments import ActionSegment
from .evaluation import soft_nms


def glorot(rng: np.random.Generator, d_in: int, d_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (d_in + d_out))
    return rng.uniform(-limit, limit, (d_in, d_out))


def _add_linear(store: ParamStore, seed: int, path: str, d_in: int, d_out: int) -> None:
    rng = substream(seed, "init/" + path)
    store.add(f"{path}/w", glorot(rng, d_in, d_out))
    store.add(f"{path}/b", np.zeros(d_out))


def _add_ln(store: ParamStore, path: str, d: int) -> None:
    store.add(f"{path}/gain", np.ones(d))
    store.add(f"{path}/bias", np.zeros(d))


def _add_attn(store: ParamStore, seed: int, path: str, d: int, out_proj: bool) -> None:
    names = ("q", "k", "v", "o") if out_proj else ("q", "k", "v")
    for n in names:
        rng = substream(seed, f"init/{path}/w{n}")
        store.add(f"{path}/w{n}", glorot(rng, d, d))
        store.add(f"{path}/b{n}", np.zeros(d))


def _add_ffn(store: ParamStore, seed: int, path: str, d_in: int, hidden: int, d_out: int) -> None:
    for name, (a, b) in (("1", (d_in, hidden)), ("2", (hidden, d_out))):
        rng = substream(seed, f"init/{path}/w{name}")
        store.add(f"{path}/w{name}", glorot(rng, a, b))
        store.add(f"{path}/b{name}", np.zeros(b))


def build_params(cfg: dict, seed: int) -> ParamStore:
    store = ParamStore()
    c = cfg["data.channels"]
    d = cfg["encoder.dim"]
    k_classes = cfg["data.num_classes"]

    if cfg["model.use_distance"]:
        dims = [2 + NUM_KEYPOINTS] + [cfg["features.gcn_hidden"]] * (
            cfg["features.gcn_layers"] - 1
        ) + [c]
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            _add_linear(store, seed, f"gcn/{i}", a, b)

    if cfg["model.use_fusion"]:
        _add_linear(store, seed, "fusion/p", c, c)
        _add_linear(store, seed, "fusion/d", c, c)

    if c != d:
        _add_linear(store, seed, "proj", c, d)

    for m in range(cfg["encoder.layers"]):
        base = f"encoder/{m}"
        _add_ln(store, f"{base}/ln1", d)
        _add_attn(store, seed, f"{base}/attn", d, out_proj=True)
        _add_ln(store, f"{base}/ln2", d)
        _add_ffn(store, seed, f"{base}/ffn", d, d * cfg["encoder.ffn_mult"], d)
    _add_ln(store, "encoder/ln_out", d)

    q_rng = substream(seed, "init/decoder/queries")
    store.add("decoder/queries", q_rng.normal(0.0, 0.02, (cfg["decoder.num_queries"], d)))
    for b in range(cfg["decoder.blocks"]):
        base = f"decoder/{b}"
        _add_ln(store, f"{base}/ln1", d)
        _add_attn(store, seed, f"{base}/self", d, out_proj=True)
        _add_ln(store, f"{base}/ln2", d)
        _add_attn(store, seed, f"{base}/cross", d, out_proj=False)
        _add_ln(store, f"{base}/ln3", d)
        _add_ffn(store, seed, f"{base}/ffn", d, d * cfg["decoder.ffn_mult"], d)
    _add_ln(store, "decoder/ln_out", d)

    _add_ffn(store, seed, "heads/reg", d, d, 2)
    _add_ffn(store, seed, "heads/cls", d, d, k_classes + 1)
    return store


def _gcn_layers(store: ParamStore, cfg: dict) -> list:
    return [
        (store.tensor(f"gcn/{i}/w"), store.tensor(f"gcn/{i}/b"))
        for i in range(cfg["features.gcn_layers"])
    ]


def _stage(name: str):
    """Re-raise pipeline errors with the failing module attached."""

    class _ctx:
        def __enter__(self):
            return None

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and isinstance(exc, STPError):
                raise type(exc)(f"{name}: {exc}") from exc
            return False

    return _ctx()


def forward(store: ParamStore, clip: Clip, cfg: dict) -> tuple[Tensor, Tensor]:
    """Candidate segments for one clip: (boxes (N_q, 2) in frames,
    logits (N_q, K+1))."""
    t = clip.frames
    c = cfg["data.channels"]
    if t < 1:
        raise InputError("empty clip: no frames to encode")
    if clip.features.shape != (t, c):
        raise ShapeError(
            f"clip features {clip.features.shape} do not match configured (T, {c})"
        )
    if clip.points.shape != (t, NUM_KEYPOINTS, 2):
        raise ShapeError(f"clip keypoints have shape {clip.points.shape}")

    with _stage("features"):
        pe = positional_embedding(t, c)
        if cfg["model.use_temporal"]:
            x_p = FeatureClip.from_frames(Tensor(clip.features + pe))
        else:
            x_p = FeatureClip.from_frames(Tensor(pe.copy()))
        if cfg["model.use_distance"]:
            x_d = gcn_distance_features(clip.points, _gcn_layers(store, cfg))
        else:
            x_d = FeatureClip.from_frames(Tensor(np.zeros((t, c))))

    with _stage("fusion"):
        if cfg["model.use_fusion"]:
            x_p, x_d = fusion_mod.interact(
                x_p, x_d,
                store.tensor("fusion/p/w"), store.tensor("fusion/p/b"),
                store.tensor("fusion/d/w"), store.tensor("fusion/d/b"),
                fusion_width(cfg),
            )
        merged = add(x_p.flat(), x_d.flat())
        if c != cfg["encoder.dim"]:
            merged = linear(merged, store.tensor("proj/w"), store.tensor("proj/b"))

    with _stage("encoder"):
        frames = encode_sequence(
            store, merged,
            layers=cfg["encoder.layers"], heads=cfg["encoder.heads"],
            segment_len=cfg["encoder.segment_len"],
        )

    with _stage("decoder"):
        n_q = cfg["decoder.num_queries"]
        if cfg["model.use_causal_mask"]:
            mask = build_mask(t, n_q, cfg["decoder.mask_rule"])
        else:
            mask = CausalMask(np.full(n_q, t, dtype=np.int64), t)
        decoded = decode(
            store, frames, mask,
            blocks=cfg["decoder.blocks"], scale_logits=cfg["decoder.scale_logits"],
        )
        return predict(store, decoded, t)


def infer(store: ParamStore, clip: Clip, cfg: dict) -> list[ActionSegment]:
    """Forward, drop background-argmax queries, then score-decay NMS."""
    boxes, logits = forward(store, clip, cfg)
    probs = softmax_rows(logits).data
    k_back = probs.shape[1] - 1
    candidates = []
    for q in range(probs.shape[0]):
        label = int(np.argmax(probs[q]))
        if label == k_back:
            continue
        ts, te = float(boxes.data[q, 0]), float(boxes.data[q, 1])
        candidates.append(ActionSegment(ts, te, label, float(probs[q, label])))
    return soft_nms(candidates, cfg["eval.nms_sigma"], cfg["eval.nms_threshold"])


def count_params(store: ParamStore) -> int:
    return store.total()
