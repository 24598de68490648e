"""Synthetic desk-scene clips with planted, band-separated actions.

Each action class is a (keypoint pair, feature signature) combination:
inside a class-k segment the pair's two keypoints are placed within
0.05 of each other (explicitly constructed, 0.02..0.035) and a class
signature vector is added to the per-frame feature channels; outside
any segment every class pair stays at distance >= 0.3. Classes share
pairs and signatures in a chain (class 2k and 2k+1 share a pair,
class 2k+1 and 2k+2 share a signature), so neither the distance stream
nor the feature stream alone can separate all classes, but together
they can.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict, field
from pathlib import Path

import numpy as np

from ..errors import GenerationError, FormatError
from ..numerics import tensor_io
from ..rng import substream
from ..segments import ActionSegment
from .positional import positional_embedding
from .skeleton import KEYPOINT_NAMES, NUM_KEYPOINTS

# neutral seated pose, image coordinates in [0, 1]^2
BASE_POSE = {
    "head": (0.50, 0.90),
    "neck": (0.50, 0.80),
    "l_shoulder": (0.35, 0.78),
    "r_shoulder": (0.65, 0.78),
    "l_elbow": (0.30, 0.60),
    "r_elbow": (0.70, 0.60),
    "l_wrist": (0.28, 0.45),
    "r_wrist": (0.72, 0.45),
    "pelvis": (0.50, 0.50),
    "l_hip": (0.42, 0.50),
    "r_hip": (0.58, 0.50),
    "l_knee": (0.40, 0.25),
    "r_knee": (0.60, 0.25),
}

# pairs are (moving keypoint, anchor); ordered so that no pair's anchor
# distance is disturbed by another pair's contact (checked at generation)
CLASS_PAIRS = (
    ("l_wrist", "head"),
    ("r_wrist", "head"),
    ("l_wrist", "r_wrist"),
    ("l_elbow", "head"),
    ("r_elbow", "head"),
)
MAX_CLASSES = 2 * len(CLASS_PAIRS)

CONTACT_LOW, CONTACT_HIGH = 0.02, 0.035
CONTACT_BAND = 0.05  # inside a segment the class pair is closer than this
APART_BAND = 0.3  # outside, every class pair is farther than this

_IDX = {name: i for i, name in enumerate(KEYPOINT_NAMES)}
_DROPPABLE = tuple(_IDX[n] for n in ("l_hip", "r_hip", "l_knee", "r_knee"))


def class_pair(k: int) -> tuple[int, int]:
    """Keypoint indices (mover, anchor) for class k."""
    a, b = CLASS_PAIRS[k // 2]
    return _IDX[a], _IDX[b]


def class_signature(k: int) -> int:
    """Feature-signature index for class k (shared across the chain)."""
    return (k + 1) // 2


@dataclass(frozen=True)
class GeneratorSpec:
    frames: int = 64
    num_classes: int = 3
    channels: int = 64
    min_len: int = 8
    max_len: int = 20
    min_actions: int = 1
    max_actions: int = 3
    gap: int = 2
    noise: float = 0.1
    signal_gain: float = 2.0
    pose_jitter: float = 0.004
    visibility_dropout: float = 0.05

    def __post_init__(self):
        if self.frames < 1:
            raise GenerationError(f"frames must be positive, got {self.frames}")
        if not (1 <= self.num_classes <= MAX_CLASSES):
            raise GenerationError(
                f"num_classes must be in [1, {MAX_CLASSES}], got {self.num_classes}"
            )
        if self.channels % 2 != 0 or self.channels < 2:
            raise GenerationError(f"channels must be even and positive, got {self.channels}")
        if not (1 <= self.min_len <= self.max_len <= self.frames):
            raise GenerationError(
                f"bad segment lengths [{self.min_len}, {self.max_len}] for {self.frames} frames"
            )
        if not (0 <= self.min_actions <= self.max_actions):
            raise GenerationError("bad action count range")


@dataclass
class Clip:
    video_id: str
    points: np.ndarray  # (T, J, 2); invisible keypoints are (-1, -1)
    features: np.ndarray  # (T, C)
    segments: list[ActionSegment] = field(default_factory=list)
    num_classes: int = 1

    @property
    def frames(self) -> int:
        return self.points.shape[0]

    def visible(self) -> np.ndarray:
        return ~np.all(self.points == -1.0, axis=-1)


def signature_vectors(spec: GeneratorSpec, seed: int) -> np.ndarray:
    """Orthonormal signature directions (n_sig, C), fixed per seed."""
    n_sig = spec.num_classes // 2 + 1
    rng = substream(seed, "signals")
    g = rng.normal(size=(spec.channels, n_sig))
    q, r = np.linalg.qr(g)
    # fix signs so the basis is unique
    q = q * np.sign(np.diag(r))[None, :]
    return q.T


def _place_segments(spec: GeneratorSpec, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Non-overlapping (start, end) frame spans separated by >= gap."""
    for _ in range(200):
        n = int(rng.integers(spec.min_actions, spec.max_actions + 1))
        if n == 0:
            return []
        lens = rng.integers(spec.min_len, spec.max_len + 1, size=n)
        slack = spec.frames - int(lens.sum()) - spec.gap * (n - 1)
        if slack < 0:
            continue
        cuts = np.sort(rng.integers(0, slack + 1, size=n))
        # n+1 non-negative pads summing to slack; the last is trailing space
        pads = np.diff(np.concatenate([[0], cuts, [slack]]))
        spans = []
        pos = 0
        for i in range(n):
            pos += int(pads[i])
            spans.append((pos, pos + int(lens[i])))
            pos += int(lens[i]) + spec.gap
        return spans
    raise GenerationError("could not place segments; loosen lengths or counts")


def _check_bands(points: np.ndarray, segments: list[ActionSegment], spec: GeneratorSpec) -> None:
    """Enforce the contact/apart distance bands for every keypoint pair.

    Bands are a property of the pair, not the class: classes may share a
    pair (that is what makes them indistinguishable to the distance
    stream), so a pair must be in contact exactly during segments of any
    class that uses it and well apart everywhere else.
    """
    active: dict[tuple[int, int], np.ndarray] = {
        class_pair(k): np.full(spec.frames, False) for k in range(spec.num_classes)
    }
    for s in segments:
        active[class_pair(s.label)][int(s.start): int(s.end)] = True
    for (a, b), inside in active.items():
        d = np.linalg.norm(points[:, a] - points[:, b], axis=-1)
        if inside.any() and not (d[inside] < CONTACT_BAND).all():
            raise GenerationError(f"pair ({a}, {b}) contact band violated")
        if (~inside).any() and not (d[~inside] >= APART_BAND).all():
            raise GenerationError(f"pair ({a}, {b}) apart band violated")


def generate_clip(spec: GeneratorSpec, seed: int, index: int) -> Clip:
    """One clip from the (seed, "data", index) substream."""
    rng = substream(seed, "data", index)
    spans = _place_segments(spec, rng)
    labels = rng.integers(0, spec.num_classes, size=len(spans))
    segments = [
        ActionSegment(float(s), float(e), int(k)) for (s, e), k in zip(spans, labels)
    ]

    base = np.array([BASE_POSE[n] for n in KEYPOINT_NAMES])
    points = base[None, :, :] + rng.normal(0.0, spec.pose_jitter, (spec.frames, NUM_KEYPOINTS, 2))
    for seg in segments:
        a, b = class_pair(seg.label)
        theta = rng.uniform(0.0, 2.0 * np.pi)
        direction = np.array([np.cos(theta), np.sin(theta)])
        for t in range(int(seg.start), int(seg.end)):
            dist = rng.uniform(CONTACT_LOW, CONTACT_HIGH)
            points[t, a] = points[t, b] + dist * direction
    _check_bands(points, segments, spec)

    drop = rng.random((spec.frames, len(_DROPPABLE))) < spec.visibility_dropout
    for j, kp in enumerate(_DROPPABLE):
        points[drop[:, j], kp] = -1.0

    vis = ~np.all(points == -1.0, axis=-1)
    if not ((points[vis] >= 0.0) & (points[vis] <= 1.0)).all():
        raise GenerationError("visible keypoint left the unit square")

    sig = signature_vectors(spec, seed)
    features = positional_embedding(spec.frames, spec.channels).copy()
    for seg in segments:
        features[int(seg.start): int(seg.end)] += spec.signal_gain * sig[class_signature(seg.label)]
    features += rng.normal(0.0, spec.noise, features.shape)

    return Clip(video_id=clip_dir_name(index), points=points, features=features,
                segments=segments, num_classes=spec.num_classes)


# -- on-disk layout -------------------------------------------------------------
#
#   root/
#     dataset.json            generation parameters (deterministic)
#     clip_00000/
#       keypoints.stpt        (T, 13, 2) float64, (-1, -1) = invisible
#       features.stpt         (T, C) float64
#       annotations.json      frame-unit segments
#     ...


def clip_dir_name(index: int) -> str:
    return f"clip_{index:05d}"


def save_clip(path, clip: Clip) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    tensor_io.save_tensor(path / "keypoints.stpt", clip.points)
    tensor_io.save_tensor(path / "features.stpt", clip.features)
    ann = {
        "video_id": clip.video_id,
        "frames": clip.frames,
        "segments": [
            {"start": int(s.start), "end": int(s.end), "class": s.label} for s in clip.segments
        ],
    }
    (path / "annotations.json").write_text(json.dumps(ann, sort_keys=True, indent=2) + "\n")


def load_clip(path, num_classes: int) -> Clip:
    path = Path(path)
    points = tensor_io.load_tensor(path / "keypoints.stpt")
    features = tensor_io.load_tensor(path / "features.stpt")
    ann = json.loads((path / "annotations.json").read_text())
    if points.shape[0] != ann["frames"] or features.shape[0] != ann["frames"]:
        raise FormatError(f"frame count mismatch in {path}")
    segments = [
        ActionSegment(float(d["start"]), float(d["end"]), int(d["class"]))
        for d in ann["segments"]
    ]
    return Clip(video_id=str(ann["video_id"]), points=points, features=features,
                segments=segments, num_classes=int(num_classes))


def generate_dataset(root, spec: GeneratorSpec, seed: int, num_clips: int) -> list[Path]:
    """Write `num_clips` clips under `root`; fully determined by arguments."""
    if num_clips < 1:
        raise GenerationError(f"num_clips must be positive, got {num_clips}")
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    dirs = []
    for i in range(num_clips):
        clip = generate_clip(spec, seed, i)
        d = root / clip_dir_name(i)
        save_clip(d, clip)
        dirs.append(d)
    meta = {"spec": asdict(spec), "seed": int(seed), "num_clips": int(num_clips),
            "clips": [d.name for d in dirs]}
    (root / "dataset.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    return dirs


def load_dataset(root) -> tuple[GeneratorSpec, int, list[Path]]:
    root = Path(root)
    meta_path = root / "dataset.json"
    if not meta_path.exists():
        raise FormatError(f"{root} has no dataset.json; not a generated dataset")
    meta = json.loads(meta_path.read_text())
    spec = GeneratorSpec(**meta["spec"])
    return spec, int(meta["seed"]), [root / name for name in meta["clips"]]
