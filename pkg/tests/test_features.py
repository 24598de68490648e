"""Positional table, skeleton distances, GCN stream, and the synthetic generator."""

import json
import math

import numpy as np
import pytest

from stp.errors import GenerationError, ShapeError
from stp.features import (
    FeatureClip,
    adjacency,
    gcn_distance_features,
    generate_clip,
    generate_dataset,
    load_clip,
    load_dataset,
    normalized_adjacency,
    pairwise_distances,
    positional_embedding,
)
from stp.features.skeleton import EDGES, KEYPOINT_NAMES, NUM_KEYPOINTS, node_features
from stp.features.synthetic import (
    APART_BAND,
    CONTACT_BAND,
    GeneratorSpec,
    class_pair,
    class_signature,
    signature_vectors,
)
from stp.numerics import Tensor

SMALL = GeneratorSpec(frames=32, num_classes=3, channels=16, min_len=4, max_len=8,
                      min_actions=1, max_actions=2)


# -- positional embedding ------------------------------------------------------


def test_positional_matches_direct_formula():
    pe = positional_embedding(8, 4)
    want = np.zeros((8, 4))
    for t in range(8):
        for i in range(2):
            want[t, 2 * i] = math.sin(t / 10000 ** (2 * i / 4))
            want[t, 2 * i + 1] = math.cos(t / 10000 ** (2 * i / 4))
    np.testing.assert_allclose(pe, want, atol=1e-15)


def test_positional_row_zero_alternates():
    np.testing.assert_array_equal(positional_embedding(3, 6)[0], [0, 1, 0, 1, 0, 1])


def test_positional_range_and_start_offset():
    pe = positional_embedding(50, 10)
    assert (np.abs(pe) <= 1.0).all()
    # absolute positions: table rows depend on t, not on the window
    np.testing.assert_array_equal(positional_embedding(4, 10, start=7),
                                  positional_embedding(11, 10)[7:])


def test_positional_rejects_odd_channels():
    with pytest.raises(ShapeError):
        positional_embedding(4, 5)


# -- skeleton distances -----------------------------------------------------


def test_pairwise_identical_points_zero():
    pts = np.full((2, NUM_KEYPOINTS, 2), 0.5)
    np.testing.assert_array_equal(pairwise_distances(pts),
                                  np.zeros((2, NUM_KEYPOINTS, NUM_KEYPOINTS)))


def test_pairwise_hand_value():
    pts = np.full((1, NUM_KEYPOINTS, 2), 0.0)
    pts[0, 3] = (3 / 5, 4 / 5)
    d = pairwise_distances(pts)
    assert d[0, 0, 3] == pytest.approx(1.0, abs=1e-15)
    assert d[0, 3, 0] == pytest.approx(1.0, abs=1e-15)


def test_pairwise_invisible_sentinel():
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 1, size=(3, NUM_KEYPOINTS, 2))
    pts[1, 4] = (-1.0, -1.0)
    d = pairwise_distances(pts)
    assert (d[1, 4, :] == -1.0).all() and (d[1, :, 4] == -1.0).all()
    assert (d[0] >= 0).all()


def test_pairwise_symmetry_zero_diagonal_property():
    rng = np.random.default_rng(1)
    for _ in range(10):
        pts = rng.uniform(0, 1, size=(4, NUM_KEYPOINTS, 2))
        d = pairwise_distances(pts)
        np.testing.assert_allclose(d, np.swapaxes(d, 1, 2), atol=0)
        np.testing.assert_array_equal(
            d[:, np.arange(NUM_KEYPOINTS), np.arange(NUM_KEYPOINTS)], 0.0
        )


def test_pairwise_shape_errors():
    with pytest.raises(ShapeError):
        pairwise_distances(np.zeros((4, 13, 3)))
    with pytest.raises(ShapeError):
        pairwise_distances(np.zeros((4, 13, 2)), visible=np.ones((3, 13), bool))


# -- skeleton graph ---------------------------------------------------------


def test_adjacency_is_a_tree():
    a = adjacency()
    assert a.sum() == 2 * (NUM_KEYPOINTS - 1)  # 12 undirected edges
    np.testing.assert_array_equal(a, a.T)
    assert (np.diag(a) == 0).all()


def test_normalized_adjacency_hand_oracle():
    # independent dense normalization of the same constant graph
    a = np.zeros((NUM_KEYPOINTS, NUM_KEYPOINTS))
    idx = {n: i for i, n in enumerate(KEYPOINT_NAMES)}
    for u, v in EDGES:
        a[idx[u], idx[v]] = a[idx[v], idx[u]] = 1.0
    ai = a + np.eye(NUM_KEYPOINTS)
    want = np.zeros_like(ai)
    deg = ai.sum(axis=1)
    for i in range(NUM_KEYPOINTS):
        for j in range(NUM_KEYPOINTS):
            want[i, j] = ai[i, j] / math.sqrt(deg[i] * deg[j])
    np.testing.assert_allclose(normalized_adjacency(), want, atol=1e-15)


def test_normalized_adjacency_rejects_bad_input():
    with pytest.raises(ShapeError):
        normalized_adjacency(np.zeros((3, 4)))
    bad = np.zeros((3, 3))
    bad[0, 1] = 1.0
    with pytest.raises(ShapeError):
        normalized_adjacency(bad)


# -- GCN stream ---------------------------------------------------------------


def _layer(w, b):
    return Tensor(np.asarray(w, dtype=np.float64), requires_grad=True), Tensor(
        np.asarray(b, dtype=np.float64), requires_grad=True
    )


def test_gcn_zero_weights_zero_output():
    rng = np.random.default_rng(2)
    pts = rng.uniform(0, 1, size=(5, NUM_KEYPOINTS, 2))
    layers = [_layer(np.zeros((15, 8)), np.zeros(8)), _layer(np.zeros((8, 6)), np.zeros(6))]
    out = gcn_distance_features(pts, layers)
    assert out.data.shape == (5, 6, 1)
    np.testing.assert_array_equal(out.data.data, 0.0)


def test_gcn_single_layer_matches_hand_computation():
    rng = np.random.default_rng(3)
    pts = rng.uniform(0, 1, size=(1, NUM_KEYPOINTS, 2))
    out = gcn_distance_features(pts, [_layer(np.eye(15), np.zeros(15))])
    x = node_features(pts)[0]  # (13, 15)
    want = (normalized_adjacency() @ x).mean(axis=0)
    np.testing.assert_allclose(out.data.data[0, :, 0], want, atol=1e-12)


def test_gcn_pooled_output_invariant_under_simultaneous_permutation():
    rng = np.random.default_rng(4)
    pts = rng.uniform(0, 1, size=(3, NUM_KEYPOINTS, 2))
    w = rng.normal(size=(15, 6))
    b = rng.normal(size=6)
    base = gcn_distance_features(pts, [_layer(w, b)]).data.data

    perm = np.arange(NUM_KEYPOINTS)
    i, j = KEYPOINT_NAMES.index("l_wrist"), KEYPOINT_NAMES.index("r_wrist")
    perm[[i, j]] = perm[[j, i]]
    a_hat = normalized_adjacency()[np.ix_(perm, perm)]
    w_perm = w.copy()
    w_perm[2:] = w[2:][perm]  # distance-row inputs follow the node order
    swapped = gcn_distance_features(
        pts[:, perm], [_layer(w_perm, b)], a_hat=a_hat
    ).data.data
    np.testing.assert_allclose(swapped, base, atol=1e-12)


def test_gcn_shape_fixed_under_visibility():
    rng = np.random.default_rng(5)
    pts = rng.uniform(0, 1, size=(4, NUM_KEYPOINTS, 2))
    pts[2, 10] = (-1, -1)
    out = gcn_distance_features(pts, [_layer(rng.normal(size=(15, 7)), np.zeros(7))])
    assert out.data.shape == (4, 7, 1)


def test_gcn_rejects_empty_and_mismatched():
    pts = np.zeros((1, NUM_KEYPOINTS, 2))
    with pytest.raises(ShapeError):
        gcn_distance_features(pts, [])
    with pytest.raises(ShapeError):
        gcn_distance_features(pts, [_layer(np.eye(15), np.zeros(15))], a_hat=np.eye(5))


# -- FeatureClip ---------------------------------------------------------------


def test_feature_clip_validation_and_flat():
    clip = FeatureClip(Tensor(np.arange(24.0).reshape(2, 3, 4)))
    assert (clip.frames, clip.channels, clip.width) == (2, 3, 4)
    assert clip.flat().shape == (2, 12)
    with pytest.raises(ShapeError):
        FeatureClip(Tensor(np.zeros((2, 3))))
    with pytest.raises(ShapeError):
        FeatureClip(Tensor(np.zeros((2, 0, 1))))


def test_feature_clip_from_frames():
    clip = FeatureClip.from_frames(Tensor(np.ones((5, 4))))
    assert clip.data.shape == (5, 4, 1)


# -- synthetic generator ------------------------------------------------------


def test_generator_deterministic():
    a = generate_clip(SMALL, seed=9, index=3)
    b = generate_clip(SMALL, seed=9, index=3)
    np.testing.assert_array_equal(a.points, b.points)
    np.testing.assert_array_equal(a.features, b.features)
    assert a.segments == b.segments
    c = generate_clip(SMALL, seed=10, index=3)
    assert not np.array_equal(a.features, c.features)


def test_generator_distance_bands():
    for idx in range(10):
        clip = generate_clip(SMALL, seed=1, index=idx)
        used = {class_pair(k) for k in range(SMALL.num_classes)}
        for a, b in used:
            inside = np.zeros(SMALL.frames, dtype=bool)
            for s in clip.segments:
                if class_pair(s.label) == (a, b):
                    inside[int(s.start): int(s.end)] = True
            d = np.linalg.norm(clip.points[:, a] - clip.points[:, b], axis=-1)
            assert (d[inside] < CONTACT_BAND).all()
            assert (d[~inside] >= APART_BAND).all()


def test_generator_segments_fit_and_respect_gap():
    for idx in range(20):
        clip = generate_clip(SMALL, seed=2, index=idx)
        segs = sorted(clip.segments, key=lambda s: s.start)
        assert 1 <= len(segs) <= SMALL.max_actions
        for s in segs:
            assert 0 <= s.start < s.end <= SMALL.frames
            assert SMALL.min_len <= s.end - s.start <= SMALL.max_len
        for prev, nxt in zip(segs, segs[1:]):
            assert nxt.start - prev.end >= SMALL.gap


def test_generator_visible_points_stay_in_unit_square():
    for idx in range(10):
        clip = generate_clip(SMALL, seed=3, index=idx)
        vis = clip.visible()
        assert ((clip.points[vis] >= 0) & (clip.points[vis] <= 1)).all()
        assert (clip.points[~vis] == -1).all()


def test_generator_features_carry_signatures():
    spec = GeneratorSpec(frames=32, num_classes=3, channels=16, min_len=4, max_len=8,
                         min_actions=1, max_actions=1, noise=0.0)
    clip = generate_clip(spec, seed=4, index=0)
    sig = signature_vectors(spec, 4)
    seg = clip.segments[0]
    pe = positional_embedding(spec.frames, spec.channels)
    t_in = int(seg.start)
    resid = clip.features[t_in] - pe[t_in]
    np.testing.assert_allclose(resid, spec.signal_gain * sig[class_signature(seg.label)],
                               atol=1e-12)
    t_out = 0 if seg.start > 0 else int(seg.end)
    np.testing.assert_allclose(clip.features[t_out], pe[t_out], atol=1e-12)


def test_confusable_chain_structure():
    # neighbouring classes share either the keypoint pair or the signature
    assert class_pair(0) == class_pair(1)
    assert class_signature(1) == class_signature(2)
    assert class_pair(1) != class_pair(2)
    assert class_signature(0) != class_signature(1)
    sig = signature_vectors(SMALL, 0)
    np.testing.assert_allclose(sig @ sig.T, np.eye(sig.shape[0]), atol=1e-12)


def test_class_histogram_near_uniform():
    spec = GeneratorSpec(frames=64, num_classes=3, channels=16)
    counts = np.zeros(3)
    for idx in range(200):
        for s in generate_clip(spec, seed=5, index=idx).segments:
            counts[s.label] += 1
    expected = counts.sum() / 3
    assert (np.abs(counts - expected) <= 0.10 * expected).all(), counts


def test_generator_spec_validation():
    with pytest.raises(GenerationError):
        GeneratorSpec(frames=0)
    with pytest.raises(GenerationError):
        GeneratorSpec(num_classes=11)
    with pytest.raises(GenerationError):
        GeneratorSpec(min_len=30, max_len=20)
    with pytest.raises(GenerationError):
        GeneratorSpec(frames=8, min_len=4, max_len=9)
    with pytest.raises(GenerationError):
        GeneratorSpec(channels=5)


def test_generator_error_when_segments_cannot_fit():
    spec = GeneratorSpec(frames=16, min_len=8, max_len=8, min_actions=3, max_actions=3)
    with pytest.raises(GenerationError, match="place"):
        generate_clip(spec, seed=0, index=0)


# -- on-disk dataset ------------------------------------------------------------


def test_save_load_clip_round_trip(tmp_path):
    clip = generate_clip(SMALL, seed=6, index=1)
    from stp.features.synthetic import save_clip

    save_clip(tmp_path / "c", clip)
    back = load_clip(tmp_path / "c", SMALL.num_classes)
    np.testing.assert_array_equal(back.points, clip.points)
    np.testing.assert_array_equal(back.features, clip.features)
    assert [(s.start, s.end, s.label) for s in back.segments] == [
        (s.start, s.end, s.label) for s in clip.segments
    ]


def test_annotations_format(tmp_path):
    from stp.features.synthetic import save_clip

    clip = generate_clip(SMALL, seed=6, index=2)
    save_clip(tmp_path / "c", clip)
    ann = json.loads((tmp_path / "c" / "annotations.json").read_text())
    assert set(ann) == {"video_id", "frames", "segments"}
    assert ann["video_id"] == clip.video_id and ann["frames"] == SMALL.frames
    for seg in ann["segments"]:
        assert set(seg) == {"start", "end", "class"}
        assert all(isinstance(seg[k], int) for k in ("start", "end", "class"))


def test_generate_dataset_round_trip(tmp_path):
    dirs = generate_dataset(tmp_path / "ds", SMALL, seed=7, num_clips=3)
    assert [d.name for d in dirs] == ["clip_00000", "clip_00001", "clip_00002"]
    spec, seed, clips = load_dataset(tmp_path / "ds")
    assert spec == SMALL and seed == 7 and len(clips) == 3
    first = load_clip(clips[0], spec.num_classes)
    np.testing.assert_array_equal(first.points, generate_clip(SMALL, 7, 0).points)
