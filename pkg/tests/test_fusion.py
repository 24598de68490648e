"""Channel-exchange fusion: slice oracles, boundaries, cost, gradient isolation."""

import numpy as np
import pytest

from stp.errors import ShapeError
from stp.features.types import FeatureClip
from stp.fusion import concat_channels, default_exchange_width, exchange_rows, interact
from stp.numerics import Tensor, count_ops, narrow, tsum


def _clip(arr):
    return FeatureClip(Tensor(np.asarray(arr, dtype=np.float64)))


def _identity_params(c, rg=False):
    return (
        Tensor(np.eye(c), requires_grad=rg),
        Tensor(np.zeros(c), requires_grad=rg),
        Tensor(np.eye(c), requires_grad=rg),
        Tensor(np.zeros(c), requires_grad=rg),
    )


# -- concat_channels -----------------------------------------------------------


def test_concat_channels_order_and_round_trip():
    rng = np.random.default_rng(0)
    a = Tensor(rng.normal(size=(3, 2)))
    b = Tensor(rng.normal(size=(5, 2)))
    out = concat_channels(a, b)
    assert out.shape == (8, 2)
    np.testing.assert_array_equal(narrow(out, 0, 0, 3).data, a.data)
    np.testing.assert_array_equal(narrow(out, 0, 3, 5).data, b.data)


def test_concat_channels_empty_is_identity():
    a = Tensor(np.ones((4, 2)))
    out = concat_channels(a, Tensor(np.zeros((0, 2))))
    np.testing.assert_array_equal(out.data, a.data)


def test_concat_channels_two_rows():
    out = concat_channels(Tensor([[1.0, 2.0]]), Tensor([[3.0, 4.0]]))
    np.testing.assert_array_equal(out.data, [[1.0, 2.0], [3.0, 4.0]])


def test_concat_channels_mismatch():
    with pytest.raises(ShapeError):
        concat_channels(Tensor(np.zeros((3, 2))), Tensor(np.zeros((3, 5))))


# -- exchange boundaries ------------------------------------------------------


def test_exchange_k0_keeps_own_stream():
    rng = np.random.default_rng(1)
    keep, inject = Tensor(rng.normal(size=(4, 6))), Tensor(rng.normal(size=(4, 6)))
    np.testing.assert_array_equal(exchange_rows(keep, inject, 0).data, keep.data)


def test_exchange_kC_takes_other_stream():
    rng = np.random.default_rng(2)
    keep, inject = Tensor(rng.normal(size=(4, 6))), Tensor(rng.normal(size=(4, 6)))
    np.testing.assert_array_equal(exchange_rows(keep, inject, 6).data, inject.data)


def test_exchange_k_out_of_range():
    keep = Tensor(np.zeros((2, 4)))
    with pytest.raises(ShapeError):
        exchange_rows(keep, keep, 5)
    with pytest.raises(ShapeError):
        exchange_rows(keep, keep, -1)


# -- interact -------------------------------------------------------------------


def test_interact_identity_mlp_slice_oracle():
    # C=4, k=1: own first three channels, other stream's last channel
    rng = np.random.default_rng(3)
    p = rng.normal(size=(5, 4, 1))
    d = rng.normal(size=(5, 4, 1))
    out_p, out_d = interact(_clip(p), _clip(d), *_identity_params(4), k=1)
    want_p = np.concatenate([p[:, :3], d[:, 3:]], axis=1)
    want_d = np.concatenate([d[:, :3], p[:, 3:]], axis=1)
    np.testing.assert_array_equal(out_p.data.data, want_p)
    np.testing.assert_array_equal(out_d.data.data, want_d)


def test_interact_preserves_shapes():
    rng = np.random.default_rng(4)
    t, c, l = 6, 8, 3
    p, d = rng.normal(size=(t, c, l)), rng.normal(size=(t, c, l))
    w = rng.normal(size=(c, c))
    out_p, out_d = interact(
        _clip(p), _clip(d),
        Tensor(w), Tensor(rng.normal(size=c)), Tensor(w.T), Tensor(rng.normal(size=c)),
        k=2,
    )
    assert out_p.data.shape == (t, c, l)
    assert out_d.data.shape == (t, c, l)


def test_interact_streams_use_independent_mlps():
    rng = np.random.default_rng(5)
    p, d = rng.normal(size=(3, 4, 1)), rng.normal(size=(3, 4, 1))
    w_p = rng.normal(size=(4, 4))
    w_d = rng.normal(size=(4, 4))
    out_p, out_d = interact(
        _clip(p), _clip(d), Tensor(w_p), Tensor(np.zeros(4)), Tensor(w_d), Tensor(np.zeros(4)), k=0
    )
    np.testing.assert_allclose(out_p.data.data[..., 0], p[..., 0] @ w_p, atol=1e-12)
    np.testing.assert_allclose(out_d.data.data[..., 0], d[..., 0] @ w_d, atol=1e-12)


def test_interact_rejects_stream_mismatch():
    with pytest.raises(ShapeError):
        interact(_clip(np.zeros((3, 4, 1))), _clip(np.zeros((3, 5, 1))),
                 *_identity_params(4), k=1)


def test_interact_cost_exactly_2T_mlp_rows():
    t, c, l = 7, 4, 1
    p, d = np.ones((t, c, l)), np.ones((t, c, l))
    with count_ops() as ops:
        interact(_clip(p), _clip(d), *_identity_params(c), k=1)
    assert ops.linear_rows == 2 * t * l
    assert ops.counts.get("linear", 0) == 2
    # no attention anywhere in the fusion path
    assert "softmax_rows" not in ops.counts and "masked_softmax" not in ops.counts


def test_interact_k0_cross_stream_gradient_is_zero():
    rng = np.random.default_rng(6)
    p = Tensor(rng.normal(size=(3, 4, 1)), requires_grad=True)
    d = Tensor(rng.normal(size=(3, 4, 1)), requires_grad=True)
    params = _identity_params(4, rg=True)
    out_p, _ = interact(FeatureClip(p), FeatureClip(d), *params, k=0)
    tsum(out_p.data).backward()
    np.testing.assert_array_equal(d.grad, np.zeros_like(d.grad))
    assert np.abs(p.grad).sum() > 0


def test_interact_k_positive_cross_stream_gradient_flows():
    rng = np.random.default_rng(7)
    p = Tensor(rng.normal(size=(3, 4, 1)), requires_grad=True)
    d = Tensor(rng.normal(size=(3, 4, 1)), requires_grad=True)
    out_p, _ = interact(FeatureClip(p), FeatureClip(d), *_identity_params(4, rg=True), k=2)
    tsum(out_p.data).backward()
    assert np.abs(d.grad).sum() > 0


def test_default_exchange_width_quarter():
    assert default_exchange_width(256) == 64
    assert default_exchange_width(4) == 1
