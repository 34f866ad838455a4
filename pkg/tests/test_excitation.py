import numpy as np
import pytest

from action_core.errors import ShapeError
from action_core.excitation import (
    ActionWeights,
    CeWeights,
    MeWeights,
    SteWeights,
    action_forward,
    ce_forward,
    me_forward,
    motion_feature,
    reduced_channels,
    segment_consensus,
    ste_forward,
    temporal_shift,
)
from action_core.tensor import Tensor


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _clip(rng, shape):
    return Tensor(rng.standard_normal(shape), dtype=np.float64)


# -- straight-line loop oracles ----------------------------------------------


def ste_oracle(x, k, b):
    n_, t_, c_, h_, w_ = x.shape
    feature = x.mean(axis=2)
    padded = np.pad(feature, [(0, 0), (1, 1), (1, 1), (1, 1)])
    mask = np.zeros((n_, t_, 1, h_, w_))
    for n in range(n_):
        for t in range(t_):
            for i in range(h_):
                for j in range(w_):
                    total = b[0]
                    for dt in range(3):
                        for di in range(3):
                            for dj in range(3):
                                total += k[0, 0, dt, di, dj] * padded[n, t + dt, i + di, j + dj]
                    mask[n, t, 0, i, j] = _sigmoid(total)
    return x + x * mask


def ce_oracle(x, w):
    n_, t_, c_, _, _ = x.shape
    cr = w.reduced
    k1, b1 = w.k1_squeeze.data[:, :, 0, 0], w.b1.data
    k2, b2 = w.k2_temporal.data, w.b2.data
    k3, b3 = w.k3_unsqueeze.data[:, :, 0, 0], w.b3.data
    pooled = x.mean(axis=(3, 4))
    squeezed = np.zeros((n_, t_, cr))
    for n in range(n_):
        for t in range(t_):
            for j in range(cr):
                squeezed[n, t, j] = b1[j] + sum(k1[j, c] * pooled[n, t, c] for c in range(c_))
    temporal = np.zeros((n_, t_, cr))
    for n in range(n_):
        for t in range(t_):
            for j in range(cr):
                total = b2[j]
                for i in range(cr):
                    for d in range(3):
                        source = t + d - 1
                        if 0 <= source < t_:
                            total += k2[j, i, d] * squeezed[n, source, i]
                temporal[n, t, j] = total
    mask = np.zeros((n_, t_, c_, 1, 1))
    for n in range(n_):
        for t in range(t_):
            for c in range(c_):
                mask[n, t, c, 0, 0] = _sigmoid(b3[c] + sum(k3[c, j] * temporal[n, t, j] for j in range(cr)))
    return x + x * mask


def me_oracle(x, w):
    n_, t_, c_, h_, w_ = x.shape
    cr = w.reduced
    k1, b1 = w.k1_squeeze.data[:, :, 0, 0], w.b1.data
    kd, bd = w.k_diff.data[:, 0], w.b_diff.data
    k3, b3 = w.k3_unsqueeze.data[:, :, 0, 0], w.b3.data
    squeezed = np.zeros((n_, t_, cr, h_, w_))
    for j in range(cr):
        squeezed[:, :, j] = b1[j] + sum(k1[j, c] * x[:, :, c] for c in range(c_))
    padded = np.pad(squeezed, [(0, 0), (0, 0), (0, 0), (1, 1), (1, 1)])
    transformed = np.zeros_like(squeezed)
    for i in range(h_):
        for j in range(w_):
            for ch in range(cr):
                transformed[:, :, ch, i, j] = bd[ch] + np.einsum("ab,ntab->nt", kd[ch], padded[:, :, ch, i : i + 3, j : j + 3])
    motion = np.zeros_like(squeezed)
    for t in range(t_ - 1):
        motion[:, t] = transformed[:, t + 1] - squeezed[:, t]
    pooled = motion.mean(axis=(3, 4))
    mask = np.zeros((n_, t_, c_, 1, 1))
    for n in range(n_):
        for t in range(t_):
            for c in range(c_):
                mask[n, t, c, 0, 0] = _sigmoid(b3[c] + sum(k3[c, j] * pooled[n, t, j] for j in range(cr)))
    return x + x * mask


# -- tests -------------------------------------------------------------------


@pytest.mark.parametrize("channels, expected", [(64, 4), (32, 2), (16, 1), (8, 1), (1, 1), (47, 2)])
def test_reduced_channels_floor_rule(channels, expected):
    assert reduced_channels(channels) == expected


@pytest.mark.parametrize("shape", [(1, 3, 2, 4, 4), (2, 4, 5, 3, 2)])
def test_ste_matches_loop_oracle(rng, shape):
    w = SteWeights.create(rng, zero_gates=False)
    x = _clip(rng, shape)
    expected = ste_oracle(x.data, w.k3d.data, w.bias.data)
    np.testing.assert_allclose(ste_forward(x, w).data, expected, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("shape", [(1, 4, 16, 2, 2), (2, 3, 32, 2, 3), (1, 5, 3, 2, 2)])
def test_ce_matches_loop_oracle(rng, shape):
    w = CeWeights.create(shape[2], rng, zero_gates=False)
    x = _clip(rng, shape)
    np.testing.assert_allclose(ce_forward(x, w).data, ce_oracle(x.data, w), rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("shape", [(1, 4, 16, 3, 3), (2, 3, 32, 2, 3), (1, 2, 5, 4, 4)])
def test_me_matches_loop_oracle(rng, shape):
    w = MeWeights.create(shape[2], rng, zero_gates=False)
    x = _clip(rng, shape)
    np.testing.assert_allclose(me_forward(x, w).data, me_oracle(x.data, w), rtol=1e-10, atol=1e-12)


def test_motion_feature_last_slice_is_zero(rng):
    w = MeWeights.create(16, rng, zero_gates=False)
    feature = motion_feature(_clip(rng, (2, 4, 16, 3, 3)), w)
    assert feature.shape == (2, 4, 1, 3, 3)
    np.testing.assert_array_equal(feature.data[:, -1], 0.0)
    assert np.abs(feature.data[:, :-1]).max() > 0


def test_motion_feature_single_segment_is_all_zero(rng):
    w = MeWeights.create(4, rng, zero_gates=False)
    feature = motion_feature(_clip(rng, (1, 1, 4, 2, 2)), w)
    np.testing.assert_array_equal(feature.data, 0.0)


@pytest.mark.parametrize("path", ["ste", "ce", "me", "action"])
def test_shapes_are_preserved(rng, path):
    x = _clip(rng, (2, 3, 16, 4, 4))
    if path == "ste":
        out = ste_forward(x, SteWeights.create(rng, zero_gates=False))
    elif path == "ce":
        out = ce_forward(x, CeWeights.create(16, rng, zero_gates=False))
    elif path == "me":
        out = me_forward(x, MeWeights.create(16, rng, zero_gates=False))
    else:
        out = action_forward(x, ActionWeights.create(16, rng, zero_gates=False))
    assert out.shape == x.shape


def test_mask_lies_strictly_inside_unit_interval(rng):
    x = Tensor(np.abs(rng.standard_normal((1, 4, 16, 3, 3))) + 0.5)
    w = CeWeights.create(16, rng, zero_gates=False)
    mask = ce_forward(x, w).data / x.data - 1.0
    assert np.all(mask > 0.0) and np.all(mask < 1.0)


def test_zero_gates_give_constant_half_mask(rng):
    x = _clip(rng, (1, 3, 16, 2, 2))
    weights = ActionWeights.create(16, rng)
    np.testing.assert_allclose(ste_forward(x, weights.ste).data, 1.5 * x.data)
    np.testing.assert_allclose(ce_forward(x, weights.ce).data, 1.5 * x.data)
    np.testing.assert_allclose(me_forward(x, weights.me).data, 1.5 * x.data)
    np.testing.assert_allclose(action_forward(x, weights).data, 4.5 * x.data)


def test_ste_is_channel_permutation_equivariant(rng):
    x = _clip(rng, (1, 3, 6, 3, 3))
    w = SteWeights.create(rng, zero_gates=False)
    order = rng.permutation(6)
    permuted = ste_forward(Tensor(x.data[:, :, order]), w).data
    np.testing.assert_allclose(permuted, ste_forward(x, w).data[:, :, order], rtol=1e-10, atol=1e-12)


def test_batch_elements_are_independent(rng):
    w = ActionWeights.create(16, rng, zero_gates=False)
    a = _clip(rng, (1, 3, 16, 2, 2))
    b = _clip(rng, (1, 3, 16, 2, 2))
    joint = action_forward(Tensor(np.concatenate([a.data, b.data])), w).data
    np.testing.assert_allclose(joint[:1], action_forward(a, w).data, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(joint[1:], action_forward(b, w).data, rtol=1e-10, atol=1e-12)


def test_action_is_sensitive_to_segment_reversal(rng):
    w = ActionWeights.create(16, rng, zero_gates=False)
    x = _clip(rng, (1, 4, 16, 3, 3))
    forward = action_forward(x, w).data
    reversed_out = action_forward(Tensor(x.data[:, ::-1]), w).data[:, ::-1]
    assert np.abs(forward - reversed_out).max() > 1e-6


def test_action_weights_must_agree_on_channels(rng):
    with pytest.raises(ShapeError):
        ActionWeights(SteWeights.create(rng), CeWeights.create(16, rng), MeWeights.create(32, rng))


def test_action_parameter_names_are_prefixed(rng):
    names = [name for name, _ in ActionWeights.create(16, rng).named_parameters()]
    assert names[:2] == ["ste.k3d", "ste.bias"]
    assert "ce.k2_temporal" in names and "me.k_diff" in names
    assert len(names) == 14


def test_rank_four_input_is_rejected(rng):
    with pytest.raises(ShapeError):
        ste_forward(Tensor(np.ones((3, 4, 2, 2))), SteWeights.create(rng))


def test_temporal_shift_moves_two_folds():
    x = np.arange(1 * 3 * 8 * 1 * 1, dtype=np.float64).reshape(1, 3, 8, 1, 1)
    out = temporal_shift(Tensor(x)).data
    np.testing.assert_array_equal(out[:, 1:, 0], x[:, :-1, 0])
    np.testing.assert_array_equal(out[:, 0, 0], 0.0)
    np.testing.assert_array_equal(out[:, :-1, 1], x[:, 1:, 1])
    np.testing.assert_array_equal(out[:, -1, 1], 0.0)
    np.testing.assert_array_equal(out[:, :, 2:], x[:, :, 2:])


def test_segment_consensus_is_mean_and_order_free(rng):
    logits = rng.standard_normal((2, 5, 3))
    out = segment_consensus(Tensor(logits)).data
    np.testing.assert_allclose(out, logits.mean(axis=1), rtol=1e-12, atol=1e-14)
    shuffled = segment_consensus(Tensor(logits[:, rng.permutation(5)])).data
    np.testing.assert_array_equal(out, shuffled)


def test_temporal_shift_never_increases_the_norm(rng):
    for shape in [(2, 5, 16, 3, 3), (1, 8, 8, 2, 2), (1, 2, 24, 1, 1)]:
        x = _clip(rng, shape)
        assert np.linalg.norm(temporal_shift(x).data) <= np.linalg.norm(x.data)


def test_temporal_shift_single_segment_zero_fills_both_folds(rng):
    x = _clip(rng, (2, 1, 16, 2, 2))
    out = temporal_shift(x).data
    np.testing.assert_array_equal(out[:, :, :4], 0.0)
    np.testing.assert_array_equal(out[:, :, 4:], x.data[:, :, 4:])
