import numpy as np
import pytest

from action_core import ops
from action_core.errors import DataError, ShapeError
from action_core.tensor import Parameter, Tensor, as_tensor, is_grad_enabled, no_grad


def test_tensor_copies_input_and_coerces_integers():
    source = np.arange(6).reshape(2, 3)
    t = Tensor(source)
    source[0, 0] = 100
    assert t.dtype == np.float64
    assert t.data[0, 0] == 0
    assert t.shape == (2, 3) and t.size == 6 and t.ndim == 2


def test_zero_extent_is_rejected():
    with pytest.raises(ShapeError):
        Tensor(np.zeros((2, 0)))


def test_backward_accumulates_through_shared_inputs():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    y = (x * x + x).sum()
    y.backward()
    np.testing.assert_allclose(x.grad, 2 * x.data + 1)


def test_backward_needs_scalar_without_seed():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ShapeError):
        ops.scale(x, 2.0).backward()


def test_no_grad_disables_recording():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with no_grad():
        assert not is_grad_enabled()
        y = ops.scale(x, 3.0)
    assert is_grad_enabled()
    assert y.node is None and not y.requires_grad


def test_parameter_assign_checks_shape():
    p = Parameter(np.zeros((2, 3)), name="w")
    p.assign(np.ones((2, 3)))
    np.testing.assert_array_equal(p.value, np.ones((2, 3)))
    with pytest.raises(ShapeError):
        p.assign(np.ones(3))


def test_as_tensor_passes_tensors_through():
    t = Tensor([1.0])
    assert as_tensor(t) is t
    assert isinstance(as_tensor([1.0, 2.0]), Tensor)


def test_reshape_permute_matches_numpy():
    x = Tensor(np.arange(24.0).reshape(2, 3, 4))
    out = ops.reshape_permute(x, (4, 6), (1, 0))
    np.testing.assert_array_equal(out.data, np.arange(24.0).reshape(4, 6).T)
    with pytest.raises(ShapeError):
        ops.reshape(x, (5, 5))
    with pytest.raises(ShapeError):
        ops.permute(x, (0, 0, 1))


def test_mean_axis_and_keepdims():
    x = Tensor(np.arange(12.0).reshape(3, 4))
    np.testing.assert_allclose(ops.mean_axis(x, 1).data, x.data.mean(axis=1))
    assert ops.mean_axis(x, (0, 1), keep=True).shape == (1, 1)
    with pytest.raises(ShapeError):
        ops.mean_axis(x, 2)


def test_sigmoid_is_stable_for_large_inputs():
    out = ops.sigmoid_map(Tensor([-1000.0, 0.0, 1000.0])).data
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, [0.0, 0.5, 1.0], atol=1e-12)


def test_broadcast_mul_add_shapes():
    x = Tensor(np.ones((2, 3, 4, 5, 5)))
    m = Tensor(np.full((2, 3, 4, 1, 1), 0.5))
    np.testing.assert_allclose(ops.broadcast_mul_add(x, m).data, 1.5)
    with pytest.raises(ShapeError):
        ops.broadcast_mul_add(x, Tensor(np.ones((2, 3, 2, 1, 1))))


def test_convolve_identity_kernel():
    x = Tensor(np.random.default_rng(0).standard_normal((1, 2, 5, 5)))
    kernel = np.zeros((2, 1, 3, 3))
    kernel[:, 0, 1, 1] = 1.0
    out = ops.convolve(x, Tensor(kernel), zero_pad=1, groups=2)
    np.testing.assert_allclose(out.data, x.data)


def test_convolve_rejects_oversized_kernel_and_bad_groups():
    x = Tensor(np.ones((1, 4, 3, 3)))
    with pytest.raises(ShapeError, match="exceeds padded input"):
        ops.convolve(x, Tensor(np.ones((1, 4, 5, 5))))
    with pytest.raises(ShapeError):
        ops.convolve(x, Tensor(np.ones((3, 2, 1, 1))), groups=2)


def test_convolve_matches_loop_oracle_1d():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 3, 7))
    w = rng.standard_normal((4, 3, 3))
    b = rng.standard_normal(4)
    out = ops.convolve(Tensor(x), Tensor(w), Tensor(b), spatial_rank=1, stride=2, zero_pad=1).data
    padded = np.pad(x, [(0, 0), (0, 0), (1, 1)])
    expected = np.zeros((2, 4, 4))
    for n in range(2):
        for o in range(4):
            for i in range(4):
                expected[n, o, i] = b[o] + np.sum(w[o] * padded[n, :, 2 * i : 2 * i + 3])
    np.testing.assert_allclose(out, expected, rtol=1e-12)


def test_batch_norm_training_and_eval():
    rng = np.random.default_rng(5)
    x = Tensor(rng.standard_normal((6, 3, 2, 2)) * 4 + 2)
    gamma, beta = Tensor(np.ones(3)), Tensor(np.zeros(3))
    mean, var = np.zeros(3), np.ones(3)
    out = ops.batch_norm(x, gamma, beta, mean, var, training=True, momentum=1.0)
    np.testing.assert_allclose(out.data.mean(axis=(0, 2, 3)), 0.0, atol=1e-10)
    np.testing.assert_allclose(mean, x.data.mean(axis=(0, 2, 3)))
    evaluated = ops.batch_norm(x, gamma, beta, mean, var, training=False)
    assert evaluated.shape == x.shape


def test_softmax_xent_value_and_label_checks():
    logits = Tensor(np.zeros((2, 4)))
    np.testing.assert_allclose(ops.softmax_xent(logits, [0, 3]).item(), np.log(4.0))
    with pytest.raises(DataError):
        ops.softmax_xent(logits, [0, 4])
    with pytest.raises(DataError):
        ops.softmax_xent(logits, [0])


def test_slice_and_pad_axis():
    x = Tensor(np.arange(6.0).reshape(2, 3))
    sliced = ops.slice_axis(x, 1, 1, 3)
    np.testing.assert_array_equal(sliced.data, [[1, 2], [4, 5]])
    padded = ops.pad_axis(sliced, 0, 0, 1)
    np.testing.assert_array_equal(padded.data[-1], [0, 0])
    with pytest.raises(ShapeError):
        ops.slice_axis(x, 1, 2, 2)


def test_scalar_oracles():
    np.testing.assert_allclose(ops.sigmoid_map(Tensor([1.0])).data, [0.731058], atol=1e-6)
    loss = ops.softmax_xent(Tensor([[10.0, 0.0]]), [0]).item()
    assert loss == pytest.approx(4.54e-5, rel=1e-3)
    out = ops.linear_map(Tensor([1.0, 2.0]), Tensor([[1.0, 1.0], [1.0, -1.0]]), Tensor([0.0, 0.0]))
    np.testing.assert_allclose(out.data, [3.0, -1.0])


def test_zero_kernel_3d_convolution_gives_zeros():
    x = Tensor(np.random.default_rng(1).standard_normal((1, 1, 4, 5, 6)))
    out = ops.convolve(x, Tensor(np.zeros((1, 1, 3, 3, 3))), Tensor(np.zeros(1)), zero_pad=1)
    assert out.shape == (1, 1, 4, 5, 6)
    np.testing.assert_array_equal(out.data, 0.0)


@pytest.mark.parametrize("rank, groups", [(1, 1), (2, 2), (3, 1)])
def test_convolve_is_linear_in_its_input(rank, groups):
    rng = np.random.default_rng(rank)
    shape = (2, 4) + (5,) * rank
    x, y = rng.standard_normal(shape), rng.standard_normal(shape)
    kernel = Tensor(rng.standard_normal((6, 4 // groups) + (3,) * rank))

    def conv(values):
        return ops.convolve(Tensor(values), kernel, spatial_rank=rank, zero_pad=1, groups=groups).data

    combined = conv(2.5 * x - 0.75 * y)
    expected = 2.5 * conv(x) - 0.75 * conv(y)
    np.testing.assert_allclose(combined, expected, rtol=1e-12, atol=1e-12 * np.abs(expected).max())


def test_broadcast_mul_add_stays_between_x_and_twice_x():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((2, 3, 4, 3, 3))
    x[x == 0.0] = 1.0
    m = rng.uniform(1e-6, 1.0 - 1e-6, size=(2, 3, 1, 3, 3))
    y = ops.broadcast_mul_add(Tensor(x), Tensor(m)).data
    np.testing.assert_array_equal(np.sign(y), np.sign(x))
    assert np.all(np.abs(x) <= np.abs(y))
    assert np.all(np.abs(y) <= 2.0 * np.abs(x))
