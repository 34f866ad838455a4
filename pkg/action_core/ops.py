"""Differentiable operations on :class:`Tensor`.

Every op validates its inputs, computes the forward result with numpy and
records a vector-Jacobian product on the tape when an input is tracked.
"""

import math
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError, ShapeError
from .tensor import Tensor, as_tensor, record

Axes = Union[int, Sequence[int]]


def _normalize_axes(axes: Axes, rank: int) -> Tuple[int, ...]:
    raw = (axes,) if isinstance(axes, (int, np.integer)) else tuple(axes)
    normalized = []
    for axis in raw:
        axis = int(axis)
        if not -rank <= axis < rank:
            raise ShapeError(f"axis {axis} out of range for rank {rank}")
        normalized.append(axis % rank)
    if len(set(normalized)) != len(normalized):
        raise ShapeError(f"repeated axis in {raw}")
    return tuple(sorted(normalized))


def _expand(value: Union[int, Sequence[int]], rank: int, label: str) -> Tuple[int, ...]:
    if isinstance(value, (int, np.integer)):
        return (int(value),) * rank
    value = tuple(int(v) for v in value)
    if len(value) != rank:
        raise ShapeError(f"{label} needs {rank} entries, got {value}")
    return value


# -- layout -----------------------------------------------------------------


def reshape_permute(
    t: Tensor,
    new_shape: Optional[Sequence[int]] = None,
    axis_order: Optional[Sequence[int]] = None,
) -> Tensor:
    """Reshape (row-major) to ``new_shape``, then reorder axes by ``axis_order``."""
    data = t.data
    if new_shape is not None:
        new_shape = tuple(int(s) for s in new_shape)
        if any(s < 1 for s in new_shape) or math.prod(new_shape) != t.size:
            raise ShapeError(f"cannot reshape {t.shape} into {new_shape}")
        data = data.reshape(new_shape)
    order = None
    if axis_order is not None:
        order = tuple(int(a) for a in axis_order)
        if sorted(order) != list(range(data.ndim)):
            raise ShapeError(f"{order} is not a permutation of {data.ndim} axes")
        data = np.ascontiguousarray(np.transpose(data, order))
    source_shape = t.shape

    def vjp(grad: np.ndarray):
        if order is not None:
            grad = np.transpose(grad, np.argsort(order))
        return (np.ascontiguousarray(grad).reshape(source_shape),)

    return record("reshape_permute", data, (t,), vjp)


def reshape(t: Tensor, new_shape: Sequence[int]) -> Tensor:
    return reshape_permute(t, new_shape=new_shape)


def permute(t: Tensor, axis_order: Sequence[int]) -> Tensor:
    return reshape_permute(t, axis_order=axis_order)


def slice_axis(t: Tensor, axis: int, start: int, stop: int) -> Tensor:
    (axis,) = _normalize_axes(axis, t.ndim)
    extent = t.shape[axis]
    if not 0 <= start < stop <= extent:
        raise ShapeError(f"slice [{start}:{stop}) invalid for extent {extent}")
    index = (slice(None),) * axis + (slice(start, stop),)
    source_shape = t.shape

    def vjp(grad: np.ndarray):
        full = np.zeros(source_shape, dtype=grad.dtype)
        full[index] = grad
        return (full,)

    return record("slice_axis", t.data[index], (t,), vjp)


def pad_axis(t: Tensor, axis: int, before: int, after: int) -> Tensor:
    """Zero-pad ``t`` along one axis."""
    (axis,) = _normalize_axes(axis, t.ndim)
    if before < 0 or after < 0:
        raise ShapeError("padding must be non-negative")
    widths = [(0, 0)] * t.ndim
    widths[axis] = (before, after)
    index = (slice(None),) * axis + (slice(before, before + t.shape[axis]),)

    def vjp(grad: np.ndarray):
        return (np.ascontiguousarray(grad[index]),)

    return record("pad_axis", np.pad(t.data, widths), (t,), vjp)


# -- elementwise ------------------------------------------------------------


def add_tensors(a: Tensor, b) -> Tensor:
    """Sum of two equal-shape tensors, or of a tensor and a constant."""
    if not isinstance(b, Tensor):
        constant = np.asarray(b, dtype=a.dtype)
        if constant.ndim and constant.shape != a.shape:
            raise ShapeError(f"constant shape {constant.shape} does not match {a.shape}")
        return record("add_const", a.data + constant, (a,), lambda grad: (grad,))
    if a.shape != b.shape:
        raise ShapeError(f"cannot add shapes {a.shape} and {b.shape}")
    return record("add", a.data + b.data, (a, b), lambda grad: (grad, grad))


def scale(t, factor: float) -> Tensor:
    t = as_tensor(t)
    return record("scale", t.data * factor, (t,), lambda grad: (grad * factor,))


def multiply(a: Tensor, b) -> Tensor:
    """Elementwise product with a scalar, a constant array or a same-shape tensor."""
    if not isinstance(b, Tensor):
        constant = np.asarray(b, dtype=a.dtype)
        if constant.ndim and constant.shape != a.shape:
            raise ShapeError(f"constant shape {constant.shape} does not match {a.shape}")
        return record("mul_const", a.data * constant, (a,), lambda grad: (grad * constant,))
    if a.shape != b.shape:
        raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return record("mul", a.data * b.data, (a, b), lambda grad: (grad * b.data, grad * a.data))


def sum_all(t: Tensor) -> Tensor:
    shape = t.shape
    return record("sum", np.asarray(t.data.sum()), (t,), lambda grad: (np.broadcast_to(grad, shape).copy(),))


def mean_axis(t: Tensor, axis: Axes, keep: bool = False) -> Tensor:
    """Arithmetic mean over ``axis`` (one axis or a tuple of axes)."""
    axes = _normalize_axes(axis, t.ndim)
    count = math.prod(t.shape[a] for a in axes)
    out = t.data.mean(axis=axes, keepdims=keep)
    source_shape = t.shape

    def vjp(grad: np.ndarray):
        if not keep:
            grad = np.expand_dims(grad, axes)
        return (np.broadcast_to(grad, source_shape) / count,)

    return record("mean_axis", out, (t,), vjp)


def _expit(x: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -x))


def sigmoid_map(t: Tensor) -> Tensor:
    s = _expit(t.data)
    return record("sigmoid", s, (t,), lambda grad: (grad * s * (1.0 - s),))


def relu(t: Tensor) -> Tensor:
    mask = t.data > 0
    return record("relu", np.where(mask, t.data, 0.0).astype(t.dtype), (t,), lambda grad: (grad * mask,))


def broadcast_mul_add(x: Tensor, m: Tensor) -> Tensor:
    """``x + x * m`` with ``m`` broadcast along its singleton axes."""
    if m.ndim != x.ndim:
        raise ShapeError(f"mask rank {m.ndim} differs from input rank {x.ndim}")
    broadcast = []
    for axis, (xe, me) in enumerate(zip(x.shape, m.shape)):
        if me == xe:
            continue
        if me != 1:
            raise ShapeError(f"mask shape {m.shape} not broadcastable to {x.shape}")
        broadcast.append(axis)
    axes = tuple(broadcast)

    def vjp(grad: np.ndarray):
        grad_x = grad * (1.0 + m.data)
        grad_m = (grad * x.data).sum(axis=axes, keepdims=True) if axes else grad * x.data
        return grad_x, grad_m

    return record("broadcast_mul_add", x.data + x.data * m.data, (x, m), vjp)


# -- linear algebra ---------------------------------------------------------


def linear_map(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Affine map along the last axis; ``weight`` is (out, in)."""
    if weight.ndim != 2 or x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"input extent {x.shape[-1]} does not match weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError(f"bias shape {bias.shape} does not match {weight.shape[0]} outputs")
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def vjp(grad: np.ndarray):
        flat_grad = grad.reshape(-1, weight.shape[0])
        flat_x = x.data.reshape(-1, weight.shape[1])
        grads = [(grad @ weight.data).reshape(x.shape), flat_grad.T @ flat_x]
        if bias is not None:
            grads.append(flat_grad.sum(axis=0))
        return tuple(grads)

    return record("linear_map", out, inputs, vjp)


def convolve(
    x: Tensor,
    kernel: Tensor,
    bias: Optional[Tensor] = None,
    spatial_rank: Optional[int] = None,
    stride: Union[int, Sequence[int]] = 1,
    zero_pad: Union[int, Sequence[int]] = 0,
    groups: int = 1,
) -> Tensor:
    """Grouped cross-correlation over 1, 2 or 3 spatial axes.

    ``x`` is (batch, c_in, *spatial) and ``kernel`` is (c_out, c_in/groups, *k).
    Strided input windows are gathered into one column matrix per group and
    contracted with the flattened kernel in a single matrix product.
    """
    rank = spatial_rank if spatial_rank is not None else kernel.ndim - 2
    if rank not in (1, 2, 3):
        raise ShapeError(f"spatial rank must be 1, 2 or 3, got {rank}")
    if x.ndim != rank + 2 or kernel.ndim != rank + 2:
        raise ShapeError(f"rank-{rank} convolution needs rank-{rank + 2} input and kernel, got {x.shape} and {kernel.shape}")
    stride = _expand(stride, rank, "stride")
    pad = _expand(zero_pad, rank, "zero_pad")
    if any(s < 1 for s in stride) or any(p < 0 for p in pad):
        raise ShapeError(f"invalid stride {stride} or padding {pad}")

    batch, c_in = x.shape[:2]
    c_out, c_in_group = kernel.shape[:2]
    ksize = kernel.shape[2:]
    if groups < 1 or c_in % groups or c_out % groups or c_in_group * groups != c_in:
        raise ShapeError(f"{c_in} input / {c_out} output channels incompatible with groups={groups} and kernel {kernel.shape}")
    if bias is not None and bias.shape != (c_out,):
        raise ShapeError(f"bias shape {bias.shape} does not match {c_out} output channels")

    in_sizes = x.shape[2:]
    out_sizes = []
    for n, k, s, p in zip(in_sizes, ksize, stride, pad):
        if k > n + 2 * p:
            raise ShapeError(f"kernel extent {k} exceeds padded input {n + 2 * p}")
        out_sizes.append((n + 2 * p - k) // s + 1)

    dtype = np.result_type(x.data, kernel.data)
    padded = np.pad(x.data, [(0, 0), (0, 0)] + [(p, p) for p in pad]) if any(pad) else x.data
    c_out_group = c_out // groups
    x_grouped = padded.reshape(batch, groups, c_in_group, *padded.shape[2:])
    taps = math.prod(ksize)
    positions = math.prod(out_sizes)
    w_matrix = kernel.data.reshape(groups, c_out_group, c_in_group * taps).astype(dtype, copy=False)

    # columns: (groups, batch * positions, c_in_group * taps)
    windows = sliding_window_view(x_grouped, ksize, axis=tuple(range(3, 3 + rank)))
    windows = windows[(slice(None),) * 3 + tuple(slice(None, None, s) for s in stride)]
    to_columns = (1, 0) + tuple(range(3, 3 + rank)) + (2,) + tuple(range(3 + rank, 3 + 2 * rank))
    columns = windows.transpose(to_columns).reshape(groups, batch * positions, c_in_group * taps).astype(dtype, copy=False)

    out = columns @ w_matrix.transpose(0, 2, 1)
    out = out.reshape(groups, batch, *out_sizes, c_out_group)
    out = out.transpose((1, 0, rank + 2) + tuple(range(2, rank + 2))).reshape(batch, c_out, *out_sizes)
    if bias is not None:
        out = out + bias.data.reshape((1, c_out) + (1,) * rank)
    out = np.ascontiguousarray(out)

    inputs = (x, kernel) if bias is None else (x, kernel, bias)
    spatial_axes = tuple(range(2, rank + 2))

    def window(offset: Tuple[int, ...]):
        return (Ellipsis,) + tuple(slice(o, o + s * (n - 1) + 1, s) for o, s, n in zip(offset, stride, out_sizes))

    def vjp(grad: np.ndarray):
        grad_grouped = grad.reshape(batch, groups, c_out_group, *out_sizes)
        grad_matrix = grad_grouped.transpose((1, 0) + tuple(range(3, 3 + rank)) + (2,)).reshape(groups, batch * positions, c_out_group)
        grad_w = (grad_matrix.transpose(0, 2, 1) @ columns).astype(kernel.data.dtype, copy=False)
        grad_x = None
        if x.requires_grad:
            grad_columns = (grad_matrix @ w_matrix).reshape(groups, batch, *out_sizes, c_in_group, *ksize)
            from_columns = (1, 0, rank + 2) + tuple(range(2, rank + 2)) + tuple(range(rank + 3, 2 * rank + 3))
            grad_columns = grad_columns.transpose(from_columns)
            grad_x = np.zeros(x_grouped.shape, dtype=x.data.dtype)
            for offset in np.ndindex(*ksize):
                grad_x[window(offset)] += grad_columns[(Ellipsis,) + offset]
            grad_x = grad_x.reshape(padded.shape)
            grad_x = np.ascontiguousarray(grad_x[(slice(None), slice(None)) + tuple(slice(p, p + n) for p, n in zip(pad, in_sizes))])
        grads = [grad_x, grad_w.reshape(kernel.shape)]
        if bias is not None:
            grads.append(grad.sum(axis=(0,) + spatial_axes))
        return tuple(grads)

    return record(f"conv{rank}d", out, inputs, vjp)


# -- normalization ----------------------------------------------------------


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel normalization over every axis except axis 1.

    In training mode batch statistics are used and the running buffers are
    updated in place; in eval mode the running buffers are used as-is.
    """
    if x.ndim < 2 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ShapeError(f"batch_norm parameters {gamma.shape} do not match input {x.shape}")
    axes = (0,) + tuple(range(2, x.ndim))
    view = (1, x.shape[1]) + (1,) * (x.ndim - 2)
    count = x.size // x.shape[1]
    if training:
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var * (count / max(count - 1, 1))
    else:
        mean = running_mean.astype(x.dtype)
        var = running_var.astype(x.dtype)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x.data - mean.reshape(view)) * inv_std.reshape(view)
    out = gamma.data.reshape(view) * x_hat + beta.data.reshape(view)

    def vjp(grad: np.ndarray):
        grad_gamma = (grad * x_hat).sum(axis=axes)
        grad_beta = grad.sum(axis=axes)
        grad_hat = grad * gamma.data.reshape(view)
        if training:
            grad_x = (inv_std.reshape(view) / count) * (
                count * grad_hat
                - grad_hat.sum(axis=axes, keepdims=True)
                - x_hat * (grad_hat * x_hat).sum(axis=axes, keepdims=True)
            )
        else:
            grad_x = grad_hat * inv_std.reshape(view)
        return grad_x, grad_gamma, grad_beta

    return record("batch_norm", out.astype(x.dtype), (x, gamma, beta), vjp)


# -- loss -------------------------------------------------------------------


def softmax_xent(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """Mean negative log-likelihood of ``labels`` under softmax(``logits``)."""
    if logits.ndim != 2:
        raise ShapeError(f"logits must be (batch, classes), got {logits.shape}")
    batch, classes = logits.shape
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.shape != (batch,):
        raise DataError(f"expected {batch} labels, got {labels.shape[0]}")
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise DataError(f"labels must lie in [0, {classes}), got {labels.tolist()}")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(batch)
    loss = np.mean(log_norm - shifted[rows, labels])
    probs = np.exp(shifted - log_norm[:, None])

    def vjp(grad: np.ndarray):
        delta = probs.copy()
        delta[rows, labels] -= 1.0
        return (delta * (grad / batch),)

    return record("softmax_xent", np.asarray(loss, dtype=logits.dtype), (logits,), vjp)
