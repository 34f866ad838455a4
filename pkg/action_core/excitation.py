"""Spatio-temporal, channel and motion excitation paths on (N, T, C, H, W) batches.

Every path produces a gate M in (0, 1) and returns ``X + X * M``. The combined
module sums the three path outputs.
"""

import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from . import ops
from .errors import ShapeError
from .tensor import Parameter, Tensor, record

REDUCE_RATIO = 16
SHIFT_FRACTION = 1.0 / 8.0

NamedParameters = List[Tuple[str, Parameter]]


def reduced_channels(channels: int, reduce_ratio: int = REDUCE_RATIO) -> int:
    return max(1, channels // reduce_ratio)


def _fan_in_uniform(rng: np.random.Generator, shape: Tuple[int, ...], dtype) -> np.ndarray:
    bound = 1.0 / math.sqrt(math.prod(shape[1:]))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def _gate(rng: np.random.Generator, shape: Tuple[int, ...], dtype, zero: bool) -> np.ndarray:
    return np.zeros(shape, dtype=dtype) if zero else _fan_in_uniform(rng, shape, dtype)


def _bias(rng: np.random.Generator, fan_in: int, size: int, dtype, zero: bool = False) -> np.ndarray:
    if zero:
        return np.zeros(size, dtype=dtype)
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=size).astype(dtype)


def _check_batch(x: Tensor) -> Tuple[int, int, int, int, int]:
    if x.ndim != 5:
        raise ShapeError(f"segment batch must be (N, T, C, H, W), got shape {x.shape}")
    return x.shape


def _prefixed(prefix: str, params: NamedParameters) -> NamedParameters:
    return [(f"{prefix}.{name}", param) for name, param in params]


@dataclass
class SteWeights:
    k3d: Parameter
    bias: Parameter

    @classmethod
    def create(cls, rng: np.random.Generator, dtype=np.float64, zero_gates: bool = True) -> "SteWeights":
        shape = (1, 1, 3, 3, 3)
        return cls(
            k3d=Parameter(_gate(rng, shape, dtype, zero_gates), name="k3d"),
            bias=Parameter(_bias(rng, 27, 1, dtype, zero=zero_gates), name="bias"),
        )

    def named_parameters(self) -> NamedParameters:
        return [("k3d", self.k3d), ("bias", self.bias)]


@dataclass
class CeWeights:
    k1_squeeze: Parameter
    b1: Parameter
    k2_temporal: Parameter
    b2: Parameter
    k3_unsqueeze: Parameter
    b3: Parameter

    @property
    def channels(self) -> int:
        return self.k1_squeeze.shape[1]

    @property
    def reduced(self) -> int:
        return self.k1_squeeze.shape[0]

    @classmethod
    def create(
        cls,
        channels: int,
        rng: np.random.Generator,
        reduce_ratio: int = REDUCE_RATIO,
        dtype=np.float64,
        zero_gates: bool = True,
    ) -> "CeWeights":
        cr = reduced_channels(channels, reduce_ratio)
        return cls(
            k1_squeeze=Parameter(_fan_in_uniform(rng, (cr, channels, 1, 1), dtype), name="k1_squeeze"),
            b1=Parameter(_bias(rng, channels, cr, dtype), name="b1"),
            k2_temporal=Parameter(_fan_in_uniform(rng, (cr, cr, 3), dtype), name="k2_temporal"),
            b2=Parameter(_bias(rng, 3 * cr, cr, dtype), name="b2"),
            k3_unsqueeze=Parameter(_gate(rng, (channels, cr, 1, 1), dtype, zero_gates), name="k3_unsqueeze"),
            b3=Parameter(_bias(rng, cr, channels, dtype, zero=zero_gates), name="b3"),
        )

    def named_parameters(self) -> NamedParameters:
        return [
            ("k1_squeeze", self.k1_squeeze),
            ("b1", self.b1),
            ("k2_temporal", self.k2_temporal),
            ("b2", self.b2),
            ("k3_unsqueeze", self.k3_unsqueeze),
            ("b3", self.b3),
        ]


@dataclass
class MeWeights:
    k1_squeeze: Parameter
    b1: Parameter
    k_diff: Parameter
    b_diff: Parameter
    k3_unsqueeze: Parameter
    b3: Parameter

    @property
    def channels(self) -> int:
        return self.k1_squeeze.shape[1]

    @property
    def reduced(self) -> int:
        return self.k1_squeeze.shape[0]

    @classmethod
    def create(
        cls,
        channels: int,
        rng: np.random.Generator,
        reduce_ratio: int = REDUCE_RATIO,
        dtype=np.float64,
        zero_gates: bool = True,
    ) -> "MeWeights":
        cr = reduced_channels(channels, reduce_ratio)
        return cls(
            k1_squeeze=Parameter(_fan_in_uniform(rng, (cr, channels, 1, 1), dtype), name="k1_squeeze"),
            b1=Parameter(_bias(rng, channels, cr, dtype), name="b1"),
            k_diff=Parameter(_fan_in_uniform(rng, (cr, 1, 3, 3), dtype), name="k_diff"),
            b_diff=Parameter(_bias(rng, 9, cr, dtype), name="b_diff"),
            k3_unsqueeze=Parameter(_gate(rng, (channels, cr, 1, 1), dtype, zero_gates), name="k3_unsqueeze"),
            b3=Parameter(_bias(rng, cr, channels, dtype, zero=zero_gates), name="b3"),
        )

    def named_parameters(self) -> NamedParameters:
        return [
            ("k1_squeeze", self.k1_squeeze),
            ("b1", self.b1),
            ("k_diff", self.k_diff),
            ("b_diff", self.b_diff),
            ("k3_unsqueeze", self.k3_unsqueeze),
            ("b3", self.b3),
        ]


@dataclass
class ActionWeights:
    ste: SteWeights
    ce: CeWeights
    me: MeWeights

    def __post_init__(self):
        if self.ce.channels != self.me.channels or self.ce.reduced != self.me.reduced:
            raise ShapeError(
                f"CE ({self.ce.channels}->{self.ce.reduced}) and ME ({self.me.channels}->{self.me.reduced}) "
                "must share channel and reduction sizes"
            )

    @property
    def channels(self) -> int:
        return self.ce.channels

    @classmethod
    def create(
        cls,
        channels: int,
        rng: np.random.Generator,
        reduce_ratio: int = REDUCE_RATIO,
        dtype=np.float64,
        zero_gates: bool = True,
    ) -> "ActionWeights":
        return cls(
            ste=SteWeights.create(rng, dtype=dtype, zero_gates=zero_gates),
            ce=CeWeights.create(channels, rng, reduce_ratio, dtype=dtype, zero_gates=zero_gates),
            me=MeWeights.create(channels, rng, reduce_ratio, dtype=dtype, zero_gates=zero_gates),
        )

    def named_parameters(self) -> NamedParameters:
        return (
            _prefixed("ste", self.ste.named_parameters())
            + _prefixed("ce", self.ce.named_parameters())
            + _prefixed("me", self.me.named_parameters())
        )


# -- paths ------------------------------------------------------------------


def ste_forward(x: Tensor, w: SteWeights) -> Tensor:
    _check_batch(x)
    # (N, T, 1, H, W) -> (N, 1, T, H, W) for the 3x3x3 conv over (T, H, W)
    feature = ops.permute(ops.mean_axis(x, 2, keep=True), (0, 2, 1, 3, 4))
    response = ops.convolve(feature, w.k3d, w.bias, spatial_rank=3, zero_pad=1)
    mask = ops.sigmoid_map(ops.permute(response, (0, 2, 1, 3, 4)))
    return ops.broadcast_mul_add(x, mask)


def ce_forward(x: Tensor, w: CeWeights) -> Tensor:
    n, t, c, _, _ = _check_batch(x)
    cr = w.reduced
    pooled = ops.reshape(ops.mean_axis(x, (3, 4), keep=True), (n * t, c, 1, 1))
    squeezed = ops.convolve(pooled, w.k1_squeeze, w.b1)
    temporal = ops.reshape_permute(squeezed, (n, t, cr), (0, 2, 1))
    temporal = ops.convolve(temporal, w.k2_temporal, w.b2, spatial_rank=1, zero_pad=1)
    temporal = ops.reshape(ops.permute(temporal, (0, 2, 1)), (n * t, cr, 1, 1))
    response = ops.convolve(temporal, w.k3_unsqueeze, w.b3)
    mask = ops.sigmoid_map(ops.reshape(response, (n, t, c, 1, 1)))
    return ops.broadcast_mul_add(x, mask)


def motion_feature(x: Tensor, w: MeWeights) -> Tensor:
    """Squeezed frame differences K * F[t+1] - F[t], zero in the last slice.

    Returns shape (N, T, C/r, H, W).
    """
    n, t, c, h, wd = _check_batch(x)
    cr = w.reduced
    if t == 1:
        return Tensor(np.zeros((n, 1, cr, h, wd), dtype=x.dtype))
    squeezed = ops.convolve(ops.reshape(x, (n * t, c, h, wd)), w.k1_squeeze, w.b1)
    transformed = ops.convolve(squeezed, w.k_diff, w.b_diff, zero_pad=1, groups=cr)
    following = ops.slice_axis(ops.reshape(transformed, (n, t, cr, h, wd)), 1, 1, t)
    current = ops.slice_axis(ops.reshape(squeezed, (n, t, cr, h, wd)), 1, 0, t - 1)
    return ops.pad_axis(following - current, 1, 0, 1)


def me_forward(x: Tensor, w: MeWeights) -> Tensor:
    n, t, c, _, _ = _check_batch(x)
    pooled = ops.reshape(ops.mean_axis(motion_feature(x, w), (3, 4), keep=True), (n * t, w.reduced, 1, 1))
    response = ops.convolve(pooled, w.k3_unsqueeze, w.b3)
    mask = ops.sigmoid_map(ops.reshape(response, (n, t, c, 1, 1)))
    return ops.broadcast_mul_add(x, mask)


def action_forward(x: Tensor, w: ActionWeights) -> Tensor:
    return ste_forward(x, w.ste) + ce_forward(x, w.ce) + me_forward(x, w.me)


# -- baselines --------------------------------------------------------------


def temporal_shift(x: Tensor, shift_fraction: float = SHIFT_FRACTION) -> Tensor:
    """Shift one channel fold forward in time and the next fold backward, zero-filled."""
    _, t, c, _, _ = _check_batch(x)
    fold = int(c * shift_fraction)
    out = np.zeros_like(x.data)
    out[:, 1:, :fold] = x.data[:, :-1, :fold]
    out[:, :-1, fold : 2 * fold] = x.data[:, 1:, fold : 2 * fold]
    out[:, :, 2 * fold :] = x.data[:, :, 2 * fold :]

    def vjp(grad: np.ndarray):
        back = np.zeros_like(grad)
        back[:, :-1, :fold] = grad[:, 1:, :fold]
        back[:, 1:, fold : 2 * fold] = grad[:, :-1, fold : 2 * fold]
        back[:, :, 2 * fold :] = grad[:, :, 2 * fold :]
        return (back,)

    return record("temporal_shift", out, (x,), vjp)


def segment_consensus(logits: Tensor) -> Tensor:
    """Mean over the segment axis of (N, T, classes) logits.

    Values are summed in sorted order so the result does not depend on
    segment order, bit for bit.
    """
    if logits.ndim != 3:
        raise ShapeError(f"consensus expects (N, T, classes), got {logits.shape}")
    segments = logits.shape[1]
    out = np.sort(logits.data, axis=1).sum(axis=1) / segments

    def vjp(grad: np.ndarray):
        return (np.repeat(grad[:, None, :] / segments, segments, axis=1),)

    return record("segment_consensus", out, (logits,), vjp)
