"""Temporal module implementations inserted at the start of each network stage."""

from abc import ABC, abstractmethod
from typing import Dict, Optional, Type

import numpy as np

from .errors import ConfigError
from .excitation import (
    REDUCE_RATIO,
    SHIFT_FRACTION,
    ActionWeights,
    CeWeights,
    MeWeights,
    NamedParameters,
    SteWeights,
    action_forward,
    ce_forward,
    me_forward,
    ste_forward,
    temporal_shift,
)
from .tensor import Tensor

# module kind -> architecture variant tag used by the cost model
MODULE_VARIANTS: Dict[str, str] = {
    "none": "tsn",
    "shift": "tsm",
    "ste": "ste",
    "ce": "ce",
    "me": "me",
    "action": "action",
}


class TemporalModule(ABC):
    """Base class for temporal modules on (N, T, C, H, W) batches."""

    kind = ""

    def __init__(self, channels: int):
        self.channels = channels

    @abstractmethod
    def forward(self, x: Tensor) -> Tensor:
        """Return a tensor of the input's shape."""
        pass

    def named_parameters(self) -> NamedParameters:
        return []

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(channels={self.channels})"


class NoTemporalModule(TemporalModule):
    """Identity: the network stays strictly per-frame."""

    kind = "none"

    def forward(self, x: Tensor) -> Tensor:
        return x


class ShiftModule(TemporalModule):
    """Parameter-free channel shift along the segment axis."""

    kind = "shift"

    def __init__(self, channels: int, shift_fraction: float = SHIFT_FRACTION):
        super().__init__(channels)
        self.shift_fraction = shift_fraction

    def forward(self, x: Tensor) -> Tensor:
        return temporal_shift(x, self.shift_fraction)


class _WeightedModule(TemporalModule):
    def __init__(self, channels: int, weights):
        super().__init__(channels)
        self.weights = weights

    def named_parameters(self) -> NamedParameters:
        return self.weights.named_parameters()


class SteModule(_WeightedModule):
    kind = "ste"

    def forward(self, x: Tensor) -> Tensor:
        return ste_forward(x, self.weights)


class CeModule(_WeightedModule):
    kind = "ce"

    def forward(self, x: Tensor) -> Tensor:
        return ce_forward(x, self.weights)


class MeModule(_WeightedModule):
    kind = "me"

    def forward(self, x: Tensor) -> Tensor:
        return me_forward(x, self.weights)


class ActionModule(_WeightedModule):
    """Sum of the spatio-temporal, channel and motion excitation paths."""

    kind = "action"

    def forward(self, x: Tensor) -> Tensor:
        return action_forward(x, self.weights)


_WEIGHTED: Dict[str, Type[_WeightedModule]] = {
    "ste": SteModule,
    "ce": CeModule,
    "me": MeModule,
    "action": ActionModule,
}


def create_temporal_module(
    kind: str,
    channels: int,
    rng: Optional[np.random.Generator] = None,
    reduce_ratio: int = REDUCE_RATIO,
    dtype=np.float64,
    zero_gates: bool = True,
) -> TemporalModule:
    """Build the temporal module named ``kind`` for ``channels`` input channels."""
    key = (kind or "none").lower()
    if key not in MODULE_VARIANTS:
        raise ConfigError(f"unknown temporal module '{kind}', expected one of {sorted(MODULE_VARIANTS)}")
    if key == "none":
        return NoTemporalModule(channels)
    if key == "shift":
        return ShiftModule(channels)
    rng = rng if rng is not None else np.random.default_rng(0)
    if key == "ste":
        weights = SteWeights.create(rng, dtype=dtype, zero_gates=zero_gates)
    elif key == "ce":
        weights = CeWeights.create(channels, rng, reduce_ratio, dtype=dtype, zero_gates=zero_gates)
    elif key == "me":
        weights = MeWeights.create(channels, rng, reduce_ratio, dtype=dtype, zero_gates=zero_gates)
    else:
        weights = ActionWeights.create(channels, rng, reduce_ratio, dtype=dtype, zero_gates=zero_gates)
    return _WEIGHTED[key](channels, weights)
