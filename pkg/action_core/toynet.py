"""Small per-frame CNN with a pluggable temporal module at every stage start."""

import json
import math
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import ops
from .backbones import TOYNET_WIDTHS, ArchGraph, build_backbone, legal_stages
from .errors import ConfigError, DataError, IoError, ShapeError
from .excitation import REDUCE_RATIO, segment_consensus
from .strategies import MODULE_VARIANTS, TemporalModule, create_temporal_module
from .tensor import Parameter, Tensor
from .tensor_io import load_snapshot, save_snapshot

NamedParameters = List[Tuple[str, Parameter]]


class BatchNorm:
    """Per-channel affine normalization with running statistics."""

    def __init__(self, channels: int, dtype=np.float32, momentum: float = 0.1, eps: float = 1e-5):
        self.gamma = Parameter(np.ones(channels, dtype=dtype), name="gamma")
        self.beta = Parameter(np.zeros(channels, dtype=dtype), name="beta")
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.momentum = momentum
        self.eps = eps

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return ops.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var, training, self.momentum, self.eps)


def _he_normal(rng: np.random.Generator, shape: Tuple[int, ...], dtype) -> np.ndarray:
    std = math.sqrt(2.0 / math.prod(shape[1:]))
    return (rng.standard_normal(shape) * std).astype(dtype)


class ToyNet:
    """Stem, conv stages and a linear head applied per frame, then segment consensus.

    Inputs are (N, T, C, H, W) clips; outputs are (N, classes) logits. Only the
    temporal modules mix information across segments.
    """

    def __init__(
        self,
        module: str = "none",
        widths: Sequence[int] = TOYNET_WIDTHS,
        num_classes: int = 4,
        stages: Optional[Iterable[str]] = None,
        seed: int = 0,
        in_channels: int = 1,
        input_size: int = 32,
        reduce_ratio: int = REDUCE_RATIO,
        dtype=np.float32,
        zero_gates: bool = True,
    ):
        module = (module or "none").lower()
        if module not in MODULE_VARIANTS:
            raise ConfigError(f"unknown temporal module '{module}', expected one of {sorted(MODULE_VARIANTS)}")
        widths = tuple(int(w) for w in widths)
        if not widths or any(w < 1 for w in widths):
            raise ConfigError(f"stage widths must be >= 1, got {widths}")
        if num_classes < 1:
            raise ConfigError(f"class count must be >= 1, got {num_classes}")
        if reduce_ratio < 1:
            raise ConfigError(f"reduce ratio must be >= 1, got {reduce_ratio}")
        legal = legal_stages("toynet", widths)
        chosen = legal if stages is None else tuple(s for s in legal if s in {x.strip().lower() for x in stages})
        if stages is not None and len(chosen) != len({x.strip().lower() for x in stages if x.strip()}):
            raise ConfigError(f"unknown stage(s) in {list(stages)}, legal stages are {list(legal)}")

        self.module = module
        self.widths = widths
        self.num_classes = num_classes
        self.stages = chosen
        self.in_channels = in_channels
        self.input_size = input_size
        self.reduce_ratio = reduce_ratio
        self.dtype = np.dtype(dtype)
        self.training = True

        rng = np.random.default_rng(seed)
        self.stem_conv = Parameter(_he_normal(rng, (widths[0], in_channels, 3, 3), dtype), name="stem.conv")
        self.stem_bn = BatchNorm(widths[0], dtype)
        self.temporal: List[Optional[TemporalModule]] = []
        self.convs: List[Parameter] = []
        self.bns: List[BatchNorm] = []
        c_in = widths[0]
        for index, width in enumerate(widths):
            name = f"stage{index + 1}"
            enabled = name in chosen and module != "none"
            self.temporal.append(
                create_temporal_module(module, c_in, rng, reduce_ratio, dtype=dtype, zero_gates=zero_gates) if enabled else None
            )
            self.convs.append(Parameter(_he_normal(rng, (width, c_in, 3, 3), dtype), name=f"{name}.conv"))
            self.bns.append(BatchNorm(width, dtype))
            c_in = width
        bound = 1.0 / math.sqrt(c_in)
        self.fc_weight = Parameter(rng.uniform(-bound, bound, (num_classes, c_in)).astype(dtype), name="fc.weight")
        self.fc_bias = Parameter(np.zeros(num_classes, dtype=dtype), name="fc.bias")

    # -- modes --------------------------------------------------------------

    def train(self) -> "ToyNet":
        self.training = True
        return self

    def eval(self) -> "ToyNet":
        self.training = False
        return self

    # -- forward ------------------------------------------------------------

    def features(self, x: Tensor) -> Tensor:
        """Final-stage feature maps, (N, T, C, h, w)."""
        if x.ndim != 5:
            raise ShapeError(f"clips must be (N, T, C, H, W), got {x.shape}")
        n, t, c, h, w = x.shape
        if c != self.in_channels:
            raise ShapeError(f"network expects {self.in_channels} input channels, got {c}")
        if x.dtype != self.dtype:
            x = Tensor(x.data.astype(self.dtype))
        out = ops.reshape(x, (n * t, c, h, w))
        out = ops.relu(self.stem_bn(ops.convolve(out, self.stem_conv, stride=2, zero_pad=1), self.training))
        for index, (module, conv, bn) in enumerate(zip(self.temporal, self.convs, self.bns)):
            if module is not None:
                frame_shape = out.shape[1:]
                out = ops.reshape(module(ops.reshape(out, (n, t) + frame_shape)), (n * t,) + frame_shape)
            out = ops.convolve(out, conv, stride=1 if index == 0 else 2, zero_pad=1)
            out = ops.relu(bn(out, self.training))
        return ops.reshape(out, (n, t) + out.shape[1:])

    def segment_logits(self, x: Tensor) -> Tensor:
        """Per-segment logits, (N, T, classes)."""
        feats = self.features(x)
        n, t = feats.shape[:2]
        pooled = ops.mean_axis(feats, (3, 4))
        return ops.reshape(ops.linear_map(pooled, self.fc_weight, self.fc_bias), (n, t, self.num_classes))

    def forward(self, x: Tensor) -> Tensor:
        return segment_consensus(self.segment_logits(x))

    __call__ = forward

    # -- parameters and state -----------------------------------------------

    def named_parameters(self) -> NamedParameters:
        params: NamedParameters = [
            ("stem.conv", self.stem_conv),
            ("stem.bn.gamma", self.stem_bn.gamma),
            ("stem.bn.beta", self.stem_bn.beta),
        ]
        for index, (module, conv, bn) in enumerate(zip(self.temporal, self.convs, self.bns)):
            name = f"stage{index + 1}"
            if module is not None:
                params += [(f"{name}.module.{key}", p) for key, p in module.named_parameters()]
            params += [(f"{name}.conv", conv), (f"{name}.bn.gamma", bn.gamma), (f"{name}.bn.beta", bn.beta)]
        params += [("fc.weight", self.fc_weight), ("fc.bias", self.fc_bias)]
        return params

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def parameter_groups(self) -> Tuple[List[Parameter], List[Parameter]]:
        """(backbone and classifier, temporal module) parameters."""
        named = self.named_parameters()
        temporal = [p for name, p in named if ".module." in name]
        return [p for name, p in named if ".module." not in name], temporal

    def named_buffers(self) -> List[Tuple[str, np.ndarray]]:
        buffers = [("stem.bn.running_mean", self.stem_bn.running_mean), ("stem.bn.running_var", self.stem_bn.running_var)]
        for index, bn in enumerate(self.bns):
            name = f"stage{index + 1}"
            buffers += [(f"{name}.bn.running_mean", bn.running_mean), (f"{name}.bn.running_var", bn.running_var)]
        return buffers

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_tensors(self) -> List[Tuple[str, str, np.ndarray]]:
        """(name, role, array) triples for a weight snapshot."""
        return [(n, "parameter", p.data) for n, p in self.named_parameters()] + [
            (n, "buffer", b) for n, b in self.named_buffers()
        ]

    def load_state(self, state: Dict[str, Tuple[str, np.ndarray]]) -> None:
        """Copy arrays from ``{name: (role, array)}`` into parameters and buffers."""
        expected = {n for n, _, _ in self.state_tensors()}
        missing = sorted(expected - set(state))
        if missing:
            raise DataError(f"snapshot lacks tensors {missing[:5]}{'...' if len(missing) > 5 else ''}")
        for name, param in self.named_parameters():
            param.assign(state[name][1])
        for name, buffer in self.named_buffers():
            value = state[name][1]
            if value.shape != buffer.shape:
                raise DataError(f"buffer '{name}' has shape {value.shape}, expected {buffer.shape}")
            buffer[...] = value

    def arch_graph(self, segments: int) -> ArchGraph:
        return build_backbone(
            "toynet",
            MODULE_VARIANTS[self.module],
            segments=segments,
            num_classes=self.num_classes,
            stages=self.stages,
            widths=self.widths,
            input_size=self.input_size,
            in_channels=self.in_channels,
            reduce_ratio=self.reduce_ratio,
        )

    def __repr__(self) -> str:
        return f"ToyNet(module={self.module!r}, widths={self.widths}, classes={self.num_classes}, stages={self.stages})"


def build_toynet(
    module: str = "none",
    channels: Sequence[int] = TOYNET_WIDTHS,
    num_classes: int = 4,
    stages: Optional[Iterable[str]] = None,
    seed: int = 0,
    in_channels: int = 1,
    input_size: int = 32,
    reduce_ratio: int = REDUCE_RATIO,
    dtype=np.float32,
    zero_gates: bool = True,
) -> ToyNet:
    return ToyNet(
        module=module,
        widths=channels,
        num_classes=num_classes,
        stages=stages,
        seed=seed,
        in_channels=in_channels,
        input_size=input_size,
        reduce_ratio=reduce_ratio,
        dtype=dtype,
        zero_gates=zero_gates,
    )


NET_FILE = "net.json"


def save_toynet(net: ToyNet, directory) -> Path:
    """Weight snapshot plus ``net.json`` holding the constructor arguments."""
    directory = Path(directory)
    save_snapshot(directory, net.state_tensors())
    spec = {
        "module": net.module,
        "widths": list(net.widths),
        "num_classes": net.num_classes,
        "stages": list(net.stages),
        "in_channels": net.in_channels,
        "input_size": net.input_size,
        "reduce_ratio": net.reduce_ratio,
        "dtype": net.dtype.name,
    }
    path = directory / NET_FILE
    try:
        path.write_text(json.dumps(spec, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return directory


def load_toynet(directory) -> ToyNet:
    directory = Path(directory)
    path = directory / NET_FILE
    try:
        spec = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from exc
    net = ToyNet(
        module=spec["module"],
        widths=spec["widths"],
        num_classes=spec["num_classes"],
        stages=spec["stages"],
        in_channels=spec["in_channels"],
        input_size=spec["input_size"],
        reduce_ratio=spec.get("reduce_ratio", REDUCE_RATIO),
        dtype=np.dtype(spec.get("dtype", "float32")),
    )
    net.load_state(load_snapshot(directory))
    return net.eval()
