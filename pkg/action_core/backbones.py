"""Layer-level architecture graphs for ResNet-50, MobileNet V2 and the toy network.

Builders thread a small cursor (channels, spatial extent, stage) through each
block and append one :class:`LayerSpec` per primitive, so the cost model is a
plain sum over the graph.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .errors import ConfigError, ShapeError
from .excitation import REDUCE_RATIO, reduced_channels

BACKBONES = ("resnet50", "mobilenet_v2", "toynet")
VARIANTS = ("tsn", "tsm", "ste", "ce", "me", "action")
EXCITATION_PATHS = ("ste", "ce", "me")

RESNET50_STAGES = ("res2", "res3", "res4", "res5")
# (blocks, bottleneck width, stride of the first block)
RESNET50_LAYOUT = ((3, 64, 1), (4, 128, 2), (6, 256, 2), (3, 512, 2))

MOBILENET_V2_STAGES = ("stage2", "stage3", "stage4", "stage5")
# (expansion, output channels, repeats, stride of the first repeat)
MOBILENET_V2_LAYOUT = (
    (1, 16, 1, 1),
    (6, 24, 2, 2),
    (6, 32, 3, 2),
    (6, 64, 4, 2),
    (6, 96, 3, 1),
    (6, 160, 3, 2),
    (6, 320, 1, 1),
)
MOBILENET_V2_RESOLUTION_STAGES = {112: "stage1", 56: "stage2", 28: "stage3", 14: "stage4", 7: "stage5"}

TOYNET_WIDTHS = (16, 32, 64)

Extent = Tuple[int, ...]


@dataclass(frozen=True)
class LayerSpec:
    """One primitive of an architecture graph.

    ``frames`` is how many times the primitive runs per clip: per-frame layers
    run T times, while temporal convs see the whole clip once. ``elements`` is
    the per-run element count for elementwise, activation and pool layers.
    """

    kind: str
    name: str
    stage: str
    c_in: int
    c_out: int
    in_extent: Extent = ()
    out_extent: Extent = ()
    kernel: Extent = ()
    stride: Extent = ()
    pad: Extent = ()
    groups: int = 1
    bias: bool = False
    frames: int = 1
    elements: int = 0
    op: str = ""
    site: int = -1
    path: str = ""

    def __post_init__(self):
        if self.c_in < 1 or self.c_out < 1:
            raise ShapeError(f"{self.name}: channel counts must be >= 1, got {self.c_in}->{self.c_out}")
        if self.kind.startswith("conv"):
            if self.c_in % self.groups or self.c_out % self.groups:
                raise ShapeError(f"{self.name}: channels {self.c_in}->{self.c_out} not divisible by groups={self.groups}")
            for n, k, s, p, o in zip(self.in_extent, self.kernel, self.stride, self.pad, self.out_extent):
                if o != (n + 2 * p - k) // s + 1:
                    raise ShapeError(f"{self.name}: output extent {self.out_extent} inconsistent with input {self.in_extent}")

    @property
    def is_excitation(self) -> bool:
        return bool(self.path)


@dataclass(frozen=True)
class ArchGraph:
    backbone: str
    variant: str
    stages: Tuple[str, ...]
    num_classes: int
    segments: int
    input_spec: Tuple[int, int, int, int]
    layers: Tuple[LayerSpec, ...] = field(repr=False)

    @property
    def sites(self) -> Tuple[int, ...]:
        return tuple(sorted({layer.site for layer in self.layers if layer.site >= 0}))

    @property
    def excitation_sites(self) -> Tuple[int, ...]:
        return tuple(sorted({layer.site for layer in self.layers if layer.site >= 0 and layer.is_excitation}))

    @property
    def shift_sites(self) -> Tuple[int, ...]:
        return tuple(sorted({layer.site for layer in self.layers if layer.kind == "shift"}))

    def site_channels(self) -> Dict[int, int]:
        """Input channel count of every insertion site."""
        return {layer.site: layer.c_in for layer in self.layers if layer.site >= 0}

    def validate(self) -> "ArchGraph":
        heads = [layer for layer in self.layers if layer.kind == "fc"]
        if len(heads) != 1:
            raise ShapeError(f"{self.backbone}: expected exactly one classifier head, found {len(heads)}")
        if not self.layers or self.layers[-1].kind != "consensus":
            raise ShapeError(f"{self.backbone}: the consensus layer must come last")
        if heads[0].c_out != self.num_classes:
            raise ShapeError(f"head produces {heads[0].c_out} classes, graph declares {self.num_classes}")
        return self


def _conv_out(n: int, k: int, s: int, p: int) -> int:
    return (n + 2 * p - k) // s + 1


class _GraphBuilder:
    """Cursor over (channels, height, width) appending per-frame layers."""

    def __init__(self, segments: int, channels: int, size: int, reduce_ratio: int):
        self.segments = segments
        self.c = channels
        self.h = size
        self.w = size
        self.reduce_ratio = reduce_ratio
        self.stage = "stem"
        self.layers: List[LayerSpec] = []
        self._next_site = 0

    @property
    def hw(self) -> int:
        return self.h * self.w

    def conv(self, name: str, c_out: int, k: int, stride: int = 1, pad: int = 0, groups: int = 1, bias: bool = False) -> None:
        h, w = _conv_out(self.h, k, stride, pad), _conv_out(self.w, k, stride, pad)
        self.layers.append(
            LayerSpec(
                "conv2d", name, self.stage, self.c, c_out,
                in_extent=(self.h, self.w), out_extent=(h, w), kernel=(k, k), stride=(stride, stride),
                pad=(pad, pad), groups=groups, bias=bias, frames=self.segments,
            )
        )
        self.c, self.h, self.w = c_out, h, w

    def bn(self, name: str) -> None:
        self.layers.append(
            LayerSpec("batchnorm", name, self.stage, self.c, self.c, (self.h, self.w), (self.h, self.w),
                      frames=self.segments, elements=self.c * self.hw)
        )

    def act(self, name: str, op: str = "relu") -> None:
        self.layers.append(
            LayerSpec("activation", name, self.stage, self.c, self.c, (self.h, self.w), (self.h, self.w),
                      frames=self.segments, elements=self.c * self.hw, op=op)
        )

    def residual_add(self, name: str) -> None:
        self.layers.append(
            LayerSpec("elementwise", name, self.stage, self.c, self.c, (self.h, self.w), (self.h, self.w),
                      frames=self.segments, elements=self.c * self.hw, op="residual")
        )

    def pool(self, name: str, k: int, stride: int, pad: int, op: str = "max") -> None:
        h, w = _conv_out(self.h, k, stride, pad), _conv_out(self.w, k, stride, pad)
        self.layers.append(
            LayerSpec("pool", name, self.stage, self.c, self.c, (self.h, self.w), (h, w), kernel=(k, k),
                      stride=(stride, stride), pad=(pad, pad), frames=self.segments, elements=self.c * self.hw, op=op)
        )
        self.h, self.w = h, w

    def global_pool(self, name: str) -> None:
        self.layers.append(
            LayerSpec("pool", name, self.stage, self.c, self.c, (self.h, self.w), (1, 1),
                      frames=self.segments, elements=self.c * self.hw, op="avg")
        )
        self.h = self.w = 1

    def head(self, num_classes: int) -> None:
        self.stage = "head"
        self.layers.append(LayerSpec("fc", "fc", "head", self.c, num_classes, bias=True, frames=self.segments))
        self.layers.append(
            LayerSpec("consensus", "consensus", "head", num_classes, num_classes, frames=1,
                      elements=self.segments * num_classes, op="mean")
        )

    def site(self, name: str, variant: str, enabled: bool) -> None:
        """Insert the variant's temporal module on the current tensor."""
        if not enabled or variant == "tsn":
            return
        layers = site_layers(variant, self.c, self.h, self.w, self.segments, self.reduce_ratio,
                             stage=self.stage, site=self._next_site, prefix=name)
        self.layers.extend(layers)
        self._next_site += 1


def site_layers(
    variant: str,
    channels: int,
    height: int,
    width: int,
    segments: int,
    reduce_ratio: int = REDUCE_RATIO,
    stage: str = "",
    site: int = 0,
    prefix: str = "site",
) -> List[LayerSpec]:
    """Primitive layers of one inserted temporal module on a (T, C, H, W) clip."""
    variant = variant.lower()
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant '{variant}', expected one of {VARIANTS}")
    c, h, w, t = channels, height, width, segments
    if variant == "tsn":
        return []
    if variant == "tsm":
        return [LayerSpec("shift", f"{prefix}.shift", stage, c, c, (h, w), (h, w), frames=t, site=site)]

    cr = reduced_channels(c, reduce_ratio)
    paths = EXCITATION_PATHS if variant == "action" else (variant,)
    layers: List[LayerSpec] = []
    for path in paths:
        p = f"{prefix}.{path}"

        def conv(name, c_in, c_out, in_extent, kernel, pad, groups=1, frames=t, kind="conv2d"):
            out = tuple(_conv_out(n, k, 1, q) for n, k, q in zip(in_extent, kernel, pad))
            return LayerSpec(kind, f"{p}.{name}", stage, c_in, c_out, in_extent, out, kernel,
                             (1,) * len(kernel), pad, groups, True, frames, site=site, path=path)

        def ew(op, ch, eh=h, ewd=w):
            return LayerSpec("elementwise", f"{p}.{op}", stage, ch, ch, (eh, ewd), (eh, ewd), frames=t,
                             elements=ch * eh * ewd, op=op, site=site, path=path)

        if path == "ste":
            layers += [
                ew("channel_mean", c),
                conv("k3d", 1, 1, (t, h, w), (3, 3, 3), (1, 1, 1), frames=1, kind="conv3d"),
                ew("sigmoid", 1),
                ew("mask", c),
            ]
        elif path == "ce":
            layers += [
                ew("spatial_mean", c),
                conv("k1_squeeze", c, cr, (1, 1), (1, 1), (0, 0)),
                conv("k2_temporal", cr, cr, (t,), (3,), (1,), frames=1, kind="conv1d"),
                conv("k3_unsqueeze", cr, c, (1, 1), (1, 1), (0, 0)),
                ew("sigmoid", c, 1, 1),
                ew("mask", c),
            ]
        else:
            layers += [
                conv("k1_squeeze", c, cr, (h, w), (1, 1), (0, 0)),
                conv("k_diff", cr, cr, (h, w), (3, 3), (1, 1), groups=cr),
                ew("difference", cr),
                ew("spatial_mean", cr),
                conv("k3_unsqueeze", cr, c, (1, 1), (1, 1), (0, 0)),
                ew("sigmoid", c, 1, 1),
                ew("mask", c),
            ]
    if variant == "action":
        layers.append(
            LayerSpec("elementwise", f"{prefix}.aggregate", stage, c, c, (h, w), (h, w), frames=t,
                      elements=2 * c * h * w, op="aggregate", site=site, path="action")
        )
    return layers


def _check_stages(requested: Optional[Iterable[str]], legal: Sequence[str]) -> Tuple[str, ...]:
    if requested is None:
        return tuple(legal)
    chosen = tuple(dict.fromkeys(s.strip().lower() for s in requested if s.strip()))
    unknown = [s for s in chosen if s not in legal]
    if unknown:
        raise ConfigError(f"unknown stage(s) {unknown}, legal stages are {list(legal)}")
    return tuple(s for s in legal if s in chosen)


def _resnet50(b: _GraphBuilder, variant: str, stages: Tuple[str, ...]) -> None:
    b.conv("conv1", 64, 7, stride=2, pad=3)
    b.bn("bn1")
    b.act("relu1")
    b.pool("maxpool", 3, 2, 1)
    for stage, (blocks, width, first_stride) in zip(RESNET50_STAGES, RESNET50_LAYOUT):
        b.stage = stage
        for index in range(blocks):
            name = f"{stage}.b{index + 1}"
            stride = first_stride if index == 0 else 1
            b.site(name, variant, stage in stages)
            c_in, h_in, w_in = b.c, b.h, b.w
            b.conv(f"{name}.conv1", width, 1)
            b.bn(f"{name}.bn1")
            b.act(f"{name}.relu1")
            b.conv(f"{name}.conv2", width, 3, stride=stride, pad=1)
            b.bn(f"{name}.bn2")
            b.act(f"{name}.relu2")
            b.conv(f"{name}.conv3", 4 * width, 1)
            b.bn(f"{name}.bn3")
            if index == 0:
                main = (b.c, b.h, b.w)
                b.c, b.h, b.w = c_in, h_in, w_in
                b.conv(f"{name}.downsample", 4 * width, 1, stride=stride)
                b.bn(f"{name}.downsample_bn")
                if (b.c, b.h, b.w) != main:
                    raise ShapeError(f"{name}: shortcut {(b.c, b.h, b.w)} does not match main branch {main}")
            b.residual_add(f"{name}.add")
            b.act(f"{name}.relu3")
    b.global_pool("avgpool")


def _mobilenet_v2(b: _GraphBuilder, variant: str, stages: Tuple[str, ...]) -> None:
    b.conv("conv_stem", 32, 3, stride=2, pad=1)
    b.bn("bn_stem")
    b.act("relu6_stem", op="relu6")
    block = 0
    for expansion, c_out, repeats, first_stride in MOBILENET_V2_LAYOUT:
        for index in range(repeats):
            stride = first_stride if index == 0 else 1
            out_size = _conv_out(b.h, 3, stride, 1)
            b.stage = MOBILENET_V2_RESOLUTION_STAGES.get(out_size, f"{out_size}px")
            name = f"block{block}"
            identity = stride == 1 and b.c == c_out
            if identity:
                b.site(name, variant, b.stage in stages)
            hidden = b.c * expansion
            if expansion != 1:
                b.conv(f"{name}.expand", hidden, 1)
                b.bn(f"{name}.expand_bn")
                b.act(f"{name}.expand_relu6", op="relu6")
            b.conv(f"{name}.depthwise", hidden, 3, stride=stride, pad=1, groups=hidden)
            b.bn(f"{name}.depthwise_bn")
            b.act(f"{name}.depthwise_relu6", op="relu6")
            b.conv(f"{name}.project", c_out, 1)
            b.bn(f"{name}.project_bn")
            if identity:
                b.residual_add(f"{name}.add")
            block += 1
    b.stage = "stage5"
    b.conv("conv_last", 1280, 1)
    b.bn("bn_last")
    b.act("relu6_last", op="relu6")
    b.global_pool("avgpool")


def _toynet(b: _GraphBuilder, variant: str, stages: Tuple[str, ...], widths: Sequence[int]) -> None:
    b.conv("stem.conv", widths[0], 3, stride=2, pad=1)
    b.bn("stem.bn")
    b.act("stem.relu")
    for index, width in enumerate(widths):
        b.stage = f"stage{index + 1}"
        b.site(b.stage, variant, b.stage in stages)
        b.conv(f"{b.stage}.conv", width, 3, stride=1 if index == 0 else 2, pad=1)
        b.bn(f"{b.stage}.bn")
        b.act(f"{b.stage}.relu")
    b.global_pool("avgpool")


def legal_stages(backbone: str, widths: Optional[Sequence[int]] = None) -> Tuple[str, ...]:
    if backbone == "resnet50":
        return RESNET50_STAGES
    if backbone == "mobilenet_v2":
        return MOBILENET_V2_STAGES
    if backbone == "toynet":
        return tuple(f"stage{i + 1}" for i in range(len(widths or TOYNET_WIDTHS)))
    raise ConfigError(f"unknown backbone '{backbone}', expected one of {BACKBONES}")


def build_backbone(
    backbone: str,
    variant: str,
    segments: int = 8,
    num_classes: int = 83,
    stages: Optional[Iterable[str]] = None,
    widths: Optional[Sequence[int]] = None,
    input_size: Optional[int] = None,
    in_channels: Optional[int] = None,
    reduce_ratio: int = REDUCE_RATIO,
) -> ArchGraph:
    """Layer graph of ``backbone`` with ``variant``'s module at every site of ``stages``.

    ``stages=None`` selects every legal stage.
    """
    backbone = backbone.lower()
    variant = variant.lower()
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant '{variant}', expected one of {VARIANTS}")
    if segments < 1 or num_classes < 1:
        raise ConfigError(f"segments and class count must be >= 1, got T={segments}, CLS={num_classes}")
    chosen = _check_stages(stages, legal_stages(backbone, widths))

    if backbone == "toynet":
        widths = tuple(widths or TOYNET_WIDTHS)
        if any(w < 1 for w in widths):
            raise ConfigError(f"toy widths must be >= 1, got {widths}")
        size, channels = input_size or 32, in_channels or 1
    else:
        size, channels = input_size or 224, in_channels or 3

    builder = _GraphBuilder(segments, channels, size, reduce_ratio)
    if backbone == "resnet50":
        _resnet50(builder, variant, chosen)
    elif backbone == "mobilenet_v2":
        _mobilenet_v2(builder, variant, chosen)
    else:
        _toynet(builder, variant, chosen, widths)
    builder.head(num_classes)

    return ArchGraph(
        backbone=backbone,
        variant=variant,
        stages=chosen,
        num_classes=num_classes,
        segments=segments,
        input_spec=(segments, channels, size, size),
        layers=tuple(builder.layers),
    ).validate()
