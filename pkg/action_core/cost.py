"""Analytic multiply-accumulate and parameter counts over architecture graphs."""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, List, Optional, Tuple

from .backbones import ArchGraph, LayerSpec, build_backbone, site_layers
from .errors import ConfigError, DomainError, ShapeError
from .excitation import REDUCE_RATIO

logger = logging.getLogger(__name__)

GIGA = 1e9
MEGA = 1e6

# Published (FLOPs G, params M, top-1 %) on the 83-class gesture benchmark, T=8.
PUBLISHED_TABLE3 = {
    "tsn": (33.0, 23.68, 83.1),
    "tsm": (33.0, 23.68, 92.1),
    "ste": (33.1, 23.9, 93.8),
    "ce": (33.16, 26.08, 93.8),
    "me": (34.69, 25.9, 93.9),
    "action": (34.75, 28.08, 94.2),
}
PUBLISHED_TABLE4 = {
    ("resnet50", "tsm"): (33.0, 23.68, 92.1),
    ("resnet50", "action"): (34.75, 28.08, 94.2),
    ("mobilenet_v2", "tsm"): (2.55, 2.33, 92.4),
    ("mobilenet_v2", "action"): (2.57, 2.36, 93.5),
}


@dataclass(frozen=True)
class CostConvention:
    """Which backbone arithmetic is counted.

    ``reported`` adds batch-norm, activation and residual-add arithmetic at one
    MAC per output element and pooling at one MAC per input element.
    ``strict`` counts only convolutions, the classifier and excitation
    arithmetic. Excitation arithmetic is counted the same way in both.
    """

    name: str = "reported"

    def __post_init__(self):
        if self.name not in ("reported", "strict"):
            raise ConfigError(f"unknown cost convention '{self.name}', expected 'reported' or 'strict'")

    @property
    def counts_backbone_arithmetic(self) -> bool:
        return self.name == "reported"


def layer_params(layer: LayerSpec) -> int:
    if layer.kind.startswith("conv"):
        weights = layer.c_out * (layer.c_in // layer.groups) * math.prod(layer.kernel)
        return weights + (layer.c_out if layer.bias else 0)
    if layer.kind == "fc":
        return layer.c_in * layer.c_out + (layer.c_out if layer.bias else 0)
    if layer.kind == "batchnorm":
        return 2 * layer.c_out
    return 0


def layer_macs(layer: LayerSpec, convention: CostConvention = CostConvention()) -> int:
    if layer.kind.startswith("conv"):
        per_run = layer.c_out * (layer.c_in // layer.groups) * math.prod(layer.kernel) * math.prod(layer.out_extent)
        return per_run * layer.frames
    if layer.kind == "fc":
        return layer.c_in * layer.c_out * layer.frames
    if layer.kind in ("elementwise", "activation", "batchnorm", "pool"):
        if layer.is_excitation or convention.counts_backbone_arithmetic:
            return layer.elements * layer.frames
        return 0
    if layer.kind in ("shift", "consensus"):
        return 0
    raise ShapeError(f"{layer.name}: no cost rule for layer kind '{layer.kind}'")


@dataclass(frozen=True)
class StageCost:
    stage: str
    macs: int
    params: int


@dataclass(frozen=True)
class CostReport:
    macs: int
    params: int
    per_stage: Tuple[StageCost, ...] = ()

    def __post_init__(self):
        if self.macs < 0 or self.params < 0:
            raise ShapeError(f"costs must be non-negative, got macs={self.macs}, params={self.params}")
        if self.per_stage:
            if sum(s.macs for s in self.per_stage) != self.macs or sum(s.params for s in self.per_stage) != self.params:
                raise ShapeError("per-stage breakdown does not sum to the totals")

    @property
    def macs_g(self) -> float:
        return self.macs / GIGA

    @property
    def params_m(self) -> float:
        return self.params / MEGA

    @classmethod
    def from_published(cls, flops_g: float, params_m: float) -> "CostReport":
        return cls(macs=round(flops_g * GIGA), params=round(params_m * MEGA))

    def to_dict(self) -> Dict:
        return {
            "macs": self.macs,
            "params": self.params,
            "macs_g": self.macs_g,
            "params_m": self.params_m,
            "per_stage": [asdict(stage) for stage in self.per_stage],
        }


def _report(layers: Iterable[LayerSpec], convention: CostConvention) -> CostReport:
    stages: Dict[str, List[int]] = {}
    for layer in layers:
        totals = stages.setdefault(layer.stage, [0, 0])
        totals[0] += layer_macs(layer, convention)
        totals[1] += layer_params(layer)
    per_stage = tuple(StageCost(stage, macs, params) for stage, (macs, params) in stages.items())
    return CostReport(
        macs=sum(s.macs for s in per_stage),
        params=sum(s.params for s in per_stage),
        per_stage=per_stage,
    )


def count_cost(graph: ArchGraph, convention: CostConvention = CostConvention()) -> CostReport:
    report = _report(graph.layers, convention)
    logger.debug(
        "[Cost] %s/%s T=%d: %.3f G MACs, %.3f M params",
        graph.backbone, graph.variant, graph.segments, report.macs_g, report.params_m,
    )
    return report


def site_cost(
    variant: str,
    channels: int,
    height: int,
    width: int,
    segments: int,
    convention: CostConvention = CostConvention(),
    reduce_ratio: int = REDUCE_RATIO,
) -> CostReport:
    """Cost of one inserted module on a (T, C, H, W) clip, in isolation."""
    return _report(site_layers(variant, channels, height, width, segments, reduce_ratio, stage="site"), convention)


# -- deltas and efficiency --------------------------------------------------


def efficiency(delta_flops_pct: float, delta_top1_pct: float) -> float:
    """Extra FLOPs percent paid per point of top-1 gained; smaller is better."""
    if delta_top1_pct == 0:
        raise DomainError("efficiency is undefined for a zero top-1 change")
    return delta_flops_pct / delta_top1_pct


@dataclass(frozen=True)
class DeltaReport:
    dflops_g: float
    dflops_pct: float
    dparams_m: float
    dtop1: Optional[float] = None
    eta: Optional[float] = None

    def to_dict(self) -> Dict:
        return asdict(self)


def delta_report(
    base: CostReport,
    variant: CostReport,
    base_top1: Optional[float] = None,
    variant_top1: Optional[float] = None,
) -> DeltaReport:
    dflops = variant.macs - base.macs
    dflops_pct = 100.0 * dflops / base.macs if base.macs else 0.0
    dtop1 = None
    eta = None
    if base_top1 is not None and variant_top1 is not None:
        dtop1 = variant_top1 - base_top1
        if dtop1 != 0:
            eta = efficiency(dflops_pct, dtop1)
    return DeltaReport(
        dflops_g=dflops / GIGA,
        dflops_pct=dflops_pct,
        dparams_m=(variant.params - base.params) / MEGA,
        dtop1=dtop1,
        eta=eta,
    )


# -- published-table comparisons --------------------------------------------


def _table_row(
    backbone: str,
    variant: str,
    published: Tuple[float, float, float],
    reference: Tuple[float, float, float],
    analytic_base: CostReport,
    segments: int,
    num_classes: int,
    convention: CostConvention,
) -> Dict:
    graph = build_backbone(backbone, variant, segments=segments, num_classes=num_classes)
    analytic = count_cost(graph, convention)
    flops_g, params_m, top1 = published
    published_delta = delta_report(
        CostReport.from_published(reference[0], reference[1]),
        CostReport.from_published(flops_g, params_m),
        reference[2],
        top1,
    )
    return {
        "backbone": backbone,
        "variant": variant,
        "sites": len(graph.sites),
        "macs_g": analytic.macs_g,
        "params_m": analytic.params_m,
        "analytic_deltas": delta_report(analytic_base, analytic).to_dict(),
        "published": {"flops_g": flops_g, "params_m": params_m, "top1": top1},
        "published_deltas": published_delta.to_dict(),
    }


def table3_report(segments: int = 8, num_classes: int = 83, convention: CostConvention = CostConvention()) -> List[Dict]:
    """Six ResNet-50 rows: analytic counts beside the published ones.

    Analytic deltas are against the TSN graph; published deltas and eta are
    against the published TSM row, the baseline accuracy gains are quoted from.
    """
    base = count_cost(build_backbone("resnet50", "tsn", segments=segments, num_classes=num_classes), convention)
    rows = [
        _table_row("resnet50", variant, published, PUBLISHED_TABLE3["tsm"], base, segments, num_classes, convention)
        for variant, published in PUBLISHED_TABLE3.items()
    ]
    logger.info("[Cost] table3: %s", ", ".join(f"{r['variant']}={r['macs_g']:.2f}G" for r in rows))
    return rows


def table4_report(segments: int = 8, num_classes: int = 83, convention: CostConvention = CostConvention()) -> List[Dict]:
    """TSM and ACTION rows for ResNet-50 and MobileNet V2."""
    rows = []
    for backbone in ("resnet50", "mobilenet_v2"):
        base = count_cost(build_backbone(backbone, "tsm", segments=segments, num_classes=num_classes), convention)
        reference = PUBLISHED_TABLE4[(backbone, "tsm")]
        for variant in ("tsm", "action"):
            published = PUBLISHED_TABLE4[(backbone, variant)]
            rows.append(_table_row(backbone, variant, published, reference, base, segments, num_classes, convention))
    return rows
