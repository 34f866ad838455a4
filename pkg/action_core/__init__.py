"""Temporal excitation toolkit: autodiff core, excitation paths, cost model, synthetic data and a toy classifier."""

from .errors import ActionKitError, ConfigError, DataError, DomainError, IoError, NumericError, ShapeError
from .tensor import Parameter, Tensor, no_grad
from .excitation import (
    ActionWeights,
    CeWeights,
    MeWeights,
    SteWeights,
    action_forward,
    ce_forward,
    me_forward,
    motion_feature,
    segment_consensus,
    ste_forward,
    temporal_shift,
)
from .strategies import TemporalModule, create_temporal_module
from .gradcheck import GradCheckRecord, grad_check, run_gradcheck_suite
from .backbones import ArchGraph, LayerSpec, build_backbone
from .cost import CostConvention, CostReport, count_cost, delta_report, efficiency
from .dataset import ClipDataset, gen_direction_dataset, load_dataset, save_dataset, tsn_sample
from .toynet import ToyNet, build_toynet, load_toynet, save_toynet
from .training import evaluate, train
from .cam import cam_export, class_activation_maps
from .config import NetConfig, RunConfig, SynthConfig, TrainConfig
from .metrics import TrainingMetrics
from .facade import ExperimentRunner

__all__ = [
    "ActionKitError",
    "ConfigError",
    "DataError",
    "DomainError",
    "IoError",
    "NumericError",
    "ShapeError",
    "Parameter",
    "Tensor",
    "no_grad",
    "ActionWeights",
    "CeWeights",
    "MeWeights",
    "SteWeights",
    "action_forward",
    "ce_forward",
    "me_forward",
    "motion_feature",
    "segment_consensus",
    "ste_forward",
    "temporal_shift",
    "TemporalModule",
    "create_temporal_module",
    "GradCheckRecord",
    "grad_check",
    "run_gradcheck_suite",
    "ArchGraph",
    "LayerSpec",
    "build_backbone",
    "CostConvention",
    "CostReport",
    "count_cost",
    "delta_report",
    "efficiency",
    "ClipDataset",
    "gen_direction_dataset",
    "load_dataset",
    "save_dataset",
    "tsn_sample",
    "ToyNet",
    "build_toynet",
    "load_toynet",
    "save_toynet",
    "evaluate",
    "train",
    "cam_export",
    "class_activation_maps",
    "NetConfig",
    "RunConfig",
    "SynthConfig",
    "TrainConfig",
    "TrainingMetrics",
    "ExperimentRunner",
]
