import numpy as np
import pytest

from action_core.errors import ConfigError
from action_core.excitation import temporal_shift
from action_core.strategies import (
    MODULE_VARIANTS,
    ActionModule,
    CeModule,
    MeModule,
    NoTemporalModule,
    ShiftModule,
    SteModule,
    TemporalModule,
    create_temporal_module,
)
from action_core.tensor import Tensor


@pytest.mark.parametrize(
    "kind, cls",
    [("none", NoTemporalModule), ("shift", ShiftModule), ("ste", SteModule), ("ce", CeModule), ("me", MeModule), ("action", ActionModule)],
)
def test_factory_builds_each_kind(kind, cls):
    module = create_temporal_module(kind, 16, np.random.default_rng(0))
    assert isinstance(module, cls)
    assert isinstance(module, TemporalModule)
    assert module.kind == kind
    assert kind in MODULE_VARIANTS


def test_factory_is_case_insensitive_and_rejects_unknown():
    assert isinstance(create_temporal_module("ACTION", 16), ActionModule)
    with pytest.raises(ConfigError, match="unknown temporal module"):
        create_temporal_module("lstm", 16)


def test_parameter_free_modules():
    assert create_temporal_module("none", 8).named_parameters() == []
    assert create_temporal_module("shift", 8).named_parameters() == []


def test_none_is_identity_and_shift_matches_function(rng):
    x = Tensor(rng.standard_normal((1, 4, 8, 2, 2)))
    assert create_temporal_module("none", 8)(x) is x
    np.testing.assert_array_equal(create_temporal_module("shift", 8)(x).data, temporal_shift(x).data)


def test_weighted_module_sizes_follow_channels():
    me = create_temporal_module("me", 64, np.random.default_rng(1))
    shapes = {name: p.shape for name, p in me.named_parameters()}
    assert shapes["k1_squeeze"] == (4, 64, 1, 1)
    assert shapes["k_diff"] == (4, 1, 3, 3)
    assert shapes["k3_unsqueeze"] == (64, 4, 1, 1)


def test_dtype_is_respected():
    module = create_temporal_module("ce", 16, np.random.default_rng(2), dtype=np.float32)
    assert all(p.dtype == np.float32 for _, p in module.named_parameters())
