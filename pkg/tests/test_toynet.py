import numpy as np
import pytest

from action_core.cost import count_cost
from action_core.dataset import segment_indices
from action_core.errors import ConfigError, DataError, ShapeError
from action_core.tensor import Tensor, no_grad
from action_core.toynet import ToyNet, build_toynet, load_toynet, save_toynet


def _clips(rng, n=2, t=4, size=16):
    return Tensor(rng.standard_normal((n, t, 1, size, size)))


@pytest.mark.parametrize("module", ["none", "shift", "ste", "ce", "me", "action"])
def test_parameter_count_matches_cost_model(module):
    net = build_toynet(module, (16, 32, 64), num_classes=4)
    assert net.num_parameters() == count_cost(net.arch_graph(8)).params


def test_parameter_count_with_stage_subset():
    net = build_toynet("action", (16, 32), num_classes=3, stages=["stage2"], in_channels=3, input_size=24)
    assert net.stages == ("stage2",)
    assert net.num_parameters() == count_cost(net.arch_graph(4)).params


def test_forward_shapes(rng):
    net = build_toynet("action", (8, 16), num_classes=4, input_size=16)
    x = _clips(rng)
    assert net.features(x).shape == (2, 4, 16, 4, 4)
    assert net.segment_logits(x).shape == (2, 4, 4)
    assert net(x).shape == (2, 4)


def test_input_validation(rng):
    net = build_toynet("none", (8,), input_size=16)
    with pytest.raises(ShapeError):
        net(Tensor(np.ones((2, 1, 16, 16))))
    with pytest.raises(ShapeError):
        net(Tensor(np.ones((1, 2, 3, 16, 16))))


def test_constructor_validation():
    with pytest.raises(ConfigError):
        ToyNet("lstm")
    with pytest.raises(ConfigError):
        ToyNet("action", widths=(8, 0))
    with pytest.raises(ConfigError):
        ToyNet("action", stages=["stage7"])
    with pytest.raises(ConfigError):
        ToyNet("action", num_classes=0)


def test_blind_network_ignores_segment_order(rng):
    net = build_toynet("none", (8, 16), input_size=16, dtype=np.float64).eval()
    x = _clips(rng, n=1, t=6)
    with no_grad():
        forward = net(x).data
        reversed_out = net(Tensor(x.data[:, ::-1])).data
        shuffled = net(Tensor(x.data[:, rng.permutation(6)])).data
    np.testing.assert_allclose(forward, reversed_out, rtol=0, atol=1e-12)
    np.testing.assert_allclose(forward, shuffled, rtol=0, atol=1e-12)


def test_blind_network_gives_reversal_partners_equal_logits(tiny_dataset):
    net = build_toynet("none", (8, 16), input_size=16, dtype=np.float64).eval()
    # sample 0 of class 0 and of class 1 are exact reversals of each other
    indices = segment_indices(16, 4)
    left = tiny_dataset.videos[0].frames[indices]
    right = tiny_dataset.videos[3].frames[(15 - indices)[::-1]]
    np.testing.assert_array_equal(right, left[::-1])
    with no_grad():
        a = net(Tensor(left[None], dtype=np.float64)).data
        b = net(Tensor(right[None], dtype=np.float64)).data
    np.testing.assert_array_equal(a, b)


def test_action_network_distinguishes_reversed_clips(rng):
    net = build_toynet("action", (8, 16), input_size=16, dtype=np.float64, zero_gates=False).eval()
    x = _clips(rng, n=1, t=4)
    with no_grad():
        forward = net(x).data
        reversed_out = net(Tensor(x.data[:, ::-1])).data
    assert np.abs(forward - reversed_out).max() > 1e-8


def test_save_and_load_restores_outputs(tmp_path, rng):
    net = build_toynet("action", (8, 16), input_size=16, zero_gates=False, seed=3)
    net(_clips(rng))  # update running statistics
    net.eval()
    save_toynet(net, tmp_path)
    loaded = load_toynet(tmp_path)
    assert loaded.module == "action" and loaded.widths == (8, 16)
    assert not loaded.training
    x = _clips(rng)
    with no_grad():
        np.testing.assert_allclose(loaded(x).data, net(x).data, rtol=1e-5, atol=1e-6)


def test_load_state_reports_missing_tensors():
    net = build_toynet("none", (8,))
    with pytest.raises(DataError, match="lacks tensors"):
        net.load_state({})


def test_named_parameters_are_unique_and_prefixed():
    names = [name for name, _ in build_toynet("ce", (16, 32)).named_parameters()]
    assert len(names) == len(set(names))
    assert "stage1.module.k2_temporal" in names
    assert names[-2:] == ["fc.weight", "fc.bias"]


def test_parameter_groups_split_temporal_modules():
    net = build_toynet("action", (8, 16), stages=["stage2"])
    backbone, temporal = net.parameter_groups()
    assert len(backbone) + len(temporal) == len(net.parameters())
    assert len(temporal) == 14
    assert build_toynet("shift", (8, 16)).parameter_groups()[1] == []
    with pytest.raises(ConfigError):
        ToyNet("action", reduce_ratio=0)
