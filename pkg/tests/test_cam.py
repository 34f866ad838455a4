import numpy as np
import pytest

from action_core.cam import cam_export, cam_peaks, class_activation_maps, normalize_per_frame, tracking_hits
from action_core.errors import DataError, ShapeError
from action_core.tensor import Tensor
from action_core.tensor_io import read_tensor
from action_core.toynet import build_toynet


@pytest.fixture
def net():
    return build_toynet("action", (8, 16), input_size=16, seed=4)


def test_heatmap_shape_follows_feature_grid(net, tiny_dataset):
    clip = tiny_dataset.clip(0, 4)
    maps = class_activation_maps(net, clip, 1)
    assert maps.shape == (4, 4, 4)
    assert maps.dtype == np.float64


def test_heatmap_is_weighted_feature_sum(net, tiny_dataset):
    clip = tiny_dataset.clip(2, 4)
    feats = net.eval().features(Tensor(clip.data[None])).data[0].astype(np.float64)
    expected = np.tensordot(net.fc_weight.data[3].astype(np.float64), feats, axes=([0], [1]))
    np.testing.assert_allclose(class_activation_maps(net, clip, 3), expected, rtol=1e-10, atol=1e-12)


def test_zero_classifier_weights_give_zero_maps(net, tiny_dataset):
    net.fc_weight.assign(np.zeros_like(net.fc_weight.data))
    result = cam_export(net, tiny_dataset.clip(0, 4), 0)
    assert not result.raw.any()
    assert not result.normalized.any()


def test_normalize_per_frame():
    maps = np.stack([np.arange(4.0).reshape(2, 2), np.full((2, 2), 7.0)])
    normalized = normalize_per_frame(maps)
    np.testing.assert_allclose(normalized[0], [[0.0, 1 / 3], [2 / 3, 1.0]])
    np.testing.assert_array_equal(normalized[1], np.zeros((2, 2)))


def test_export_writes_tensors_and_images(net, tiny_dataset, tmp_path):
    result = cam_export(net, tiny_dataset.clip(0, 4), 2, tmp_path / "cam")
    names = sorted(p.name for p in result.files)
    assert names == ["cam.atnz", "cam_frame_00.pgm", "cam_frame_01.pgm", "cam_frame_02.pgm", "cam_frame_03.pgm", "cam_raw.atnz"]
    np.testing.assert_allclose(read_tensor(tmp_path / "cam" / "cam.atnz"), result.normalized, rtol=1e-6)
    pgm = (tmp_path / "cam" / "cam_frame_00.pgm").read_bytes()
    assert pgm.startswith(b"P5\n4 4\n255\n")
    assert len(pgm) == len(b"P5\n4 4\n255\n") + 16


def test_bad_class_and_clip_shape(net, tiny_dataset):
    clip = tiny_dataset.clip(0, 4)
    with pytest.raises(DataError):
        class_activation_maps(net, clip, 4)
    with pytest.raises(DataError):
        class_activation_maps(net, clip, -1)
    with pytest.raises(ShapeError):
        class_activation_maps(net, Tensor(clip.data[0]), 0)


def test_peaks_and_tracking():
    maps = np.zeros((2, 4, 4))
    maps[0, 1, 2] = 1.0
    maps[1, 3, 0] = 1.0
    peaks = cam_peaks(maps)
    np.testing.assert_array_equal(peaks, [[1, 2], [3, 0]])
    # cell (1, 2) sits over input pixel (5.5, 9.5) at a 4x downscale
    hits = tracking_hits(peaks, [(6.0, 10.0), (2.0, 14.0)], input_size=16, feature_size=4)
    assert hits.tolist() == [True, False]
    assert tracking_hits(peaks, [(6.0, 10.0), (2.0, 14.0)], 16, 4, radius=0.5).tolist() == [False, False]


def test_tracking_radius_is_in_input_pixels():
    # 8-pixel cells: a corner peak cannot cover the opposite corner
    peaks = np.array([[0, 0], [3, 3], [0, 3]])
    hits = tracking_hits(peaks, [(31.0, 31.0), (31.0, 31.0), (3.0, 24.0)], input_size=32, feature_size=4)
    assert hits.tolist() == [False, True, True]
