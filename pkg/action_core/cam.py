"""Class activation maps from the final feature maps of a ToyNet."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from .errors import DataError, IoError, ShapeError
from .tensor import Tensor, no_grad
from .tensor_io import write_tensor
from .toynet import ToyNet

logger = logging.getLogger(__name__)


@dataclass
class CamResult:
    raw: np.ndarray
    normalized: np.ndarray
    class_index: int
    files: List[Path] = field(default_factory=list)


def normalize_per_frame(maps: np.ndarray) -> np.ndarray:
    """Min-max scale each frame to [0, 1]; a constant frame maps to zeros."""
    low = maps.min(axis=(1, 2), keepdims=True)
    span = maps.max(axis=(1, 2), keepdims=True) - low
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (maps - low) / safe, 0.0)


def write_pgm(path: Union[str, Path], image: np.ndarray) -> Path:
    """8-bit binary PGM of a [0, 1] image."""
    path = Path(path)
    pixels = np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    height, width = pixels.shape
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(f"P5\n{width} {height}\n255\n".encode("ascii") + pixels.tobytes())
    except OSError as exc:
        raise IoError(f"cannot write image {path}: {exc}") from exc
    return path


def class_activation_maps(net: ToyNet, clip: Tensor, class_index: int) -> np.ndarray:
    """Raw heatmaps (T, h, w): the class's classifier weights applied to every feature map."""
    if not 0 <= class_index < net.num_classes:
        raise DataError(f"class {class_index} outside [0, {net.num_classes})")
    if clip.ndim != 4:
        raise ShapeError(f"clip must be (T, C, H, W), got {clip.shape}")
    was_training = net.training
    net.eval()
    try:
        with no_grad():
            feats = net.features(Tensor(clip.data[None])).data[0]
    finally:
        net.training = was_training
    weights = net.fc_weight.data[class_index].astype(np.float64)
    return np.einsum("c,tchw->thw", weights, feats.astype(np.float64))


def cam_export(
    net: ToyNet,
    clip: Tensor,
    class_index: int,
    out_dir: Optional[Union[str, Path]] = None,
) -> CamResult:
    """Heatmaps for one clip; with ``out_dir`` also ATNZ tensors and one PGM per frame."""
    raw = class_activation_maps(net, clip, class_index)
    result = CamResult(raw=raw, normalized=normalize_per_frame(raw), class_index=class_index)
    if out_dir is not None:
        out = Path(out_dir)
        result.files.append(write_tensor(out / "cam_raw.atnz", raw))
        result.files.append(write_tensor(out / "cam.atnz", result.normalized))
        for t, frame in enumerate(result.normalized):
            result.files.append(write_pgm(out / f"cam_frame_{t:02d}.pgm", frame))
        logger.info("[CAM] class %d: %d frames of %dx%d written to %s", class_index, raw.shape[0], raw.shape[1], raw.shape[2], out)
    return result


def cam_peaks(heatmaps: np.ndarray) -> np.ndarray:
    """(row, col) of each frame's maximum, shape (T, 2)."""
    frames, height, width = heatmaps.shape
    flat = heatmaps.reshape(frames, -1).argmax(axis=1)
    return np.stack([flat // width, flat % width], axis=1)


def tracking_hits(
    peaks: np.ndarray,
    positions: Sequence[Sequence[float]],
    input_size: int,
    feature_size: int,
    radius: float = 5.0,
) -> np.ndarray:
    """Whether each frame's peak lies within ``radius`` input pixels of the object.

    ``positions`` are (row, col) in input pixels; each peak cell is placed at
    the input pixel under its centre.
    """
    scale = input_size / feature_size
    peak_pixels = (peaks.astype(np.float64) + 0.5) * scale - 0.5
    distance = np.linalg.norm(peak_pixels - np.asarray(positions, dtype=np.float64), axis=1)
    return distance <= radius
