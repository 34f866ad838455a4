"""Synthetic reversal-pair videos and TSN-style segment sampling.

Four classes in two reversal pairs: a blob translating left to right or right
to left, and a blob orbiting the frame centre clockwise or counter-clockwise.
Each partner clip is the exact frame reversal of the other, so the set of
frames carries no class signal and only temporal order separates a pair.
"""

import json
import logging
import math
from concurrent import futures
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .config import thread_cap
from .errors import ConfigError, DataError, IoError
from .tensor import Tensor
from .tensor_io import read_tensor, write_tensor

logger = logging.getLogger(__name__)

CLASS_NAMES = (
    "translate_left_to_right",
    "translate_right_to_left",
    "rotate_cw",
    "rotate_ccw",
)
REVERSAL_PARTNER = {0: 1, 1: 0, 2: 3, 3: 2}
# reversed classes render as the frame reversal of their canonical partner
_CANONICAL = {
    "translate_left_to_right": ("translate", False),
    "translate_right_to_left": ("translate", True),
    "rotate_cw": ("rotate", False),
    "rotate_ccw": ("rotate", True),
}
SPLIT_CODES = {"train": 0, "val": 1, "test": 2}
DATASET_FORMAT = "action-kit-dataset/1"
MIN_FRAMES = 8
MIN_EXTENT = 16

SeedLike = Union[int, np.random.Generator, None]


@dataclass(frozen=True)
class MotionParams:
    """Blob trajectory description; lengths are in pixels, angles in radians."""

    sigma: float = 2.0
    row: float = 16.0
    start: float = 4.0
    stop: float = 28.0
    radius: float = 9.0
    phase: float = 0.0
    sweep: float = math.pi

    @classmethod
    def sample(cls, family: str, height: int, width: int, rng: np.random.Generator) -> "MotionParams":
        sigma = float(rng.uniform(1.5, 2.5))
        if family == "translate":
            margin = 2.0 * sigma
            span = width - 1 - 2 * margin
            start = margin + float(rng.uniform(0.0, 0.15)) * span
            stop = margin + float(rng.uniform(0.85, 1.0)) * span
            row = float(rng.uniform(0.3, 0.7)) * (height - 1)
            return cls(sigma=sigma, row=row, start=start, stop=stop)
        radius = float(rng.uniform(0.25, 0.35)) * min(height, width)
        return cls(
            sigma=sigma,
            radius=radius,
            phase=float(rng.uniform(0.0, 2.0 * math.pi)),
            sweep=float(rng.uniform(0.6, 0.8)) * 2.0 * math.pi,
        )


def trajectory(kind: str, params: MotionParams, frames: int, height: int, width: int) -> np.ndarray:
    """Blob centre (row, col) per frame, shape (frames, 2)."""
    if kind not in _CANONICAL:
        raise ConfigError(f"unknown motion kind '{kind}', expected one of {CLASS_NAMES}")
    family, reverse = _CANONICAL[kind]
    progress = np.arange(frames) / max(frames - 1, 1)
    if family == "translate":
        cols = params.start + (params.stop - params.start) * progress
        rows = np.full(frames, params.row)
    else:
        # rows grow downward, so an increasing angle turns clockwise on screen
        angle = params.phase + params.sweep * progress
        rows = (height - 1) / 2.0 + params.radius * np.sin(angle)
        cols = (width - 1) / 2.0 + params.radius * np.cos(angle)
    path = np.stack([rows, cols], axis=1)
    return path[::-1].copy() if reverse else path


def render_motion(
    kind: str,
    params: MotionParams,
    frames: int,
    height: int,
    width: int,
    channels: int = 1,
) -> np.ndarray:
    """Noise-free clip (frames, channels, height, width) with values in [0, 1]."""
    path = trajectory(kind, params, frames, height, width)
    rows = np.arange(height, dtype=np.float64)[:, None]
    cols = np.arange(width, dtype=np.float64)[None, :]
    clip = np.empty((frames, channels, height, width), dtype=np.float32)
    for f, (r, c) in enumerate(path):
        blob = np.exp(-((rows - r) ** 2 + (cols - c) ** 2) / (2.0 * params.sigma**2))
        clip[f] = blob.astype(np.float32)[None]
    return clip


@dataclass
class SyntheticVideo:
    frames: np.ndarray
    label: int
    meta: Dict = field(default_factory=dict)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


# -- segment sampling -------------------------------------------------------


def segment_bounds(num_frames: int, segments: int) -> List[Tuple[int, int]]:
    """[start, end) of each segment; leading segments absorb the remainder."""
    if segments < 1:
        raise DataError(f"segment count must be >= 1, got {segments}")
    if num_frames < segments:
        raise DataError(f"cannot draw {segments} segments from {num_frames} frames")
    base, remainder = divmod(num_frames, segments)
    bounds = []
    start = 0
    for index in range(segments):
        length = base + (1 if index < remainder else 0)
        bounds.append((start, start + length))
        start += length
    return bounds


def segment_indices(num_frames: int, segments: int, mode: str = "center", seed: SeedLike = None) -> np.ndarray:
    bounds = segment_bounds(num_frames, segments)
    if mode == "center":
        return np.array([start + (end - start) // 2 for start, end in bounds], dtype=np.int64)
    if mode == "random":
        rng = np.random.default_rng(seed)
        return np.array([start + int(rng.integers(end - start)) for start, end in bounds], dtype=np.int64)
    raise ConfigError(f"sampling mode must be 'random' or 'center', got '{mode}'")


def tsn_sample(video: SyntheticVideo, segments: int, mode: str = "center", seed: SeedLike = None) -> Tensor:
    """One frame per segment, as a (T, C, H, W) tensor."""
    indices = segment_indices(video.num_frames, segments, mode, seed)
    return Tensor(video.frames[indices], dtype=video.frames.dtype)


# -- datasets ---------------------------------------------------------------


@dataclass
class ClipDataset:
    videos: List[SyntheticVideo]
    class_names: Tuple[str, ...] = CLASS_NAMES
    split: str = "train"

    def __len__(self) -> int:
        return len(self.videos)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def labels(self) -> np.ndarray:
        return np.array([v.label for v in self.videos], dtype=np.int64)

    def class_counts(self) -> Dict[int, int]:
        counts = {k: 0 for k in range(self.num_classes)}
        for video in self.videos:
            counts[video.label] += 1
        return counts

    def subset(self, indices: Sequence[int]) -> "ClipDataset":
        return ClipDataset([self.videos[i] for i in indices], self.class_names, self.split)

    def clip(self, index: int, segments: int, mode: str = "center", seed: SeedLike = None) -> Tensor:
        return tsn_sample(self.videos[index], segments, mode, seed)

    def batches(
        self,
        segments: int,
        batch_size: int,
        mode: str = "center",
        rng: Optional[np.random.Generator] = None,
        shuffle: bool = False,
    ) -> Iterator[Tuple[Tensor, np.ndarray]]:
        """Yield ``(clips (B, T, C, H, W), labels (B,))`` covering the split once."""
        if not self.videos:
            raise DataError(f"{self.split} split is empty")
        if batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {batch_size}")
        order = np.arange(len(self.videos))
        if shuffle:
            if rng is None:
                raise ConfigError("shuffled batches need a random generator")
            order = rng.permutation(order)
        for offset in range(0, len(order), batch_size):
            chosen = order[offset : offset + batch_size]
            clips = []
            for index in chosen:
                video = self.videos[index]
                frames = segment_indices(video.num_frames, segments, mode, rng if mode == "random" else None)
                clips.append(video.frames[frames])
            yield Tensor(np.stack(clips), dtype=np.float32), self.labels[chosen]


def gen_direction_dataset(
    n_per_class: int,
    frames: int = 40,
    height: int = 32,
    width: int = 32,
    noise: float = 0.05,
    seed: int = 0,
    split: str = "train",
    channels: int = 1,
    max_workers: Optional[int] = None,
) -> ClipDataset:
    """Class-balanced reversal-pair dataset, deterministic in ``seed`` and ``split``.

    Sample ``i`` of a class and sample ``i`` of its partner share one
    trajectory, so the clean clips are exact frame reversals of each other.
    """
    if frames < MIN_FRAMES:
        raise ConfigError(f"need at least {MIN_FRAMES} raw frames, got {frames}")
    if height < MIN_EXTENT or width < MIN_EXTENT:
        raise ConfigError(f"frames must be at least {MIN_EXTENT}x{MIN_EXTENT}, got {height}x{width}")
    if n_per_class < 1:
        raise ConfigError(f"n_per_class must be >= 1, got {n_per_class}")
    if noise < 0:
        raise ConfigError(f"noise sigma must be >= 0, got {noise}")
    if channels not in (1, 3):
        raise ConfigError(f"channels must be 1 or 3, got {channels}")
    if split not in SPLIT_CODES:
        raise ConfigError(f"unknown split '{split}', expected one of {sorted(SPLIT_CODES)}")
    split_code = SPLIT_CODES[split]

    def make(job: Tuple[int, int]) -> SyntheticVideo:
        label, index = job
        kind = CLASS_NAMES[label]
        family, _ = _CANONICAL[kind]
        pair = 0 if family == "translate" else 1
        params = MotionParams.sample(family, height, width, np.random.default_rng([seed, split_code, pair, index]))
        clip = render_motion(kind, params, frames, height, width, channels)
        if noise > 0:
            noise_rng = np.random.default_rng([seed, split_code, pair, index, label + 1])
            clip = np.clip(clip + noise_rng.normal(0.0, noise, clip.shape), 0.0, 1.0).astype(np.float32)
        path = trajectory(kind, params, frames, height, width)
        meta = {
            "kind": family,
            "direction": kind,
            "speed": float(np.linalg.norm(np.diff(path, axis=0), axis=1).mean()),
            "seed": [seed, split_code, pair, index],
            "trajectory": path.round(6).tolist(),
        }
        return SyntheticVideo(clip, label, meta)

    jobs = [(label, index) for label in range(len(CLASS_NAMES)) for index in range(n_per_class)]
    with futures.ThreadPoolExecutor(max_workers=thread_cap(max_workers)) as pool:
        videos = list(pool.map(make, jobs))
    logger.info("[Synth] %s split: %d videos, %d frames of %dx%d, noise %.3f", split, len(videos), frames, height, width, noise)
    return ClipDataset(videos, CLASS_NAMES, split)


# -- persistence ------------------------------------------------------------


def save_dataset(dataset: ClipDataset, directory: Union[str, Path]) -> Path:
    directory = Path(directory)
    entries = []
    for index, video in enumerate(dataset.videos):
        filename = f"video_{index:05d}.atnz"
        write_tensor(directory / filename, video.frames)
        entries.append({"file": filename, "label": video.label, "meta": video.meta})
    manifest = {
        "format": DATASET_FORMAT,
        "split": dataset.split,
        "classes": list(dataset.class_names),
        "videos": entries,
    }
    path = directory / "manifest.json"
    try:
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write dataset manifest {path}: {exc}") from exc
    logger.info("[Synth] wrote %d videos to %s", len(entries), directory)
    return path


def load_dataset(directory: Union[str, Path]) -> ClipDataset:
    directory = Path(directory)
    path = directory / "manifest.json"
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"cannot read dataset manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"dataset manifest {path} is not valid JSON: {exc}") from exc
    if manifest.get("format") != DATASET_FORMAT:
        raise DataError(f"{path}: unsupported dataset format {manifest.get('format')!r}")
    classes = tuple(manifest["classes"])
    videos = []
    for entry in manifest["videos"]:
        label = int(entry["label"])
        if not 0 <= label < len(classes):
            raise DataError(f"{entry['file']}: label {label} outside [0, {len(classes)})")
        videos.append(SyntheticVideo(read_tensor(directory / entry["file"]), label, entry.get("meta", {})))
    return ClipDataset(videos, classes, manifest.get("split", "train"))
