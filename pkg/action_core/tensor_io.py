"""ATNZ v1 tensor files and weight snapshot directories.

Layout: magic ``ATNZ``, u32 rank, rank x u64 extents, then row-major float32
values, all little-endian.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, Tuple, Union

import numpy as np

from .errors import DataError, IoError

MAGIC = b"ATNZ"
MANIFEST_NAME = "manifest.txt"

PathLike = Union[str, Path]


def encode_tensor(array: np.ndarray) -> bytes:
    array = np.asarray(array)
    header = MAGIC + np.uint32(array.ndim).astype("<u4").tobytes()
    header += np.asarray(array.shape, dtype="<u8").tobytes()
    return header + np.ascontiguousarray(array, dtype="<f4").tobytes()


def decode_tensor(payload: bytes) -> np.ndarray:
    if payload[:4] != MAGIC:
        raise DataError("not an ATNZ v1 payload (bad magic)")
    if len(payload) < 8:
        raise DataError("truncated ATNZ header")
    rank = int(np.frombuffer(payload, dtype="<u4", count=1, offset=4)[0])
    data_offset = 8 + 8 * rank
    if len(payload) < data_offset:
        raise DataError("truncated ATNZ extents")
    shape = tuple(int(v) for v in np.frombuffer(payload, dtype="<u8", count=rank, offset=8))
    count = int(np.prod(shape, dtype=np.int64))
    if len(payload) != data_offset + 4 * count:
        raise DataError(f"ATNZ payload holds {len(payload) - data_offset} data bytes, shape {shape} needs {4 * count}")
    values = np.frombuffer(payload, dtype="<f4", count=count, offset=data_offset)
    return values.astype(np.float32).reshape(shape)


def write_tensor(path: PathLike, array: np.ndarray) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_tensor(array))
    except OSError as exc:
        raise IoError(f"cannot write tensor file {path}: {exc}") from exc
    return path


def read_tensor(path: PathLike) -> np.ndarray:
    path = Path(path)
    try:
        payload = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read tensor file {path}: {exc}") from exc
    return decode_tensor(payload)


@dataclass(frozen=True)
class SnapshotEntry:
    """One manifest line: file path (relative), role, shape."""

    path: str
    role: str
    shape: Tuple[int, ...]

    def to_line(self) -> str:
        return f"{self.path}\t{self.role}\t{'x'.join(str(e) for e in self.shape)}"

    @classmethod
    def from_line(cls, line: str) -> "SnapshotEntry":
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 3:
            raise DataError(f"malformed manifest line: {line!r}")
        shape = tuple(int(e) for e in parts[2].split("x")) if parts[2] else ()
        return cls(parts[0], parts[1], shape)


def save_snapshot(directory: PathLike, tensors: Iterable[Tuple[str, str, np.ndarray]]) -> Path:
    """Write (name, role, array) triples as ATNZ files plus ``manifest.txt``."""
    directory = Path(directory)
    entries = []
    for name, role, array in tensors:
        filename = f"{name}.atnz"
        write_tensor(directory / filename, array)
        entries.append(SnapshotEntry(filename, role, tuple(np.shape(array))))
    manifest = directory / MANIFEST_NAME
    try:
        manifest.write_text("".join(entry.to_line() + "\n" for entry in entries), encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write manifest {manifest}: {exc}") from exc
    return manifest


def load_snapshot(directory: PathLike) -> Dict[str, Tuple[str, np.ndarray]]:
    """Return ``{name: (role, array)}`` for every tensor listed in the manifest."""
    directory = Path(directory)
    manifest = directory / MANIFEST_NAME
    try:
        lines = manifest.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IoError(f"cannot read manifest {manifest}: {exc}") from exc
    loaded: Dict[str, Tuple[str, np.ndarray]] = {}
    for line in lines:
        if not line.strip():
            continue
        entry = SnapshotEntry.from_line(line)
        array = read_tensor(directory / entry.path)
        if array.shape != entry.shape:
            raise DataError(f"{entry.path}: manifest shape {entry.shape} != file shape {array.shape}")
        loaded[entry.path[: -len(".atnz")]] = (entry.role, array)
    return loaded
