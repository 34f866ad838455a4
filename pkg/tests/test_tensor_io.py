import numpy as np
import pytest

from action_core.errors import DataError, IoError
from action_core.tensor_io import (
    MAGIC,
    SnapshotEntry,
    decode_tensor,
    encode_tensor,
    load_snapshot,
    read_tensor,
    save_snapshot,
    write_tensor,
)


def test_encoding_layout():
    payload = encode_tensor(np.arange(6, dtype=np.float32).reshape(2, 3))
    assert payload[:4] == MAGIC
    assert int.from_bytes(payload[4:8], "little") == 2
    assert int.from_bytes(payload[8:16], "little") == 2
    assert int.from_bytes(payload[16:24], "little") == 3
    assert len(payload) == 24 + 6 * 4


def test_decode_rejects_bad_payloads():
    good = encode_tensor(np.ones((2, 2)))
    with pytest.raises(DataError, match="magic"):
        decode_tensor(b"NOPE" + good[4:])
    with pytest.raises(DataError):
        decode_tensor(good[:-4])


def test_file_round_trip_stores_float32(tmp_path):
    array = np.linspace(-1, 1, 12).reshape(3, 4)
    path = write_tensor(tmp_path / "x.atnz", array)
    loaded = read_tensor(path)
    assert loaded.dtype == np.float32
    np.testing.assert_allclose(loaded, array.astype(np.float32))


def test_missing_file_raises_io_error(tmp_path):
    with pytest.raises(IoError):
        read_tensor(tmp_path / "absent.atnz")


def test_snapshot_manifest_lines(tmp_path):
    tensors = [("fc.weight", "parameter", np.ones((4, 2))), ("bn.running_mean", "buffer", np.zeros(3))]
    save_snapshot(tmp_path, tensors)
    lines = (tmp_path / "manifest.txt").read_text().splitlines()
    entries = [SnapshotEntry.from_line(line) for line in lines]
    assert [(e.role, e.shape) for e in entries] == [("parameter", (4, 2)), ("buffer", (3,))]
    loaded = load_snapshot(tmp_path)
    assert set(loaded) == {"fc.weight", "bn.running_mean"}
    assert loaded["fc.weight"][0] == "parameter"
    np.testing.assert_array_equal(loaded["fc.weight"][1], np.ones((4, 2)))
