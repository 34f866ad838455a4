import json

import numpy as np
import pytest

from action_core.cost import efficiency
from action_core.errors import ConfigError, IoError
from action_core.report import HISTORY_FIELDS, history_rows, render_csv, render_json, write_history_csv, write_report
from action_core.training import EpochRecord

HISTORY = [EpochRecord(1, 0.02, 1.25, 40.0, 35.0), EpochRecord(2, 0.002, 0.5, 87.5)]


def test_json_is_stable_and_plain():
    payload = {"b": np.float64(1.5), "a": np.arange(3), "rows": HISTORY}
    assert render_json(payload) == render_json(payload)
    decoded = json.loads(render_json(payload))
    assert list(decoded) == ["b", "a", "rows"]
    assert decoded["a"] == [0, 1, 2]
    assert decoded["rows"][1]["val_top1"] is None


def test_history_csv_layout(tmp_path):
    path = write_history_csv(HISTORY, tmp_path / "history.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(HISTORY_FIELDS) == "epoch,lr,loss,top1"
    assert lines[1:] == ["1,0.02,1.25,40.0", "2,0.002,0.5,87.5"]


def test_csv_blank_for_missing_values():
    text = render_csv(HISTORY, ["epoch", "val_top1"])
    assert text.splitlines() == ["epoch,val_top1", "1,35.0", "2,"]
    with pytest.raises(ConfigError):
        render_csv([])


def test_efficiency_keeps_four_decimals(tmp_path):
    path = write_report({"eta": efficiency(5.3, 2.1)}, "json", tmp_path / "eta.json")
    eta = json.loads(path.read_text())["eta"]
    assert round(eta, 4) == pytest.approx(2.5238, abs=1e-4)


def test_write_errors(tmp_path):
    with pytest.raises(ConfigError):
        write_report({}, "yaml", tmp_path / "x.yaml")
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(IoError):
        write_report({}, "json", blocker / "nested" / "x.json")


def test_history_rows_are_dicts():
    assert history_rows(HISTORY)[0] == {"epoch": 1, "lr": 0.02, "loss": 1.25, "top1": 40.0, "val_top1": 35.0}
