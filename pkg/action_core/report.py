"""JSON and CSV result files with stable field order."""

import csv
import io
import json
from dataclasses import asdict, is_dataclass
from pathlib import Path
from typing import Any, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, IoError

HISTORY_FIELDS = ("epoch", "lr", "loss", "top1")


def _plain(value: Any) -> Any:
    if is_dataclass(value) and not isinstance(value, type):
        return _plain(asdict(value))
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    return value


def render_json(results: Any) -> str:
    return json.dumps(_plain(results), indent=2, allow_nan=True) + "\n"


def render_csv(rows: Iterable[Any], fieldnames: Optional[Sequence[str]] = None) -> str:
    rows = [_plain(row) for row in rows]
    if fieldnames is None:
        if not rows:
            raise ConfigError("CSV output needs rows or explicit field names")
        fieldnames = list(rows[0].keys())
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(fieldnames), extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in fieldnames})
    return buffer.getvalue()


def write_report(
    results: Any,
    fmt: str,
    path: Union[str, Path],
    fieldnames: Optional[Sequence[str]] = None,
) -> Path:
    """Serialize ``results`` as ``json`` or ``csv`` (a sequence of rows)."""
    if fmt == "json":
        text = render_json(results)
    elif fmt == "csv":
        text = render_csv(results, fieldnames)
    else:
        raise ConfigError(f"report format must be 'json' or 'csv', got '{fmt}'")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as stream:
            stream.write(text)
    except OSError as exc:
        raise IoError(f"cannot write report {path}: {exc}") from exc
    return path


def write_history_csv(history: Sequence[Any], path: Union[str, Path]) -> Path:
    return write_report(list(history), "csv", path, HISTORY_FIELDS)


def history_rows(history: Sequence[Any]) -> List[dict]:
    return [_plain(record) for record in history]
