import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

from .backbones import TOYNET_WIDTHS
from .errors import ConfigError, IoError
from .excitation import REDUCE_RATIO
from .optim import StepSchedule

if sys.version_info >= (3, 11):
    import tomllib
else:  # Python 3.10: tomllib's upstream backport
    import tomli as tomllib

THREADS_ENV = "ACTION_KIT_THREADS"


def thread_cap(max_workers: Optional[int] = None) -> int:
    """Worker count: explicit value, else $ACTION_KIT_THREADS, else the CPU count."""
    if max_workers:
        return max_workers
    raw = os.environ.get(THREADS_ENV, "")
    return max(1, int(raw)) if raw.strip().isdigit() else (os.cpu_count() or 1)


def _known(cls, data: Mapping[str, Any]) -> Dict[str, Any]:
    names = {f.name for f in fields(cls)}
    return {k: v for k, v in data.items() if k in names and v is not None}


def parse_ints(value) -> Tuple[int, ...]:
    if value is None or value == "":
        return ()
    if isinstance(value, str):
        return tuple(int(v) for v in value.replace(",", " ").split())
    if isinstance(value, int):
        return (value,)
    return tuple(int(v) for v in value)


def parse_names(value) -> Optional[Tuple[str, ...]]:
    if value is None:
        return None
    if isinstance(value, str):
        return tuple(v for v in value.replace(",", " ").split())
    return tuple(str(v) for v in value)


def default_decay_epochs(epochs: int) -> Tuple[int, ...]:
    """One tenfold drop two thirds of the way in; none for a single epoch."""
    if epochs < 2:
        return ()
    return (max(1, round(epochs * 2 / 3)),)


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings for one training run."""

    segments: int = 8
    epochs: int = 30
    lr: float = 0.02
    lr_decay_epochs: Optional[Tuple[int, ...]] = None
    lr_factor: float = 10.0
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 16
    seed: int = 0
    gate_lr_mult: float = 1.0

    def __post_init__(self):
        if self.segments < 1:
            raise ConfigError(f"segments must be >= 1, got {self.segments}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.gate_lr_mult <= 0:
            raise ConfigError(f"gate_lr_mult must be positive, got {self.gate_lr_mult}")
        decay = default_decay_epochs(self.epochs) if self.lr_decay_epochs is None else tuple(self.lr_decay_epochs)
        object.__setattr__(self, "lr_decay_epochs", decay)
        if any(b <= a for a, b in zip(decay, decay[1:])):
            raise ConfigError(f"lr_decay_epochs must be strictly increasing, got {decay}")
        if any(e < 1 or e >= self.epochs for e in decay):
            raise ConfigError(f"lr_decay_epochs {decay} must lie in [1, epochs={self.epochs})")

    @classmethod
    def from_dict(cls, data: Optional[Mapping[str, Any]]) -> "TrainConfig":
        """Create TrainConfig from a dictionary, using defaults for missing keys."""
        if not data:
            return cls()
        values = _known(cls, data)
        if "lr_decay_epochs" in values:
            values["lr_decay_epochs"] = parse_ints(values["lr_decay_epochs"])
        try:
            return cls(**values)
        except TypeError as exc:
            raise ConfigError(f"invalid train configuration: {exc}") from exc

    def schedule(self) -> StepSchedule:
        return StepSchedule(self.lr, self.lr_decay_epochs, self.lr_factor)


@dataclass(frozen=True)
class NetConfig:
    """Toy network shape: temporal module, stage widths and where modules go."""

    module: str = "action"
    widths: Tuple[int, ...] = TOYNET_WIDTHS
    stages: Optional[Tuple[str, ...]] = None
    num_classes: int = 4
    reduce_ratio: int = REDUCE_RATIO
    zero_gates: bool = True

    @classmethod
    def from_dict(cls, data: Optional[Mapping[str, Any]]) -> "NetConfig":
        if not data:
            return cls()
        values = _known(cls, data)
        if "widths" in values:
            values["widths"] = parse_ints(values["widths"])
        if "stages" in values:
            values["stages"] = parse_names(values["stages"])
        return cls(**values)


@dataclass(frozen=True)
class SynthConfig:
    """Synthetic dataset generation settings."""

    n_per_class: int = 50
    frames: int = 40
    size: int = 32
    noise: float = 0.05
    split: str = "train"
    channels: int = 1

    @classmethod
    def from_dict(cls, data: Optional[Mapping[str, Any]]) -> "SynthConfig":
        if not data:
            return cls()
        return cls(**_known(cls, data))


def load_config_file(config_path: str) -> Dict[str, Any]:
    """Parse a ``.toml`` or ``.json`` run configuration into a plain dictionary."""
    path = Path(config_path)
    if not path.exists():
        raise IoError(f"Config file not found: {config_path}")
    suffix = path.suffix.lower()
    try:
        if suffix == ".toml":
            with path.open("rb") as stream:
                return tomllib.load(stream)
        if suffix == ".json":
            with path.open("r", encoding="utf-8") as stream:
                payload = json.load(stream)
            if not isinstance(payload, dict):
                raise ConfigError(f"{config_path}: top level must be an object")
            return payload
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{config_path}: {exc}") from exc
    raise ConfigError(f"unsupported config format '{suffix}', expected .toml or .json")


@dataclass(frozen=True)
class RunConfig:
    """Resolved options of one command: defaults < config file < flags."""

    subcommand: str
    seed: int = 0
    out: str = "runs"
    options: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def resolve(
        cls,
        subcommand: str,
        flags: Mapping[str, Any],
        config_path: Optional[str] = None,
    ) -> "RunConfig":
        payload = load_config_file(config_path) if config_path else {}
        section = payload.get(subcommand, {})
        if not isinstance(section, dict):
            raise ConfigError(f"config section [{subcommand}] must be a table")
        options: Dict[str, Any] = dict(section)
        options.update({k: v for k, v in flags.items() if v is not None})
        seed = options.pop("seed", payload.get("seed", 0))
        out = options.pop("out", payload.get("out", "runs"))
        try:
            seed = int(seed)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"seed must be an integer, got {seed!r}") from exc
        return cls(subcommand=subcommand, seed=seed, out=str(out), options=options)

    def get(self, key: str, default: Any = None) -> Any:
        return self.options.get(key, default)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def write_snapshot(self, directory: Optional[str] = None) -> Path:
        target = Path(directory or self.out)
        path = target / "resolved_config.json"
        try:
            target.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True, default=list) + "\n", encoding="utf-8")
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc
        return path
