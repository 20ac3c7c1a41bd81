"""JSON run configuration: every default in one document, overridable per key."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

from .data import PreprocessConfig
from .errors import ConfigError
from .model import ModelConfig
from .pipeline import TrainConfig
from .topology import TopoConfig

GRAPH_KEYS = ("k_spatial", "k_expression", "n_pcs")
TRAIN_KEYS = ("lambda1", "lambda2", "epochs", "lr", "seed", "n_clusters", "restarts", "negatives", "topo_on", "scdom_on")
TUPLE_KEYS = {"bounds", "mu_clip", "theta_clip"}


@dataclass
class IOConfig:
    counts: Optional[str] = None
    coords: Optional[str] = None
    labels: Optional[str] = None
    out: Optional[str] = None


@dataclass
class RunConfig:
    preprocess: dict = field(default_factory=dict)
    graph: dict = field(default_factory=dict)
    topo: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    io: dict = field(default_factory=dict)

    @classmethod
    def defaults(cls) -> "RunConfig":
        pre = asdict(PreprocessConfig())
        train = asdict(TrainConfig(), dict_factory=dict)
        return cls(
            preprocess={k: v for k, v in pre.items() if k not in GRAPH_KEYS},
            graph={k: pre[k] for k in GRAPH_KEYS},
            topo={k: list(v) if isinstance(v, tuple) else v for k, v in asdict(TopoConfig()).items()},
            model={k: list(v) if isinstance(v, tuple) else v for k, v in asdict(ModelConfig()).items()},
            train={k: train[k] for k in TRAIN_KEYS},
            io=asdict(IOConfig()),
        )

    def to_dict(self) -> dict:
        return {f.name: dict(getattr(self, f.name)) for f in fields(self)}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def update(self, section: str, key: str, value: Any) -> None:
        table = getattr(self, section, None)
        if not isinstance(table, dict) or key not in table:
            raise ConfigError(f"unknown config key {section}.{key}")
        table[key] = value

    def to_train_config(self) -> TrainConfig:
        try:
            pre = PreprocessConfig(**self.preprocess, **self.graph)
            topo = TopoConfig(**_tuples(self.topo))
            model = ModelConfig(**_tuples(self.model))
            cfg = TrainConfig(**self.train, preprocess=pre, topo=topo, model=model)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        return cfg.validate()

    def io_config(self) -> IOConfig:
        return IOConfig(**self.io)


def _tuples(section: dict) -> dict:
    return {k: tuple(v) if k in TUPLE_KEYS and isinstance(v, list) else v for k, v in section.items()}


def from_dict(doc: dict) -> RunConfig:
    """Overlay ``doc`` on the defaults; unknown sections or keys are rejected."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    cfg = RunConfig.defaults()
    for section, values in doc.items():
        if section not in cfg.to_dict():
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(values, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        for key, value in values.items():
            cfg.update(section, key, value)
    cfg.to_train_config()
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return from_dict(doc)


def write_default_config(path) -> Path:
    path = Path(path)
    path.write_text(RunConfig.defaults().dumps())
    return path
