"""Run configuration: one JSON document covering env, networks, training and paths."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema

from .autograd import ConfigurationError
from .env import EnvConfig
from .policies import NetworkConfig
from .trainer.train import TrainConfig

_INT = {"type": "integer"}
_POS = {"type": "integer", "minimum": 1}
_NUM = {"type": "number"}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "glimpse run configuration",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "env": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"n": _POS, "c": _POS, "m": _POS, "step": _POS, "episodes": _POS, "horizon": _POS},
        },
        "network": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"in_channels": _POS, "kernel": _POS, "planner_width": _POS, "planner_blocks": _POS,
                           "classifier_width": _POS, "classifier_blocks": _POS, "classes": {"type": "integer",
                                                                                            "minimum": 2}},
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "schedule": {
                    "type": "array",
                    "items": {"type": "array", "prefixItems": [{"enum": ["i", "ii", "iii"]},
                                                               {"type": "integer", "minimum": 0}],
                              "minItems": 2, "maxItems": 2},
                },
                "rollouts": _POS, "batch_size": _POS, "lr": {"type": "number", "exclusiveMinimum": 0},
                "beta1": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "beta2": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "eps": {"type": "number", "exclusiveMinimum": 0},
                "seed": _INT, "grad_clip": {"type": ["number", "null"], "exclusiveMinimum": 0}, "chunk": _POS,
            },
        },
        "data": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": ["string", "null"]},
                "train_per_class": {"type": ["integer", "null"], "minimum": 1},
                "test_per_class": {"type": ["integer", "null"], "minimum": 1},
                "subset_seed": _INT,
            },
        },
        "eval": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"runs": _POS, "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                           "mode": {"enum": ["i", "ii", "iii", None]}},
        },
        "out": {"type": "string"},
        "checkpoint": {"type": ["string", "null"]},
    },
}


@dataclass
class DataConfig:
    dir: str | None = None
    train_per_class: int | None = None   # None = whole split
    test_per_class: int | None = None
    subset_seed: int = 0


@dataclass
class EvalConfig:
    runs: int = 20
    alpha: float = 0.05
    mode: str | None = None   # None = the checkpoint's last training mode


@dataclass
class RunConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    out: str = "runs/default"
    checkpoint: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


_SECTIONS = {"env": EnvConfig, "network": NetworkConfig, "train": TrainConfig, "data": DataConfig, "eval": EvalConfig}


def validate(doc: dict) -> None:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigurationError(f"config {where}: {exc.message}") from None


def from_dict(doc: dict) -> RunConfig:
    """Validate against SCHEMA, then build (dataclass checks run in __post_init__)."""
    validate(doc)
    kw = {}
    for key, value in doc.items():
        kw[key] = _SECTIONS[key](**value) if key in _SECTIONS else value
    try:
        cfg = RunConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc)) from None
    if cfg.network.in_channels != cfg.env.c:
        raise ConfigurationError(f"network.in_channels={cfg.network.in_channels} but env.c={cfg.env.c}")
    return cfg


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(doc: dict, overrides: list[str]) -> dict:
    """Apply ``section.key=value`` strings; values are parsed as JSON when possible."""
    doc = copy.deepcopy(doc)
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = doc
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"override {key}: {part} is not a section")
        node[parts[-1]] = _parse_value(raw)
    return doc


def load(path=None, overrides: list[str] = ()) -> RunConfig:
    """Defaults, then the JSON file at ``path`` (sections merged key by key), then overrides."""
    doc = RunConfig().to_dict()
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(user, dict):
            raise ConfigurationError(f"{path}: top level must be an object")
        for key, value in user.items():
            if isinstance(value, dict) and isinstance(doc.get(key), dict):
                doc[key].update(value)
            else:
                doc[key] = value
    return from_dict(apply_overrides(doc, list(overrides)))
