"""Experiment configuration: a JSON document validated against the schema
shipped in ``coopconv/data/config_schema.json`` before any run starts."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from .training.ppo import PpoConfig, default_config

METHODS = ("ours", "baseline-agg", "baseline-modular", "fomaml")


class ConfigError(Exception):
    pass


def load_schema() -> dict:
    ref = resources.files("coopconv.data").joinpath("config_schema.json")
    return json.loads(ref.read_text())


@dataclass
class ExperimentConfig:
    env: str
    method: str = "ours"
    lam: float = 0.5
    z_mode: str = "full"
    seeds: list[int] = field(default_factory=lambda: [0])
    task: dict = field(default_factory=dict)       # {"m": int, "tweaked": bool, "study": bool}
    partners: dict = field(default_factory=dict)   # {"hand_designed": int, "self_play": int, "variant": str}
    ppo: dict = field(default_factory=dict)        # PpoConfig field overrides
    out_dir: str = "runs"

    @staticmethod
    def from_json(obj: dict) -> "ExperimentConfig":
        validate_config(obj)
        kw = dict(obj)
        kw["lam"] = kw.pop("lambda", 0.5)
        return ExperimentConfig(**kw)

    @staticmethod
    def from_file(path) -> "ExperimentConfig":
        try:
            obj = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return ExperimentConfig.from_json(obj)

    def to_json(self) -> dict:
        obj = asdict(self)
        obj["lambda"] = obj.pop("lam")
        return obj

    def ppo_config(self, phase: str = "train") -> PpoConfig:
        cfg = default_config(self.env, phase)
        overrides = dict(self.ppo)
        return cfg.with_(lam=self.lam, **overrides)


def validate_config(obj: dict) -> None:
    try:
        jsonschema.validate(obj, load_schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {path}: {exc.message}") from exc
