"""Run configuration files (JSON, versioned, unknown keys rejected).

Schema, version 1::

    {
      "version": 1,
      "model":     {ModelConfig fields},
      "training":  {TrainingConfig fields},
      "problem":   {"T": float, "params": {name: float}},
      "reference": {"N": int, "dt": float, "self_converge": bool}
    }

Every section and field is optional; omitted values take the defaults of the
full-size configuration.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .training import ModelConfig, TrainingConfig

SCHEMA_VERSION = 1

__all__ = ["ConfigSchemaError", "RunConfig", "load_config", "preset", "SCHEMA_VERSION"]


class ConfigSchemaError(ValueError):
    pass


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    problem: dict = field(default_factory=dict)
    reference: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "version": SCHEMA_VERSION,
            "model": asdict(self.model),
            "training": asdict(self.training),
            "problem": dict(self.problem),
            "reference": dict(self.reference),
        }

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2))
        return path


_PROBLEM_KEYS = {"T", "params"}
_REFERENCE_KEYS = {"N", "dt", "self_converge", "n_snapshots"}


def _build(cls, section: dict, where: str):
    if not isinstance(section, dict):
        raise ConfigSchemaError(f"{where} must be an object")
    names = {f.name for f in fields(cls)}
    unknown = set(section) - names
    if unknown:
        raise ConfigSchemaError(f"unknown key(s) in {where}: {sorted(unknown)}")
    try:
        return cls(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigSchemaError(f"invalid {where}: {exc}") from exc


def parse_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigSchemaError("configuration must be a JSON object")
    unknown = set(data) - {"version", "model", "training", "problem", "reference"}
    if unknown:
        raise ConfigSchemaError(f"unknown top-level key(s): {sorted(unknown)}")
    if data.get("version") != SCHEMA_VERSION:
        raise ConfigSchemaError(f"unsupported config version {data.get('version')!r}")
    problem = data.get("problem", {})
    reference = data.get("reference", {})
    for sec, allowed, name in ((problem, _PROBLEM_KEYS, "problem"), (reference, _REFERENCE_KEYS, "reference")):
        if not isinstance(sec, dict):
            raise ConfigSchemaError(f"{name} must be an object")
        bad = set(sec) - allowed
        if bad:
            raise ConfigSchemaError(f"unknown key(s) in {name}: {sorted(bad)}")
    return RunConfig(
        _build(ModelConfig, data.get("model", {}), "model"),
        _build(TrainingConfig, data.get("training", {}), "training"),
        dict(problem),
        dict(reference),
    )


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigSchemaError(f"{path}: not valid JSON ({exc})") from exc
    return parse_config(data)


def preset(name: str) -> RunConfig:
    """``full``: 7 x 32 network, 16384 points, 50k Adam + L-BFGS.
    ``smoke``: 2 x 16 network, 2048 points, 5k Adam steps.
    """
    if name == "full":
        return RunConfig()
    if name == "smoke":
        return RunConfig(
            ModelConfig(hidden=2, width=16, m=5),
            TrainingConfig(adam_steps=5000, lbfgs_iters=0, n_collocation=2048, batch_size=2048),
        )
    raise KeyError(f"unknown preset {name!r}")
