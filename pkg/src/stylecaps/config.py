"""Pipeline configuration: one YAML (or JSON) file, a global seed and per-stage sections."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from stylecaps.backends.registry import ROLES
from stylecaps.seeding import derive_seed

STAGE_SECTIONS = (
    "preprocess",
    "aggregate_annotations",
    "scale_intrinsic",
    "scale_situational",
    "basic_tags",
    "prompts",
    "splits",
    "eval",
    "compositional",
    "mixture",
    "score",
)


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    seed: int = 0
    backends: dict[str, dict] = field(default_factory=dict)
    stages: dict[str, dict] = field(default_factory=dict)

    def section(self, name: str) -> dict:
        return dict(self.stages.get(name) or {})

    def stage_seed(self, stage: str) -> int:
        return derive_seed(self.seed, stage)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "backends": self.backends, **self.stages}

    def digest(self, *sections: str) -> str:
        """Hash of the seed, backend bindings and the named sections."""
        payload = {"seed": self.seed, "backends": self.backends}
        payload.update({s: self.stages.get(s) for s in sections})
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def parse_config(data: Any) -> PipelineConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(data) - {"seed", "backends", *STAGE_SECTIONS}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("seed must be an integer")
    backends = data.get("backends") or {}
    if not isinstance(backends, dict):
        raise ConfigError("backends must be a mapping")
    for role, spec in backends.items():
        if role not in ROLES:
            raise ConfigError(f"unknown backend role {role!r}")
        if not isinstance(spec, dict) or spec.get("kind", "none") not in ("mock", "http", "none"):
            raise ConfigError(f"backend {role!r}: kind must be mock, http or none")
        if spec.get("kind") == "http" and not spec.get("endpoint"):
            raise ConfigError(f"backend {role!r}: http kind needs an endpoint")
    stages = {}
    for name in STAGE_SECTIONS:
        section = data.get(name)
        if section is None:
            continue
        if not isinstance(section, dict):
            raise ConfigError(f"section {name!r} must be a mapping")
        stages[name] = section
    return PipelineConfig(seed=seed, backends=backends, stages=stages)


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from None
    return parse_config(data)
