"""Run configuration (YAML/JSON) <-> dataclass plumbing."""
from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import yaml

from .errors import ConfigurationError
from .guidance import EnergyConfig
from .sampler import SamplerConfig
from .schedule import ScheduleConfig


def sampler_config_from_dict(data: dict) -> SamplerConfig:
    data = dict(data or {})
    guidance = EnergyConfig(**data.pop("guidance", {}) or {})
    schedule = ScheduleConfig(**data.pop("schedule", {}) or {})
    known = {f.name for f in dataclasses.fields(SamplerConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    return SamplerConfig(guidance=guidance, schedule=schedule, **data)


def sampler_config_to_dict(cfg: SamplerConfig) -> dict:
    return dataclasses.asdict(cfg)


def load_config_file(path: str | Path) -> SamplerConfig:
    path = Path(path)
    text = path.read_text()
    data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    return sampler_config_from_dict(data or {})
