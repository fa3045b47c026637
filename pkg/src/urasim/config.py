"""Config file handling (YAML key-value files mapping onto SimConfig)."""

from __future__ import annotations

import dataclasses

import yaml

from .errors import ParameterError
from .gamp import GampConfig
from .pipeline import SimConfig


def config_from_dict(data: dict) -> SimConfig:
    """Build a SimConfig, rejecting unknown keys early."""
    if not isinstance(data, dict):
        raise ParameterError("config root must be a mapping")
    data = dict(data)
    known = {f.name for f in dataclasses.fields(SimConfig)}
    unknown = set(data) - known
    if unknown:
        raise ParameterError(f"unknown config keys: {sorted(unknown)}")
    if "gamp" in data and isinstance(data["gamp"], dict):
        gamp_known = {f.name for f in dataclasses.fields(GampConfig)}
        gamp_unknown = set(data["gamp"]) - gamp_known
        if gamp_unknown:
            raise ParameterError(f"unknown gamp config keys: {sorted(gamp_unknown)}")
        data["gamp"] = GampConfig(**data["gamp"])
    return SimConfig(**data)


def load_config(path) -> SimConfig:
    with open(path) as fh:
        try:
            loaded = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise ParameterError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(loaded)


def save_config(path, config: SimConfig) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(config.snapshot(), fh, sort_keys=False)
