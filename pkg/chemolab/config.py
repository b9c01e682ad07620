"""
Run configuration documents

A document is versioned JSON (or YAML for ``.yml``/``.yaml``). Sections are layered
in order: scenario preset, config file, ``--set`` overrides, then command flags.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .exceptions import ConfigurationError
from .model import SimConfig


CONFIG_VERSION = 1

#: Keys allowed at the top of a document
DOCUMENT_KEYS = {
    "version",
    "scenario",
    "params",
    "grid",
    "initial",
    "time",
    "lyapunov",
    "seed",
    "out",
    "save_snapshots",
    "sweep",
}


@dataclass(frozen=True)
class SweepSpec:
    """
    One parameter varied over explicit values or a linear/log range
    """

    parameter: str
    values: tuple[float, ...] | None = None
    start: float | None = None
    stop: float | None = None
    count: int = 1
    scale: str = "linear"

    #: Run a simulation at each point, otherwise only thresholds
    simulate: bool = True

    def __post_init__(self):
        if self.count < 1:
            raise ConfigurationError("Sweep count must be at least 1")
        if self.scale not in ("linear", "log"):
            raise ConfigurationError(f"Unknown sweep scale {self.scale!r}")
        if self.values is None and (self.start is None or self.stop is None):
            raise ConfigurationError("Sweep needs values or a start and stop")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SweepSpec:
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"Unexpected sweep values {', '.join(sorted(unknown))}")
        data = dict(data)
        if data.get("values") is not None:
            data["values"] = tuple(float(val) for val in data["values"])
        return cls(**data)

    @property
    def key(self) -> str:
        """
        Dotted document key, a bare name is taken as a model parameter
        """
        return self.parameter if "." in self.parameter else f"params.{self.parameter}"

    def points(self) -> list[float]:
        if self.values is not None:
            return list(self.values)
        assert self.start is not None and self.stop is not None
        if self.count == 1:
            return [float(self.start)]
        if self.scale == "log":
            return [float(x) for x in np.geomspace(self.start, self.stop, self.count)]
        return [float(x) for x in np.linspace(self.start, self.stop, self.count)]


@dataclass(frozen=True)
class RunConfig:
    sim: SimConfig
    scenario: str = "custom"
    lyapunov: bool = True
    out: Path | None = None
    seed: int = 0
    save_snapshots: bool = False
    sweep: SweepSpec | None = None

    #: Pick r inside the pattern window instead of using params.r
    auto_r: bool = False

    #: Resolved document, kept so sweeps can derive per-point configs
    document: dict[str, Any] | None = None

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RunConfig:
        unknown = set(data) - DOCUMENT_KEYS
        if unknown:
            raise ConfigurationError(f"Unexpected config values {', '.join(sorted(unknown))}")
        document = copy.deepcopy(data)

        sim_data = {
            key: copy.deepcopy(data[key])
            for key in ("params", "grid", "initial", "time")
            if key in data
        }
        params = sim_data.setdefault("params", {})
        auto_r = params.get("r") == "auto"
        if auto_r:
            # Placeholder until the pattern search picks a rate
            params["r"] = 1.0

        seed = int(data.get("seed", 0))
        sweep = data.get("sweep")
        out = data.get("out")
        return cls(
            sim=SimConfig.from_dict(sim_data, seed=seed),
            scenario=str(data.get("scenario", "custom")),
            lyapunov=bool(data.get("lyapunov", True)),
            out=Path(out) if out else None,
            seed=seed,
            save_snapshots=bool(data.get("save_snapshots", False)),
            sweep=SweepSpec.from_dict(sweep) if sweep else None,
            auto_r=auto_r,
            document=document,
        )

    def as_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {"version": CONFIG_VERSION, "scenario": self.scenario}
        data.update(self.sim.as_dict())
        data.update(
            {
                "lyapunov": self.lyapunov,
                "seed": self.seed,
                "out": str(self.out) if self.out else None,
                "save_snapshots": self.save_snapshots,
            }
        )
        return data


def load_document(path: Path) -> dict[str, Any]:
    """
    Read a config document and check its version
    """
    if not path.exists():
        raise ConfigurationError(f"Cannot load {path} - file not found")

    raw = path.read_text(encoding="utf-8")
    suffix = path.suffix.lower()
    try:
        if suffix in (".yml", ".yaml"):
            data = yaml.safe_load(raw)
        elif suffix == ".json":
            data = json.loads(raw)
        else:
            raise ConfigurationError(
                f"Config {path} filetype invalid - must be .json, .yml or .yaml"
            )
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigurationError(f"Cannot parse {path}: {e}") from e

    if not isinstance(data, dict):
        raise ConfigurationError(f"Config {path} must hold a mapping")
    version = data.pop("version", None)
    if version != CONFIG_VERSION:
        raise ConfigurationError(f"Invalid config version {version!r} in {path}")
    return data


def merge(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    """
    Deep merge, values in ``override`` win
    """
    merged = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge(merged[key], val)
        else:
            merged[key] = copy.deepcopy(val)
    return merged


def set_key(data: dict[str, Any], key: str, value: Any) -> dict[str, Any]:
    """
    Return a copy of ``data`` with a dotted key set
    """
    parts = key.split(".")
    if not all(parts):
        raise ConfigurationError(f"Invalid config key {key!r}")
    override: dict[str, Any] = {}
    node = override
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value
    return merge(data, override)


def apply_overrides(data: dict[str, Any], pairs: tuple[str, ...] | list[str]) -> dict[str, Any]:
    """
    Apply ``key=value`` pairs, values parsed as YAML scalars
    """
    for pair in pairs:
        if "=" not in pair:
            raise ConfigurationError(f"Override {pair!r} is not key=value")
        key, raw = pair.split("=", 1)
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Cannot parse override {pair!r}: {e}") from e
        data = set_key(data, key.strip(), value)
    return data


def json_safe(value: Any) -> Any:
    """
    Replace non-finite floats with None so the output is strict JSON
    """
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {key: json_safe(val) for key, val in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(val) for val in value]
    return value
