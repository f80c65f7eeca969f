"""Run configuration and its JSON form."""

from __future__ import annotations

import dataclasses
import json
import math
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .pedsim import ForceParams
from .planner import CostWeights, Limits, PlannerConfig, PROFILES, SamplingConfig
from .prediction import PredictionConfig
from .risk import BoxParams, HarmCoeffs, RiskThresholds
from .scenario import RegionCosts, SpawnConfig


class ConfigError(ValueError):
    """Malformed run configuration; the message names the offending field."""


@dataclass(frozen=True)
class RunConfig:
    dt: float = 0.1
    max_ticks: int = 100
    seed: int = 0
    profile: str = "risk_aware"
    planner: PlannerConfig = PlannerConfig()
    forces: ForceParams = ForceParams()
    spawn: SpawnConfig = SpawnConfig()
    prediction: PredictionConfig = PredictionConfig()
    region_costs: RegionCosts = RegionCosts()
    cell_size: float = 1.0
    policy_actions: int = 16
    spawn_random: bool = True
    peds_first: bool = True
    stop_at_goal: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("dt: must be positive")
        if self.max_ticks < 0:
            raise ConfigError("max_ticks: must be nonnegative")
        if self.profile not in PROFILES:
            raise ConfigError(f"profile: unknown profile {self.profile!r}")
        if abs(self.planner.sampling.dt - self.dt) > 1e-12:
            raise ConfigError("planner.sampling.dt: must equal dt")
        if self.prediction.horizon + 1e-9 < self.planner.sampling.eval_horizon:
            raise ConfigError("prediction.horizon: shorter than planner.sampling.eval_horizon")

    def with_overrides(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **{k: v for k, v in kw.items() if v is not None})


def _convert(tp, value, where: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected an object")
        return _build(tp, value, where)
    if origin is typing.Union or (origin is not None and type(None) in args):
        if value is None:
            return None
        inner = [a for a in args if a is not type(None)][0]
        return _convert(inner, value, where)
    if origin is tuple:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_convert(args[0], v, f"{where}[{i}]") for i, v in enumerate(value))
        if len(args) != len(value):
            raise ConfigError(f"{where}: expected {len(args)} values")
        return tuple(_convert(a, v, f"{where}[{i}]") for i, (a, v) in enumerate(zip(args, value)))
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true or false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer")
        return value
    if tp is float:
        if value == "inf":
            return math.inf
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string")
        return value
    return value


def _build(cls, doc: dict, where: str):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - names)
    if unknown:
        prefix = f"{where}." if where else ""
        raise ConfigError(f"{prefix}{unknown[0]}: unknown field")
    kw = {}
    for k, v in doc.items():
        path = f"{where}.{k}" if where else k
        kw[k] = _convert(hints[k], v, path)
    try:
        return cls(**kw)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        msg = str(exc)
        raise ConfigError(msg if ":" in msg.split(" ")[0] else f"{where or 'config'}: {msg}") from exc


def config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config: expected a JSON object")
    doc = dict(doc)
    # keep the planner's profile in step with the top-level one
    if "profile" in doc:
        planner = dict(doc.get("planner", {}))
        planner.setdefault("profile", doc["profile"])
        doc["planner"] = planner
    cfg = _build(RunConfig, doc, "")
    if cfg.planner.profile != cfg.profile:
        cfg = dataclasses.replace(cfg, planner=dataclasses.replace(cfg.planner, profile=cfg.profile))
    return cfg


def load_config(text: str) -> RunConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return config_from_dict(doc)


def read_config(path) -> RunConfig:
    return load_config(Path(path).read_text())


def _plain(value):
    if dataclasses.is_dataclass(value):
        return {f.name: _plain(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    return value


def config_to_dict(cfg: RunConfig) -> dict:
    return _plain(cfg)


def with_profile(cfg: RunConfig, profile: str) -> RunConfig:
    if profile not in PROFILES:
        raise ConfigError(f"profile: unknown profile {profile!r}")
    return dataclasses.replace(cfg, profile=profile, planner=dataclasses.replace(cfg.planner, profile=profile))


def bundled_config(name: str) -> RunConfig:
    return read_config(Path(__file__).parent / "data" / f"{name}.config.json")


__all__ = ["RunConfig", "ConfigError", "config_from_dict", "load_config", "read_config", "config_to_dict",
           "with_profile", "bundled_config", "CostWeights", "Limits", "SamplingConfig", "BoxParams",
           "HarmCoeffs", "RiskThresholds"]
