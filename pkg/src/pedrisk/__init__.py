"""Pedestrian crowd simulation with a risk-aware Frenet planner."""

from .config import RunConfig, bundled_config, config_from_dict, load_config, read_config, with_profile
from .planner import PROFILES, EgoState, PlannerConfig, plan
from .risk import EgoBox, HarmCoeffs, RiskThresholds, bvn_cdf, box_probability, collision_probability, harm
from .scenario import Scenario, bundled_scenario, load_scenario, read_scenario
from .simloop import Environment, Metrics, RunResult, batch, derive_seeds, run

__version__ = "0.1.0"

__all__ = ["RunConfig", "bundled_config", "config_from_dict", "load_config", "read_config", "with_profile",
           "PROFILES", "EgoState", "PlannerConfig", "plan", "EgoBox", "HarmCoeffs", "RiskThresholds", "bvn_cdf",
           "box_probability", "collision_probability", "harm", "Scenario", "bundled_scenario", "load_scenario",
           "read_scenario", "Environment", "Metrics", "RunResult", "batch", "derive_seeds", "run"]
