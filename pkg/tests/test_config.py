import math

import pytest
from hypothesis import given, strategies as st

from pedrisk.config import (ConfigError, RunConfig, bundled_config, config_from_dict, config_to_dict, load_config,
                            with_profile)


def test_defaults_round_trip():
    cfg = RunConfig()
    assert config_from_dict(config_to_dict(cfg)) == cfg


def test_bundled_round_trip():
    for name in ("straight_road", "crosswalk"):
        cfg = bundled_config(name)
        assert config_from_dict(config_to_dict(cfg)) == cfg


def test_aggressive_thresholds_serialize():
    doc = config_to_dict(with_profile(RunConfig(), "aggressive"))
    assert doc["profile"] == doc["planner"]["profile"] == "aggressive"
    cfg = config_from_dict({"planner": {"thresholds": {"r_max": "inf"}}})
    assert math.isinf(cfg.planner.thresholds.r_max)


@pytest.mark.parametrize("doc, field", [
    ({"planner": {"harm": {"c9": 1}}}, "planner.harm.c9"),
    ({"dt": "fast"}, "dt"),
    ({"profile": "reckless"}, "profile"),
    ({"planner": {"limits": {"a_min": 2.0}}}, "a_min"),
    ({"max_ticks": 1.5}, "max_ticks"),
    ({"planner": {"sampling": {"horizons": [2, "x"]}}}, "planner.sampling.horizons[1]"),
])
def test_errors_name_field(doc, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.").replace("[", r"\[").replace("]", r"\]")):
        config_from_dict(doc)


def test_invalid_json_position():
    with pytest.raises(ConfigError, match="line 2 column"):
        load_config('{"dt": 0.1,\n  oops}')


@given(st.sampled_from(["risk_aware", "aggressive", "baseline"]), st.integers(0, 2**31))
def test_profile_sync(profile, seed):
    cfg = config_from_dict({"profile": profile, "seed": seed})
    assert cfg.planner.profile == profile and cfg.seed == seed
