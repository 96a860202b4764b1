import dataclasses
import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fcmplan.errors import ConfigError, ParseError, ValidationError
from fcmplan.instance import builtin_ieee33, builtin_path, loads_json
from fcmplan.scenarios import (GenConfig, dumps_set, generate_scenarios, load_set,
                               profile_to_requirements, save_set, set_from_dict, set_to_dict,
                               trapezoid)


@pytest.fixture(scope="module")
def inst():
    return builtin_ieee33()


@pytest.fixture(scope="module")
def cfg():
    return GenConfig.from_dict(loads_json(builtin_path("ieee33_gen.json").read_text()))


def test_same_seed_same_set(inst, cfg):
    assert dumps_set(generate_scenarios(inst, cfg)) == dumps_set(generate_scenarios(inst, cfg))
    other = dataclasses.replace(cfg, seed=cfg.seed + 1)
    assert dumps_set(generate_scenarios(inst, other)) != dumps_set(generate_scenarios(inst, cfg))


def test_generated_set_respects_config(inst, cfg):
    sset = generate_scenarios(inst, cfg)
    assert len(sset) == cfg.scenario_count
    assert math.fsum(sset.probabilities) == pytest.approx(1.0)
    weighted = {n.id for n in inst.nodes if n.volatility_weight > 0}
    for sc in sset.scenarios:
        lo, hi = cfg.shocks_per_scenario
        assert lo <= len(sc.shocks) <= hi
        assert len(set(sc.affected)) == len(sc.affected)
        assert set(sc.affected) <= weighted
        for sh in sc.shocks:
            load = inst.node(sh.node).base_load
            assert sh.peak <= cfg.magnitude_fraction[1] * load + 1e-9
            assert cfg.duration_hours[0] <= sh.duration <= cfg.duration_hours[1]
            assert all(v >= 0 for v in sh.requirement.values())


def test_round_trip(tmp_path, inst, cfg):
    sset = generate_scenarios(inst, cfg)
    save_set(sset, tmp_path / "s.json")
    again = load_set(tmp_path / "s.json", inst)
    assert dumps_set(again) == dumps_set(sset)
    assert set_to_dict(set_from_dict(set_to_dict(sset))) == set_to_dict(sset)


def test_unknown_node_rejected(tmp_path, inst, cfg):
    doc = set_to_dict(generate_scenarios(inst, cfg))
    doc["scenarios"][0]["shocks"][0]["node"] = "NOWHERE"
    p = tmp_path / "s.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(ValidationError, match="NOWHERE"):
        load_set(p, inst)


def test_malformed_set():
    with pytest.raises(ParseError):
        set_from_dict({"scenarios": [{"id": 0}]})


@pytest.mark.parametrize("change", [
    {"scenario_count": 0},
    {"seed": -1},
    {"magnitude_fraction": (1.0, 0.5)},
    {"sign_mix": 1.5},
    {"type_split": {"BESS": 0.7}},
])
def test_bad_config(cfg, change):
    with pytest.raises(ConfigError):
        dataclasses.replace(cfg, **change).validate()


def test_config_against_instance(inst, cfg):
    with pytest.raises(ConfigError, match="unknown FCM types"):
        dataclasses.replace(cfg, type_split={"XX": 1.0}).validate(inst)
    with pytest.raises(ConfigError, match="exceeds"):
        dataclasses.replace(cfg, shocks_per_scenario=(1, 40)).validate(inst)


@settings(max_examples=200, deadline=None)
@given(peak=st.floats(-5000, 5000, allow_nan=False), steps=st.integers(1, 40),
       slew=st.floats(0.01, 1.0))
def test_trapezoid_shape(peak, steps, slew):
    prof = trapezoid(peak, steps, slew)
    assert len(prof) == steps
    assert all(abs(v) <= abs(peak) + 1e-9 for v in prof)
    assert all(v * peak >= 0 for v in prof)
    # slew never exceeds the configured fraction of the peak per step
    prev = 0.0
    for v in list(prof) + [0.0]:
        assert abs(v - prev) <= slew * abs(peak) + 1e-9
        prev = v


def test_requirements_cover_peak(inst):
    split = {"BESS": 0.5, "FAST_GEN": 0.3, "DR": 0.2}
    req = profile_to_requirements((100.0, 1200.0, 600.0), inst.fcm_types, split)
    for t in inst.fcm_types:
        assert req[t.id] * t.unit_power_rating >= 1200.0 * split[t.id] - 1e-9
        assert (req[t.id] - 1) * t.unit_power_rating < 1200.0 * split[t.id]
