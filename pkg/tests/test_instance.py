import copy
import json
from fractions import Fraction

import pytest

from fcmplan.errors import ParseError, ValidationError
from fcmplan.instance import (Category, builtin_ieee33, builtin_path, exact, instance_from_dict,
                              instance_to_dict, load_instance, save_instance)


@pytest.fixture(scope="module")
def doc():
    return json.loads(builtin_path("ieee33.json").read_text())


def test_bundled_feeder_shape():
    inst = builtin_ieee33()
    assert len(inst.network.buses) == 33 and len(inst.network.lines) == 32
    assert {t.category for t in inst.fcm_types} >= {Category.BESS, Category.FAST_GEN}
    assert sum(n.is_data_center for n in inst.nodes) == 3


def test_tree_distances_are_exact_path_lengths():
    inst = builtin_ieee33()
    # 18 hangs off the main trunk: 17 unit lines from the substation
    assert inst.km(1, 18) == 17
    assert inst.km(18, 25) == inst.km(18, 3) + inst.km(3, 25)
    for a in (1, 7, 22, 33):
        assert inst.km(a, a) == 0
        for b in (2, 18, 30):
            assert inst.km(a, b) == inst.km(b, a)


def test_exact_reads_decimal_literals():
    assert exact(0.1) == Fraction(1, 10)
    assert exact(12.5) == Fraction(25, 2)
    assert exact(3) == 3


def test_round_trip(tmp_path):
    inst = builtin_ieee33()
    save_instance(inst, tmp_path / "i.json")
    again = load_instance(tmp_path / "i.json")
    assert again == inst
    assert instance_to_dict(again) == instance_to_dict(inst)


def test_every_violation_is_reported_together(doc):
    bad = copy.deepcopy(doc)
    bad["fcm_types"][0]["eta_ch"] = 1.5
    bad["hubs"][0]["capacity_units"] = -1
    bad["risk"]["alpha"] = 1.0
    bad["nodes"][0]["shortfall_penalty"]["NOPE"] = 3.0
    with pytest.raises(ValidationError) as info:
        instance_from_dict(bad)
    paths = {p for p, _ in info.value.violations}
    assert {"fcm_types[0].eta_ch", "hubs[0].capacity_units", "risk.alpha",
            "nodes[0].shortfall_penalty.NOPE"} <= paths


def test_disconnected_feeder(doc):
    bad = copy.deepcopy(doc)
    bad["network"]["lines"] = [ln for ln in bad["network"]["lines"] if ln[:2] != [6, 26]]
    with pytest.raises(ValidationError, match="unreachable"):
        instance_from_dict(bad)


def test_storage_needs_energy_rating(doc):
    bad = copy.deepcopy(doc)
    bess = next(t for t in bad["fcm_types"] if t["category"] == "BESS")
    bess["unit_energy_rating"] = 0.0
    with pytest.raises(ValidationError, match="energy rating"):
        instance_from_dict(bad)


def test_missing_and_unknown_keys(doc):
    bad = copy.deepcopy(doc)
    del bad["risk"]
    bad["extra"] = 1
    with pytest.raises(ValidationError) as info:
        instance_from_dict(bad)
    text = str(info.value)
    assert "risk" in text and "extra" in text


def test_malformed_json_reports_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"fcm_types": [\n  1,,\n]}')
    with pytest.raises(ParseError, match="line 2"):
        load_instance(p)


def test_with_risk_keeps_everything_else():
    inst = builtin_ieee33()
    other = inst.with_risk(lam=1.0)
    assert other.risk.lam == 1.0 and other.risk.alpha == inst.risk.alpha
    assert other.nodes == inst.nodes
    assert other.km(1, 33) == inst.km(1, 33)
