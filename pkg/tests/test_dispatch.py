import json

import numpy as np
import pytest
from helpers import (oracle_recourse, random_scenario, random_staged, random_tiny_instance)

from fcmplan.dispatch import (build_stage2_model, recourse_cost, response_minutes, solve_stage2)
from fcmplan.instance import COST_SCALE, builtin_ieee33, builtin_path, exact, loads_json
from fcmplan.milp import check_solution, solve_mip
from fcmplan.scenarios import GenConfig, generate_scenarios
from fcmplan.tracking import simulate_tracking


@pytest.fixture(scope="module")
def feeder():
    inst = builtin_ieee33()
    cfg = GenConfig.from_dict(loads_json(builtin_path("ieee33_gen.json").read_text()))
    return inst, generate_scenarios(inst, cfg)


def closed_form_q(inst, sc) -> int:
    """Scaled recourse cost with nothing staged: every unit short, no node stabilized.

    Each cost coefficient is rounded to whole scaled units, as in the model.
    """
    total = 0
    for sh in sc.shocks:
        node = inst.node(sh.node)
        total += sum(round(exact(node.shortfall_penalty.get(l, 0.0)) * COST_SCALE) * int(v)
                     for l, v in sh.requirement.items())
        total += round(exact(inst.risk.gamma) * exact(node.base_load) * exact(sh.duration)
                       * COST_SCALE)
    return total


def test_nothing_staged_costs_everything(feeder):
    inst, sset = feeder
    for sc in sset.scenarios:
        dec = solve_stage2({}, sc, inst)
        assert dec.q_scaled == closed_form_q(inst, sc)
        assert not any(dec.x.values()) and not any(dec.u.values())


@pytest.mark.parametrize("seed", range(12))
def test_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    inst = random_tiny_instance(rng)
    sc = random_scenario(rng, inst)
    staged = random_staged(rng, inst)
    assert solve_stage2(staged, sc, inst).q_scaled == oracle_recourse(staged, sc, inst)


def test_ample_stock_stabilizes_reachable_nodes(feeder):
    inst, sset = feeder
    # every hub holds plenty of everything
    staged = {(h.id, l): 50 for h in inst.hubs for l in inst.type_ids}
    for sc in sset.scenarios[:8]:
        dec = solve_stage2(staged, sc, inst)
        for sh in sc.shocks:
            window = inst.node(sh.node).stabilize_window
            needed = [l for l, v in sh.requirement.items() if v > 0]
            reachable = any(max(response_minutes(inst, h.id, sh.node, l) for l in needed)
                            <= window for h in inst.hubs)
            assert dec.u[sh.node] == int(reachable)
            if reachable:
                sent = {l: v for l, v in dec.delivered(sh.node).items() if v}
                assert sent == {l: v for l, v in sh.requirement.items() if v}


def test_demand_response_ignores_distance(feeder):
    inst, _ = feeder
    dr = next(t for t in inst.fcm_types if t.category.value == "DEMAND_RESPONSE")
    far = response_minutes(inst, inst.hubs[0].id, inst.nodes[-1].id, dr.id)
    assert far == pytest.approx(dr.activation_lead_time)


def test_stabilized_nodes_meet_window_and_coverage():
    rng = np.random.default_rng(42)
    for _ in range(25):
        inst = random_tiny_instance(rng, max_hubs=2, max_nodes=2)
        sc = random_scenario(rng, inst)
        staged = random_staged(rng, inst)
        model, blk = build_stage2_model(staged, sc, inst)
        sol = solve_mip(model)
        assert not check_solution(model, sol.values)
        dec = solve_stage2(staged, sc, inst)
        for sh in sc.shocks:
            if not dec.u[sh.node]:
                continue
            assert {l: v for l, v in dec.delivered(sh.node).items() if v} == \
                {l: v for l, v in sh.requirement.items() if v}
            used = [d for (i, d, _l), v in dec.x.items() if i == sh.node and v]
            needed = [l for l, v in sh.requirement.items() if v > 0]
            for d in used:
                assert max(response_minutes(inst, d, sh.node, l) for l in needed) \
                    <= inst.node(sh.node).stabilize_window + 1e-9


def test_recourse_cost_recomputation():
    rng = np.random.default_rng(3)
    inst = random_tiny_instance(rng)
    sc = random_scenario(rng, inst)
    dec = solve_stage2(random_staged(rng, inst), sc, inst)
    short, rest = recourse_cost(inst, sc, dec.x, dec.u)
    assert (short, rest) == (dec.shortfall_scaled, dec.restoration_scaled)
    assert short + rest == dec.q_scaled


def test_negative_stock_rejected(feeder):
    inst, sset = feeder
    with pytest.raises(ValueError):
        solve_stage2({(inst.hubs[0].id, inst.type_ids[0]): -1}, sset[0], inst)


def test_report_is_json(feeder):
    from fcmplan.dispatch import dumps_report

    inst, sset = feeder
    staged = {(inst.hubs[1].id, l): 3 for l in inst.type_ids}
    dec = solve_stage2(staged, sset[0], inst)
    doc = json.loads(dumps_report(dec, simulate_tracking(dec, sset[0], inst)))
    assert doc["decision"]["Q_scaled"] == dec.q_scaled
    assert doc["tracking"]["scenario_id"] == sset[0].id


def test_zero_time_limit_falls_back_to_sending_nothing(feeder):
    inst, sset = feeder
    staged = {(h.id, l): 4 for h in inst.hubs for l in inst.type_ids}
    dec = solve_stage2(staged, sset[0], inst, time_limit=0.0)
    assert dec.timed_out and dec.status == "TIMEOUT"
    assert dec.q_scaled == closed_form_q(inst, sset[0])
