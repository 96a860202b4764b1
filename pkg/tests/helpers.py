"""Random tiny instances and brute-force reference solutions shared by the tests."""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np

from fcmplan.dispatch import build_stage2_model, scaled
from fcmplan.instance import COST_SCALE, Instance, exact, instance_from_dict
from fcmplan.milp import Status, enumerate_oracle
from fcmplan.risk import cvar_discrete
from fcmplan.scenarios import DemandShockScenario, NodeShock, ScenarioSet, trapezoid

CATALOG = [
    {"id": "B", "category": "BESS", "unit_power_rating": 200.0, "unit_energy_rating": 400.0,
     "eta_ch": 0.95, "eta_dis": 0.95, "unit_ramp_limit": 200.0, "unit_transport_cost": 2.0,
     "activation_lead_time": 2.0},
    {"id": "G", "category": "FAST_GEN", "unit_power_rating": 300.0, "unit_energy_rating": 0.0,
     "eta_ch": 1.0, "eta_dis": 1.0, "unit_ramp_limit": 150.0, "unit_transport_cost": 3.0,
     "activation_lead_time": 5.0},
    {"id": "D", "category": "DEMAND_RESPONSE", "unit_power_rating": 100.0,
     "unit_energy_rating": 0.0, "eta_ch": 1.0, "eta_dis": 1.0, "unit_ramp_limit": 100.0,
     "unit_transport_cost": 0.5, "activation_lead_time": 1.0},
]


def _pick(rng, seq):
    return seq[int(rng.integers(len(seq)))]


def random_tiny_instance(rng: np.random.Generator, *, max_types: int = 2, max_hubs: int = 2,
                         max_suppliers: int = 2, max_nodes: int = 2, max_inventory: int = 2,
                         lam=None, alpha=None) -> Instance:
    """Path feeder with a handful of buses; everything else drawn small."""
    nbus = int(rng.integers(3, 7))
    buses = list(range(1, nbus + 1))
    lines = [[b, b + 1, float(rng.integers(1, 4))] for b in buses[:-1]]
    ntypes = int(rng.integers(1, max_types + 1))
    types = [CATALOG[k] for k in sorted(rng.choice(len(CATALOG), ntypes, replace=False))]
    tids = [t["id"] for t in types]
    suppliers = [{"id": f"S{k}", "bus": int(_pick(rng, buses)),
                  "inventory": {l: int(rng.integers(0, max_inventory + 1)) for l in tids}}
                 for k in range(int(rng.integers(1, max_suppliers + 1)))]
    hubs = [{"id": f"H{k}", "bus": int(_pick(rng, buses)),
             "setup_cost": float(rng.integers(1, 40)) * 12.5,
             "capacity_units": int(rng.integers(1, 4))}
            for k in range(int(rng.integers(1, max_hubs + 1)))]
    nodes = [{"id": f"N{k}", "bus": int(_pick(rng, buses)),
              "base_load": float(rng.integers(1, 11)) * 50.0, "is_data_center": bool(k == 0),
              "volatility_weight": 1.0, "stabilize_window": float(rng.integers(3, 16)),
              "shortfall_penalty": {l: float(rng.integers(1, 30)) * 5.0 for l in tids}}
             for k in range(int(rng.integers(1, max_nodes + 1)))]
    doc = {
        "fcm_types": types, "suppliers": suppliers, "hubs": hubs, "nodes": nodes,
        "network": {"buses": buses, "lines": lines},
        "risk": {"alpha": alpha if alpha is not None else _pick(rng, [0.0, 0.5, 0.8, 0.9]),
                 "lambda": lam if lam is not None else _pick(rng, [0.0, 0.25, 0.5, 0.75, 1.0]),
                 "gamma": _pick(rng, [0.1, 0.25, 0.5, 1.0]),
                 "travel_speed": _pick(rng, [0.5, 1.0, 2.0])},
        "time_step_minutes": 15.0,
    }
    return instance_from_dict(doc)


def random_shock(rng: np.random.Generator, inst: Instance, node_id: str,
                 max_req: int = 2) -> NodeShock:
    node = inst.node(node_id)
    req = {l: int(rng.integers(0, max_req + 1)) for l in inst.type_ids}
    if not any(req.values()):
        req[_pick(rng, inst.type_ids)] = 1
    sign = 1.0 if rng.random() < 0.8 else -1.0
    peak = sign * node.base_load * float(rng.uniform(0.3, 1.0))
    duration = _pick(rng, [0.5, 1.0, 1.5])
    steps = max(1, round(duration * 60 / inst.time_step_minutes))
    return NodeShock(node_id, req, trapezoid(peak, steps, float(rng.uniform(0.2, 0.6))),
                     duration)


def random_scenario(rng: np.random.Generator, inst: Instance, sid: int = 0,
                    probability: float = 1.0, max_req: int = 2) -> DemandShockScenario:
    ids = [n.id for n in inst.nodes]
    k = int(rng.integers(1, len(ids) + 1))
    picked = sorted(rng.choice(len(ids), k, replace=False))
    return DemandShockScenario(sid, probability,
                               tuple(random_shock(rng, inst, ids[j], max_req) for j in picked))


def random_scenario_set(rng: np.random.Generator, inst: Instance, max_scenarios: int = 3,
                        max_req: int = 2) -> ScenarioSet:
    S = int(rng.integers(1, max_scenarios + 1))
    return ScenarioSet(tuple(random_scenario(rng, inst, s, 1.0 / S, max_req) for s in range(S)),
                       seed=None, time_step_minutes=inst.time_step_minutes)


def random_staged(rng: np.random.Generator, inst: Instance, hi: int = 3) -> dict:
    return {(h.id, l): int(rng.integers(0, hi + 1)) for h in inst.hubs for l in inst.type_ids}


def oracle_recourse(staged: dict, scenario: DemandShockScenario, inst: Instance) -> int:
    """Scaled Q by exhaustive enumeration of the dispatch model."""
    model, _ = build_stage2_model(staged, scenario, inst)
    sol = enumerate_oracle(model)
    assert sol.status is Status.OPTIMAL
    return int(round(sol.objective))


def oracle_plan_total(inst: Instance, sset: ScenarioSet) -> Fraction:
    """Exact optimal stage-one objective, in currency units.

    Every first-stage decision is enumerated. Recourse costs come from
    exhaustive enumeration of each scenario's dispatch model (cached on the
    staged stock, clipped to what the scenario could ever use), and the
    mean-CVaR blend is evaluated in exact arithmetic.
    """
    types = inst.type_ids
    hubs = [h.id for h in inst.hubs]
    probs = [Fraction(1, len(sset))] * len(sset)
    lam, alpha = exact(inst.risk.lam), exact(inst.risk.alpha)
    need = [{l: sum(int(sh.requirement.get(l, 0)) for sh in sc.shocks) for l in types}
            for sc in sset.scenarios]
    keys = [(l, h.id, g.id) for l in types for h in inst.hubs for g in inst.suppliers]
    ranges = [range(min(g.inventory.get(l, 0), h.capacity_units) + 1)
              for l in types for h in inst.hubs for g in inst.suppliers]
    unit_cost = {}
    for l, d, g in keys:
        sup = next(s for s in inst.suppliers if s.id == g)
        unit_cost[l, d, g] = scaled(exact(inst.fcm(l).unit_transport_cost)
                                    * inst.km(sup.bus, inst.hub(d).bus))
    cache: dict = {}
    best = None
    for y_vals in itertools.product(*ranges):
        y = dict(zip(keys, y_vals))
        if any(sum(y[l, d, g.id] for d in hubs) > g.inventory.get(l, 0)
               for g in inst.suppliers for l in types):
            continue
        load = {d: sum(y[l, d, g.id] for l in types for g in inst.suppliers) for d in hubs}
        if any(load[h.id] > h.capacity_units for h in inst.hubs):
            continue
        # Opening a hub that receives nothing only adds setup cost.
        setup = sum(scaled(exact(h.setup_cost)) for h in inst.hubs if load[h.id] > 0)
        transport = sum(unit_cost[k] * v for k, v in y.items())
        staged = {(d, l): sum(y[l, d, g.id] for g in inst.suppliers) for d in hubs for l in types}
        q = []
        for s, sc in enumerate(sset.scenarios):
            clip = {k: min(v, need[s][k[1]]) for k, v in staged.items()}
            key = (s, tuple(sorted(clip.items())))
            if key not in cache:
                cache[key] = oracle_recourse(clip, sc, inst)
            q.append(Fraction(cache[key], COST_SCALE))
        mean = sum((p * v for p, v in zip(probs, q)), Fraction(0))
        cvar, _ = cvar_discrete(q, probs, alpha)
        total = Fraction(setup + transport, COST_SCALE) + (1 - lam) * mean + lam * cvar
        if best is None or total < best:
            best = total
    return best
