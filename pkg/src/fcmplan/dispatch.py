"""Stage-II dispatch: given staged units and one realized scenario, send FCM
units from hubs to the shocked nodes at least shortfall + restoration cost.

The per-scenario block built here is shared with the extensive form in
:mod:`fcmplan.planner`; there the staged quantities are shipment variables
instead of constants.

Model, for every affected node ``i``, hub ``d`` and FCM type ``l``::

    x[i,d,l]  integer units sent         0 <= x <= min(req[i,l], stock[d,l])
    w[i,d]    binary, hub d serves i
    u[i]      binary, node stabilized
    t[i]      response time (minutes)

    sum_i x[i,d,l] <= staged[d,l]                    coupling
    sum_d x[i,d,l] <= req[i,l]                       demand cap
    sum_{d near} x[i,d,l] >= req[i,l] * u[i]         full coverage to stabilize
    x[i,d,l] <= req[i,l] * w[i,d]                    serving link
    t[i] >= a[d,i] * w[i,d]                          response time
    t[i] <= window[i] + Mt[i] * (1 - u[i])           Mt[i] = max_d a[d,i]
    w[i,d] + u[i] <= 1                               for far hubs, a[d,i] > window[i]

A far hub serving the node pushes ``t`` past the window, so the last row
and the restriction of the coverage sum to near hubs are implied by the
big-M pair on integer points. They are stated anyway because they make the
LP relaxation far tighter.

    Q = sum P[l,i] (req[i,l] - sum_d x[i,d,l]) + gamma * sum (1 - u[i]) load[i] T[i]

``a[d,i]`` is travel time (network km / speed) plus activation lead time,
maximized over the types the node needs; demand response travels nowhere
and only pays its lead time. Costs are scaled by ``COST_SCALE`` and rounded
so that Q is an integer at every integer point.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from .errors import ModelingError
from .instance import COST_SCALE, Category, Instance, exact
from .milp import INF, MilpModel, Status, VarKind, check_solution, solve_mip
from .scenarios import DemandShockScenario

# Staged availability for one (hub, type): (variable terms, constant).
StagedExpr = tuple[list[tuple[int, float]], float]


def scaled(value: Fraction) -> int:
    return round(value * COST_SCALE)


def response_minutes(instance: Instance, hub_id: str, node_id: str, type_id: str) -> float:
    fcm = instance.fcm(type_id)
    lead = exact(fcm.activation_lead_time)
    if fcm.category is Category.DEMAND_RESPONSE:
        return float(lead)
    km = instance.km(instance.hub(hub_id).bus, instance.node(node_id).bus)
    return float(km / exact(instance.risk.travel_speed) + lead)


def restoration_cost(instance: Instance, node_id: str, duration: float) -> int:
    """Scaled gamma * load * T for one node."""
    node = instance.node(node_id)
    return scaled(exact(instance.risk.gamma) * exact(node.base_load) * exact(duration))


@dataclass
class Stage2Block:
    scenario_id: int
    x: dict[tuple[str, str, str], int] = field(default_factory=dict)
    w: dict[tuple[str, str], int] = field(default_factory=dict)
    u: dict[str, int] = field(default_factory=dict)
    t: dict[str, int] = field(default_factory=dict)
    objective_terms: list[tuple[int, int]] = field(default_factory=list)
    objective_constant: int = 0  # scaled Q when nothing is dispatched

    @property
    def size(self) -> int:
        return len(self.x) + len(self.w) + len(self.u) + len(self.t)


def add_stage2_block(model: MilpModel, instance: Instance, scenario: DemandShockScenario,
                     staged: Mapping[tuple[str, str], StagedExpr],
                     stock_cap: Mapping[tuple[str, str], float], prefix: str = "",
                     hub_open: Mapping[str, int] | None = None) -> Stage2Block:
    """Append one scenario's dispatch variables and rows to ``model``.

    ``hub_open`` maps hub ids to binary columns; when given, a hub may only
    serve while open.
    """
    blk = Stage2Block(scenario.id)
    hubs = [h.id for h in instance.hubs]
    types = instance.type_ids
    for sh in scenario.shocks:
        i = sh.node
        node = instance.node(i)
        req = {l: int(sh.requirement.get(l, 0)) for l in types}
        needed = [l for l in types if req[l] > 0]
        a = {d: max((response_minutes(instance, d, i, l) for l in needed), default=0.0)
             for d in hubs}
        m_t = max(a.values(), default=0.0)
        far = [d for d in hubs if a[d] > node.stabilize_window]
        for d in hubs:
            for l in types:
                ub = min(req[l], stock_cap.get((d, l), 0))
                blk.x[i, d, l] = model.add_var(f"{prefix}x[{i},{d},{l}]", 0, ub, VarKind.INTEGER)
            blk.w[i, d] = model.add_var(f"{prefix}w[{i},{d}]", kind=VarKind.BINARY)
        blk.u[i] = model.add_var(f"{prefix}u[{i}]", kind=VarKind.BINARY)
        blk.t[i] = model.add_var(f"{prefix}t[{i}]", 0.0, node.stabilize_window + m_t)

        for l in types:
            xs = [(blk.x[i, d, l], 1.0) for d in hubs]
            model.add_constraint(xs, "<=", req[l], f"{prefix}cap[{i},{l}]")
            if req[l] > 0:
                near = [(blk.x[i, d, l], 1.0) for d in hubs if d not in far]
                model.add_constraint(near + [(blk.u[i], -req[l])], ">=", 0,
                                     f"{prefix}cover[{i},{l}]")
                for d in hubs:
                    model.add_constraint([(blk.x[i, d, l], 1.0), (blk.w[i, d], -req[l])], "<=", 0,
                                         f"{prefix}link[{i},{d},{l}]")
        for d in hubs:
            if a[d] > 0:
                model.add_constraint([(blk.t[i], 1.0), (blk.w[i, d], -a[d])], ">=", 0,
                                     f"{prefix}resp[{i},{d}]")
        model.add_constraint([(blk.t[i], 1.0), (blk.u[i], m_t)], "<=",
                             node.stabilize_window + m_t, f"{prefix}window[{i}]")
        for d in far:
            model.add_constraint([(blk.w[i, d], 1.0), (blk.u[i], 1.0)], "<=", 1,
                                 f"{prefix}far[{i},{d}]")
        if hub_open is not None:
            for d in hubs:
                model.add_constraint([(blk.w[i, d], 1.0), (hub_open[d], -1.0)], "<=", 0,
                                     f"{prefix}open[{i},{d}]")

        r_i = restoration_cost(instance, i, sh.duration)
        blk.objective_constant += r_i
        blk.objective_terms.append((blk.u[i], -r_i))
        for l in types:
            p = scaled(exact(node.shortfall_penalty.get(l, 0.0)))
            blk.objective_constant += p * req[l]
            if p:
                blk.objective_terms.extend((blk.x[i, d, l], -p) for d in hubs)

    for d in hubs:
        for l in types:
            xs = [(blk.x[i, d, l], 1.0) for i in scenario.affected]
            terms, const = staged.get((d, l), ([], 0.0))
            model.add_constraint(xs + [(v, -c) for v, c in terms], "<=", const,
                                 f"{prefix}couple[{d},{l}]")
    return blk


def build_stage2_model(staged: Mapping[tuple[str, str], int], scenario: DemandShockScenario,
                       instance: Instance) -> tuple[MilpModel, Stage2Block]:
    """Stand-alone dispatch MILP against fixed staged units per (hub, type)."""
    for key, v in staged.items():
        if v < 0:
            raise ValueError(f"staged units for {key} must be >= 0")
    model = MilpModel(name=f"stage2_s{scenario.id}")
    blk = add_stage2_block(model, instance, scenario,
                           {k: ([], float(v)) for k, v in staged.items()},
                           {k: v for k, v in staged.items()})
    model.set_objective(blk.objective_terms, blk.objective_constant)
    return model, blk


@dataclass
class DispatchDecision:
    scenario_id: int
    x: dict[tuple[str, str, str], int]
    w: dict[tuple[str, str], int]
    u: dict[str, int]
    t: dict[str, float]
    q_scaled: int
    shortfall_scaled: int
    restoration_scaled: int
    status: str = "OPTIMAL"
    timed_out: bool = False
    nodes: int = 0
    solve_time: float = 0.0

    @property
    def q(self) -> float:
        return self.q_scaled / COST_SCALE

    @property
    def shortfall_cost(self) -> float:
        return self.shortfall_scaled / COST_SCALE

    @property
    def restoration_cost(self) -> float:
        return self.restoration_scaled / COST_SCALE

    def delivered(self, node_id: str) -> dict[str, int]:
        """Units per FCM type arriving at a node, summed over hubs."""
        out: dict[str, int] = {}
        for (i, _d, l), v in self.x.items():
            if i == node_id:
                out[l] = out.get(l, 0) + v
        return out

    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "status": self.status,
            "timed_out": self.timed_out,
            "Q": self.q,
            "Q_scaled": self.q_scaled,
            "shortfall_cost": self.shortfall_cost,
            "restoration_cost": self.restoration_cost,
            "x": [{"node": i, "hub": d, "type": l, "units": v}
                  for (i, d, l), v in self.x.items() if v],
            "w": [{"node": i, "hub": d} for (i, d), v in self.w.items() if v],
            "u": dict(self.u),
            "t": dict(self.t),
            "solver": {"nodes": self.nodes, "solve_time_s": self.solve_time},
        }


def recourse_cost(instance: Instance, scenario: DemandShockScenario,
                  x: Mapping[tuple[str, str, str], int], u: Mapping[str, int]) -> tuple[int, int]:
    """Scaled (shortfall, restoration) cost of integer dispatch values."""
    shortfall = 0
    restoration = 0
    for sh in scenario.shocks:
        node = instance.node(sh.node)
        for l in instance.type_ids:
            sent = sum(v for (i, _d, ll), v in x.items() if i == sh.node and ll == l)
            p = scaled(exact(node.shortfall_penalty.get(l, 0.0)))
            shortfall += p * (int(sh.requirement.get(l, 0)) - sent)
        restoration += (1 - u[sh.node]) * restoration_cost(instance, sh.node, sh.duration)
    return shortfall, restoration


def decision_from_values(blk: Stage2Block, values, instance: Instance,
                         scenario: DemandShockScenario) -> DispatchDecision:
    x = {k: int(round(values[j])) for k, j in blk.x.items()}
    w = {k: int(round(values[j])) for k, j in blk.w.items()}
    u = {k: int(round(values[j])) for k, j in blk.u.items()}
    t = {k: float(values[j]) for k, j in blk.t.items()}
    shortfall, restoration = recourse_cost(instance, scenario, x, u)
    if shortfall < 0:
        raise ModelingError(f"negative shortfall term in scenario {scenario.id}")
    return DispatchDecision(scenario.id, x, w, u, t, shortfall + restoration, shortfall,
                            restoration)


def solve_stage2(staged: Mapping[tuple[str, str], int], scenario: DemandShockScenario,
                 instance: Instance, *, time_limit: float = 300.0) -> DispatchDecision:
    model, blk = build_stage2_model(staged, scenario, instance)
    sol = solve_mip(model, time_limit=time_limit)
    values = sol.values
    if values is None and sol.status is Status.TIMEOUT:
        # Sending nothing is always feasible; it stands in as the incumbent.
        values = [0.0] * model.num_vars
    elif values is None:
        raise ModelingError(f"stage-II model for scenario {scenario.id} reported {sol.status.value}")
    violations = check_solution(model, values)
    if violations:
        raise ModelingError(f"stage-II solution violates {violations[:3]}")
    dec = decision_from_values(blk, values, instance, scenario)
    if sol.values is not None and abs(dec.q - sol.objective / COST_SCALE) > 1e-6:
        raise ModelingError(f"recomputed Q {dec.q_scaled} != solver objective {sol.objective}")
    dec.status = sol.status.value
    dec.timed_out = sol.timed_out
    dec.nodes = sol.nodes
    dec.solve_time = sol.solve_time
    return dec


def dumps_report(decision: DispatchDecision, tracking) -> str:
    doc = {"decision": decision.to_dict(), "tracking": tracking.to_dict()}
    return json.dumps(doc, indent=1) + "\n"
