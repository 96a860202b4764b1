"""Stage-I planning: hub activation and pre-positioning under a mean-CVaR objective.

The extensive form holds, in this order,

* ``z[d]`` (binary, hub open) and ``y[l,d,g]`` (integer, units of type ``l``
  shipped from supplier ``g`` to hub ``d``),
* one dispatch block per scenario (see :func:`fcmplan.dispatch.add_stage2_block`)
  whose coupling rows read the staged stock ``sum_g y[l,d,g]``,
* ``Q[s]`` equal to the block's recourse expression and ``eta[s]`` with
  ``eta[s] >= Q[s] - zeta``,
* the threshold ``zeta``.

Variable count is therefore ``|D| + |L||D||G| + sum_s (block_s + 2) + 1``.

Objective (all costs scaled by ``COST_SCALE``)::

    sum c_d z_d + sum b_l km(g,d) y[l,d,g]
        + (1 - lam) sum_s p_s Q_s + lam (zeta + sum_s p_s eta_s / (1 - alpha))
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

from . import FORMAT_VERSION
from .dispatch import Stage2Block, add_stage2_block, scaled, solve_stage2
from .errors import ModelingError, ParseError
from .instance import COST_SCALE, Instance, exact
from .milp import MilpModel, Status, VarKind, check_solution, solve_mip
from .risk import cvar_discrete
from .scenarios import ScenarioSet

BREAKDOWN_TOL = 1e-6


def exact_probabilities(sset: ScenarioSet) -> list[Fraction]:
    probs = sset.probabilities
    n = len(probs)
    if all(abs(p - 1.0 / n) <= 1e-12 for p in probs):
        return [Fraction(1, n)] * n
    return [exact(p) for p in probs]


@dataclass
class ExtensiveForm:
    model: MilpModel
    z: dict[str, int]
    y: dict[tuple[str, str, str], int]  # (type, hub, supplier) -> column
    blocks: list[Stage2Block]
    q: list[int]
    eta: list[int]
    zeta: int
    setup_terms: list[tuple[int, int]]
    transport_terms: list[tuple[int, int]]
    probabilities: list[Fraction]
    lam: float
    alpha: float

    @property
    def first_stage_size(self) -> int:
        return len(self.z) + len(self.y)


def build_extensive_form(instance: Instance, scenarios: ScenarioSet) -> ExtensiveForm:
    lam, alpha = instance.risk.lam, instance.risk.alpha
    probs = exact_probabilities(scenarios)
    types = instance.type_ids
    model = MilpModel(name="extensive_form")

    z = {h.id: model.add_var(f"z[{h.id}]", kind=VarKind.BINARY) for h in instance.hubs}
    y = {}
    for l in types:
        for h in instance.hubs:
            for g in instance.suppliers:
                ub = min(g.inventory.get(l, 0), h.capacity_units)
                y[l, h.id, g.id] = model.add_var(f"y[{l},{h.id},{g.id}]", 0, ub, VarKind.INTEGER)

    for g in instance.suppliers:
        for l in types:
            model.add_constraint([(y[l, h.id, g.id], 1.0) for h in instance.hubs], "<=",
                                 g.inventory.get(l, 0), f"inventory[{g.id},{l}]")
    for h in instance.hubs:
        terms = [(y[l, h.id, g.id], 1.0) for l in types for g in instance.suppliers]
        model.add_constraint(terms + [(z[h.id], -h.capacity_units)], "<=", 0,
                             f"hub_capacity[{h.id}]")

    setup_terms = [(z[h.id], scaled(exact(h.setup_cost))) for h in instance.hubs]
    transport_terms = []
    for (l, d, g), j in y.items():
        unit = exact(instance.fcm(l).unit_transport_cost)
        km = instance.km(next(s.bus for s in instance.suppliers if s.id == g), instance.hub(d).bus)
        transport_terms.append((j, scaled(unit * km)))

    staged = {(h.id, l): ([(y[l, h.id, g.id], 1.0) for g in instance.suppliers], 0.0)
              for h in instance.hubs for l in types}
    stock_cap = {(h.id, l): min(h.capacity_units, sum(g.inventory.get(l, 0)
                                                      for g in instance.suppliers))
                 for h in instance.hubs for l in types}

    blocks, q, eta = [], [], []
    for s, sc in enumerate(scenarios.scenarios):
        blk = add_stage2_block(model, instance, sc, staged, stock_cap, prefix=f"s{sc.id}.",
                               hub_open=z)
        q_max = blk.objective_constant
        qs = model.add_var(f"Q[{sc.id}]", 0.0, q_max)
        model.add_constraint([(qs, 1.0)] + [(j, -c) for j, c in blk.objective_terms], "=",
                             blk.objective_constant, f"recourse[{sc.id}]")
        es = model.add_var(f"eta[{sc.id}]", 0.0, q_max)
        blocks.append(blk)
        q.append(qs)
        eta.append(es)
    zmax = max((b.objective_constant for b in blocks), default=0)
    zeta = model.add_var("zeta", 0.0, zmax)
    for qs, es in zip(q, eta):
        model.add_constraint([(es, 1.0), (qs, -1.0), (zeta, 1.0)], ">=", 0, f"tail[{qs}]")

    objective = list(setup_terms) + list(transport_terms)
    if lam < 1:
        objective += [(qs, (1 - lam) * float(p)) for qs, p in zip(q, probs)]
    if lam > 0:
        objective.append((zeta, lam))
        objective += [(es, lam * float(p) / (1 - alpha)) for es, p in zip(eta, probs)]
    model.set_objective(objective)
    return ExtensiveForm(model, z, y, blocks, q, eta, zeta, setup_terms, transport_terms,
                         probs, lam, alpha)


@dataclass
class StageOnePlan:
    z: dict[str, int]
    y: dict[tuple[str, str, str], int]  # (type, hub, supplier) -> units
    setup_scaled: int
    transport_scaled: int
    q_scaled: list[int]
    probabilities: list[Fraction]
    lam: float
    alpha: float
    zeta: float = 0.0
    eta: list[float] = field(default_factory=list)
    status: str = "OPTIMAL"
    timed_out: bool = False
    nodes: int = 0
    lp_iterations: int = 0
    solve_time: float = 0.0
    solver_objective: float = math.nan  # scaled, as reported by the solver
    ef_cvar: float = math.nan  # scaled CVaR term read off the raw extensive-form values
    ef_q_scaled: list[int] = field(default_factory=list)  # raw extensive-form Q, before settling
    seed: int | None = None

    # exact values, in currency units
    def risk_terms(self) -> tuple[Fraction, Fraction]:
        q = [Fraction(v, COST_SCALE) for v in self.q_scaled]
        mean = sum((p * v for p, v in zip(self.probabilities, q)), Fraction(0))
        cvar, _ = cvar_discrete(q, self.probabilities, exact(self.alpha))
        return mean, cvar

    def exact_total(self) -> Fraction:
        lam = exact(self.lam)
        mean, cvar = self.risk_terms()
        first = Fraction(self.setup_scaled + self.transport_scaled, COST_SCALE)
        return first + (1 - lam) * mean + lam * cvar

    @property
    def setup_cost(self) -> float:
        return self.setup_scaled / COST_SCALE

    @property
    def transport_cost(self) -> float:
        return self.transport_scaled / COST_SCALE

    @property
    def q(self) -> list[float]:
        return [v / COST_SCALE for v in self.q_scaled]

    @property
    def expected_recourse(self) -> float:
        return float(self.risk_terms()[0])

    @property
    def cvar(self) -> float:
        return float(self.risk_terms()[1])

    @property
    def total(self) -> float:
        return float(self.exact_total())

    def staged(self) -> dict[tuple[str, str], int]:
        """Units available per (hub, type) once shipments arrive."""
        out: dict[tuple[str, str], int] = {}
        for (l, d, _g), v in self.y.items():
            out[d, l] = out.get((d, l), 0) + v
        return out

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_VERSION,
            "status": self.status,
            "timed_out": self.timed_out,
            "lambda": self.lam,
            "alpha": self.alpha,
            "seed": self.seed,
            "z": dict(self.z),
            "y": [{"type": l, "hub": d, "supplier": g, "units": v}
                  for (l, d, g), v in self.y.items()],
            "breakdown": {
                "setup": self.setup_cost,
                "transport": self.transport_cost,
                "expected_recourse": self.expected_recourse,
                "cvar": self.cvar,
                "total": self.total,
            },
            "zeta": self.zeta,
            "eta": list(self.eta),
            "Q_scaled": list(self.q_scaled),
            "probabilities": [str(p) for p in self.probabilities],
            "cost_scale": COST_SCALE,
            "solver": {"nodes": self.nodes, "lp_iterations": self.lp_iterations,
                       "solve_time_s": self.solve_time,
                       "objective_scaled": _finite_or_none(self.solver_objective),
                       "ef_cvar_scaled": _finite_or_none(self.ef_cvar),
                       "ef_Q_scaled": list(self.ef_q_scaled)},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def from_dict(cls, data: Any) -> "StageOnePlan":
        try:
            if data.get("format") != FORMAT_VERSION:
                raise ParseError(f"unsupported plan format {data.get('format')!r}")
            y = {(r["type"], r["hub"], r["supplier"]): int(r["units"]) for r in data["y"]}
            z = {k: int(v) for k, v in data["z"].items()}
            solver = data["solver"]
            if data["cost_scale"] != COST_SCALE:
                raise ParseError(f"plan cost scale {data['cost_scale']} != {COST_SCALE}")
            br = data["breakdown"]
            return cls(z=z, y=y, setup_scaled=round(br["setup"] * COST_SCALE),
                       transport_scaled=round(br["transport"] * COST_SCALE),
                       q_scaled=[int(v) for v in data["Q_scaled"]],
                       probabilities=[Fraction(p) for p in data["probabilities"]],
                       lam=float(data["lambda"]), alpha=float(data["alpha"]),
                       zeta=float(data["zeta"]), eta=[float(v) for v in data["eta"]],
                       status=data["status"], timed_out=bool(data["timed_out"]),
                       nodes=solver["nodes"], lp_iterations=solver["lp_iterations"],
                       solve_time=solver["solve_time_s"],
                       solver_objective=_float_or_nan(solver["objective_scaled"]),
                       ef_cvar=_float_or_nan(solver["ef_cvar_scaled"]),
                       ef_q_scaled=[int(v) for v in solver.get("ef_Q_scaled", [])],
                       seed=data["seed"])
        except ParseError:
            raise
        except (KeyError, TypeError, ValueError, AttributeError, ZeroDivisionError) as exc:
            raise ParseError(f"malformed plan file: {exc!r}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "StageOnePlan":
        from .instance import loads_json

        return cls.from_dict(loads_json(Path(path).read_text(), str(path)))


def _finite_or_none(v: float) -> float | None:
    return v if math.isfinite(v) else None


def _float_or_nan(v) -> float:
    return math.nan if v is None else float(v)


def empty_plan(instance: Instance, scenarios: ScenarioSet) -> StageOnePlan:
    """Plan that opens nothing and ships nothing (recourse left unevaluated)."""
    y = {(l, h.id, g.id): 0 for l in instance.type_ids for h in instance.hubs
         for g in instance.suppliers}
    return StageOnePlan(z={h.id: 0 for h in instance.hubs}, y=y, setup_scaled=0,
                        transport_scaled=0, q_scaled=[], probabilities=[],
                        lam=instance.risk.lam, alpha=instance.risk.alpha, seed=scenarios.seed)


def first_stage_costs(ef: ExtensiveForm, values) -> tuple[int, int]:
    setup = sum(c * round(values[j]) for j, c in ef.setup_terms)
    transport = sum(c * round(values[j]) for j, c in ef.transport_terms)
    return setup, transport


def _solve_one(args):
    staged, scenario, instance, time_limit = args
    return solve_stage2(staged, scenario, instance, time_limit=time_limit)


def evaluate_plan(instance: Instance, plan: StageOnePlan, scenarios: ScenarioSet, *,
                  jobs: int = 1, time_limit: float = 300.0) -> list:
    """Solve every scenario's dispatch against the plan's staged units.

    Returns the per-scenario :class:`~fcmplan.dispatch.DispatchDecision` list,
    in scenario order.
    """
    staged = plan.staged()
    work = [(staged, sc, instance, time_limit) for sc in scenarios.scenarios]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_solve_one, work))
    return [_solve_one(w) for w in work]


def solve_plan(instance: Instance, scenarios: ScenarioSet, *,
               time_limit: float = 300.0) -> StageOnePlan:
    ef = build_extensive_form(instance, scenarios)
    sol = solve_mip(ef.model, time_limit=time_limit)
    if sol.status is Status.TIMEOUT and sol.values is None:
        # Opening nothing is always feasible, so it stands in as the incumbent.
        plan = empty_plan(instance, scenarios)
        plan.q_scaled = [blk.objective_constant for blk in ef.blocks]
        plan.probabilities = list(ef.probabilities)
        plan.status, plan.timed_out = sol.status.value, True
        plan.nodes, plan.lp_iterations, plan.solve_time = (sol.nodes, sol.lp_iterations,
                                                           sol.solve_time)
        _settle_recourse(plan, instance, scenarios, time_limit)
        return plan
    if sol.status in (Status.INFEASIBLE, Status.UNBOUNDED) or sol.values is None:
        raise ModelingError(f"extensive form reported {sol.status.value}; shortfalls are "
                            "penalized so this model should always be feasible")
    vals = sol.values
    bad = check_solution(ef.model, vals)
    if bad:
        raise ModelingError(f"extensive-form solution violates {bad[:3]}")

    setup, transport = first_stage_costs(ef, vals)
    q_raw = [round(vals[j]) for j in ef.q]
    zeta = float(vals[ef.zeta])
    eta = [float(vals[j]) for j in ef.eta]
    lam, alpha = ef.lam, ef.alpha
    probs = [float(p) for p in ef.probabilities]
    ef_cvar = zeta + math.fsum(p * e for p, e in zip(probs, eta)) / (1 - alpha)
    recomputed = (setup + transport + (1 - lam) * math.fsum(p * q for p, q in zip(probs, q_raw))
                  + lam * ef_cvar)
    if abs(recomputed - sol.objective) / COST_SCALE > BREAKDOWN_TOL:
        raise ModelingError(f"cost breakdown {recomputed} does not reproduce solver objective "
                            f"{sol.objective}")

    plan = StageOnePlan(
        z={d: round(vals[j]) for d, j in ef.z.items()},
        y={k: round(vals[j]) for k, j in ef.y.items()},
        setup_scaled=setup, transport_scaled=transport, q_scaled=q_raw,
        probabilities=list(ef.probabilities), lam=lam, alpha=alpha, zeta=zeta, eta=eta,
        status=sol.status.value, timed_out=sol.timed_out, nodes=sol.nodes,
        lp_iterations=sol.lp_iterations, solve_time=sol.solve_time,
        solver_objective=sol.objective, ef_cvar=ef_cvar, ef_q_scaled=list(q_raw),
        seed=scenarios.seed)
    _settle_recourse(plan, instance, scenarios, time_limit)
    return plan


def _settle_recourse(plan: StageOnePlan, instance: Instance, scenarios: ScenarioSet,
                     time_limit: float) -> None:
    """Replace each Q_s by its own optimum and reset (zeta, eta) to the exact tail.

    In the extensive form a scenario whose cost sits below the threshold carries
    no weight when lam = 1, and zeta/eta are free when lam = 0, so the raw values
    may be any of several optimal points. Re-solving each scenario with the plan
    fixed picks the canonical one; the objective can only go down.
    """
    decisions = evaluate_plan(instance, plan, scenarios, time_limit=time_limit)
    plan.q_scaled = [min(q, d.q_scaled) for q, d in zip(plan.q_scaled, decisions)]
    q = [Fraction(v) for v in plan.q_scaled]
    _, zeta = cvar_discrete(q, plan.probabilities, exact(plan.alpha))
    plan.zeta = float(zeta)
    plan.eta = [float(max(v - zeta, 0)) for v in q]
