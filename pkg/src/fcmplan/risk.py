"""Energy not served, discrete CVaR and the aggregated resilience report."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from .errors import DomainError, ModelingError, ShapeError


def ens(u: int, load: float, duration: float) -> float:
    """Energy not served (kWh) at a node: zero when stabilized."""
    return (1 - u) * load * duration


def cvar_discrete(costs: Sequence, probs: Sequence | None = None, alpha=0.0):
    """CVaR of a discrete cost distribution and its minimizing threshold.

    Minimizes ``z + sum(p * max(c - z, 0)) / (1 - alpha)`` over ``z``. The
    objective is piecewise linear with breakpoints at the costs, so checking
    every cost as a candidate is exact; ties go to the smallest threshold.
    Works with floats or Fractions alike.

    Returns ``(cvar, zeta)``.
    """
    costs = list(costs)
    n = len(costs)
    if n == 0:
        raise DomainError("need at least one cost")
    if probs is None:
        exact = all(isinstance(c, (Fraction, int)) for c in costs)
        probs = [Fraction(1, n) if exact else 1.0 / n] * n
    probs = list(probs)
    if len(probs) != n:
        raise DomainError(f"{n} costs but {len(probs)} probabilities")
    if any(p < 0 for p in probs) or abs(float(sum(probs)) - 1.0) > 1e-9:
        raise DomainError("probabilities must be >= 0 and sum to 1")
    if not 0 <= alpha < 1:
        raise DomainError(f"alpha must lie in [0, 1), got {alpha}")
    best = None
    for z in sorted(set(costs)):
        tail = sum(p * (c - z) for c, p in zip(costs, probs) if c > z)
        val = z + tail / (1 - alpha)
        if best is None or val < best[0]:
            best = (val, z)
    return best


@dataclass
class RiskReport:
    alpha: float
    lam: float
    seed: int | None
    q: list[float]  # per-scenario recourse cost
    probabilities: list[float]
    ens: list[dict[str, float]]  # per scenario: node id -> kWh
    residual_kwh: list[dict[str, float]]  # per scenario: node id -> kWh
    expected_cost: float
    var_threshold: float
    cvar: float
    expected_ens: float
    expected_residual_kwh: float
    first_stage_cost: float
    plan_objective: float

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def csv_rows(self) -> list[tuple]:
        return [(s, self.q[s], sum(self.ens[s].values()), sum(self.residual_kwh[s].values()))
                for s in range(len(self.q))]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scenario_id", "Q_s", "ens_total", "residual_kwh"])
        for row in self.csv_rows():
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
        return buf.getvalue()

    def save(self, json_path: str | Path, csv_path: str | Path | None = None) -> None:
        Path(json_path).write_text(self.dumps())
        if csv_path is not None:
            Path(csv_path).write_text(self.to_csv())


def aggregate_report(plan, decisions, trackings, instance, scenarios,
                     check_consistency: bool = True) -> RiskReport:
    """Fold per-scenario dispatch and tracking results into a RiskReport.

    When the plan was solved to optimality the CVaR of the re-evaluated
    recourse costs must agree with the plan's own CVaR term within 1e-7.
    """
    S = len(scenarios)
    if len(decisions) != S or len(trackings) != S:
        raise ShapeError(f"{S} scenarios, {len(decisions)} dispatch results, "
                         f"{len(trackings)} tracking results")
    probs = scenarios.probabilities
    alpha, lam = instance.risk.alpha, instance.risk.lam
    q = [d.q for d in decisions]
    ens_rows, res_rows = [], []
    for sc, dec, tr in zip(scenarios.scenarios, decisions, trackings):
        if dec.scenario_id != sc.id or tr.scenario_id != sc.id:
            raise ShapeError(f"result for scenario {dec.scenario_id} filed under {sc.id}")
        ens_rows.append({sh.node: ens(dec.u[sh.node], instance.node(sh.node).base_load,
                                      sh.duration) for sh in sc.shocks})
        res_rows.append({nid: n.residual_kwh for nid, n in tr.nodes.items()})
    cvar, zeta = cvar_discrete(q, probs, alpha)
    expected = math.fsum(p * v for p, v in zip(probs, q))
    if check_consistency and plan.status == "OPTIMAL" and plan.lam == lam and plan.alpha == alpha:
        if abs(cvar - plan.cvar) > 1e-7:
            raise ModelingError(f"re-evaluated CVaR {cvar} differs from plan CVaR {plan.cvar}")
    return RiskReport(
        alpha=alpha, lam=lam, seed=scenarios.seed, q=q, probabilities=list(probs),
        ens=ens_rows, residual_kwh=res_rows, expected_cost=expected, var_threshold=zeta,
        cvar=cvar,
        expected_ens=math.fsum(p * sum(r.values()) for p, r in zip(probs, ens_rows)),
        expected_residual_kwh=math.fsum(p * sum(r.values()) for p, r in zip(probs, res_rows)),
        first_stage_cost=plan.setup_cost + plan.transport_cost,
        plan_objective=plan.total)
