"""Time-domain tracking of each shocked node's ramp profile by the units sent there.

Dispatched units are pooled per FCM type into one aggregate resource
(power, energy and ramp ratings add up). At every step the resources, in
catalog order with non-storage types first, take turns covering what is
still missing. Each one is clamped to

* its ramp band ``[p_prev - R, p_prev + R]`` (``p_prev`` is 0 before the event),
* its power rating,
* for storage, the energy left (discharge) or headroom left (charge), keeping
  back enough to ramp down to zero at ``R`` per step afterwards.

A pool that could carry the whole event on its own (see :func:`covers`) is
moved to the front, so the other pools stay idle and cannot get in its way.

The reserve is what keeps the ramp limit satisfiable when a store runs dry,
so the trajectory never needs a violating step. Non-storage types can only
inject; drops are absorbed by charging storage. Power is signed: positive
injects (discharge), negative absorbs (charge).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .instance import Category, FcmType, Instance
from .scenarios import DemandShockScenario

RAMP_TOL = 1e-9


def soc_step(soc: float, p: float, dt: float, eta_ch: float, eta_dis: float) -> float:
    """One step of the storage energy balance; ``p`` > 0 discharges, < 0 charges."""
    p_ch = -p if p < 0 else 0.0
    p_dis = p if p > 0 else 0.0
    return soc + eta_ch * p_ch * dt - p_dis * dt / eta_dis


def max_with_rampdown_reserve(budget: float, ramp: float) -> float:
    """Largest ``p >= 0`` with ``sum_{k>=0} max(p - k*ramp, 0) <= budget``.

    ``budget`` is energy expressed in power-steps. Below ``(m+1)*ramp`` the
    sum equals ``(m+1)*p - ramp*m*(m+1)/2``, so the inverse is closed form.
    """
    if budget <= 0:
        return 0.0
    m = int((math.sqrt(1.0 + 8.0 * budget / ramp) - 1.0) / 2.0)
    while ramp * (m + 1) * (m + 2) / 2.0 <= budget:
        m += 1
    while m > 0 and ramp * m * (m + 1) / 2.0 > budget:
        m -= 1
    p = (budget + ramp * m * (m + 1) / 2.0) / (m + 1)
    return min(p, (m + 1) * ramp)


@dataclass
class Resource:
    type_id: str
    category: Category
    units: int
    p_max: float
    e_max: float
    r_max: float
    eta_ch: float
    eta_dis: float
    power: list[float] = field(default_factory=list)
    soc: list[float] = field(default_factory=list)

    @classmethod
    def pooled(cls, fcm: FcmType, units: int) -> "Resource":
        return cls(fcm.id, fcm.category, units, units * fcm.unit_power_rating,
                   units * fcm.unit_energy_rating, units * fcm.unit_ramp_limit,
                   fcm.eta_ch, fcm.eta_dis)

    @property
    def is_storage(self) -> bool:
        return self.category.is_storage

    def to_dict(self) -> dict:
        return {"type": self.type_id, "category": self.category.value, "units": self.units,
                "p_max_kw": self.p_max, "e_max_kwh": self.e_max, "r_max_kw": self.r_max,
                "power_kw": self.power, "soc_kwh": self.soc}


@dataclass
class NodeTracking:
    node: str
    required: list[float]
    delivered: list[float]
    resources: list[Resource]
    residual_kwh: float

    def to_dict(self) -> dict:
        return {"node": self.node, "required_kw": self.required, "delivered_kw": self.delivered,
                "residual_kwh": self.residual_kwh,
                "resources": [r.to_dict() for r in self.resources]}


@dataclass
class TrackingResult:
    scenario_id: int
    dt_hours: float
    nodes: dict[str, NodeTracking]
    violations: list[str]

    def to_dict(self) -> dict:
        return {"scenario_id": self.scenario_id, "dt_hours": self.dt_hours,
                "violations": self.violations,
                "nodes": [n.to_dict() for n in self.nodes.values()]}


def max_slew(profile) -> float:
    """Largest step change, counting the rise from and the return to zero."""
    padded = [0.0, *profile, 0.0]
    return max(abs(b - a) for a, b in zip(padded, padded[1:]))


def covers(r: Resource, profile, dt: float, initial_soc_fraction: float = 1.0) -> bool:
    """True when ``r`` alone is rated for the whole one-signed profile.

    Power must reach the peak and ramp must reach the largest slew. A surge
    also needs the stored energy (non-storage is unconstrained), a drop needs
    charge headroom and therefore storage.
    """
    if not profile or r.units <= 0:
        return False
    peak = max(abs(v) for v in profile)
    if r.p_max < peak or r.r_max < max_slew(profile):
        return False
    energy = math.fsum(abs(v) for v in profile) * dt
    if all(v >= 0 for v in profile):
        return not r.is_storage or r.eta_dis * initial_soc_fraction * r.e_max >= energy
    if all(v <= 0 for v in profile):
        return r.is_storage and (1.0 - initial_soc_fraction) * r.e_max >= r.eta_ch * energy
    return False


def track_profile(profile, resources: list[Resource], dt: float,
                  initial_soc_fraction: float = 1.0) -> tuple[list[float], float]:
    """Run the greedy tracker in place on ``resources``; returns (delivered, residual kWh)."""
    lead = [r for r in resources if covers(r, profile, dt, initial_soc_fraction)][:1]
    resources = lead + [r for r in resources if not any(r is x for x in lead)]
    last = {id(r): 0.0 for r in resources}
    soc = {}
    for r in resources:
        r.power = []
        r.soc = []
        if r.is_storage:
            soc[id(r)] = initial_soc_fraction * r.e_max
            r.soc.append(soc[id(r)])
    delivered = []
    residual = 0.0
    for req in profile:
        remaining = float(req)
        total = 0.0
        for r in resources:
            prev = last[id(r)]
            lo, hi = prev - r.r_max, prev + r.r_max
            if r.is_storage:
                s = soc[id(r)]
                dis_cap = max_with_rampdown_reserve(s * r.eta_dis / dt, r.r_max)
                ch_cap = max_with_rampdown_reserve((r.e_max - s) / (r.eta_ch * dt), r.r_max)
                hi = min(hi, r.p_max, dis_cap)
                lo = max(lo, -r.p_max, -ch_cap)
            else:
                hi = min(hi, r.p_max)
                lo = max(lo, 0.0)
            p = min(max(remaining, lo), hi)
            if r.is_storage:
                nxt = soc_step(s, p, dt, r.eta_ch, r.eta_dis)
                while nxt < 0.0 or nxt > r.e_max:
                    p = float(np.nextafter(p, 0.0))
                    nxt = soc_step(s, p, dt, r.eta_ch, r.eta_dis)
                soc[id(r)] = nxt
                r.soc.append(nxt)
            r.power.append(p)
            last[id(r)] = p
            remaining -= p
            total += p
        delivered.append(total)
        if req > 0:
            residual += max(0.0, req - total) * dt
        elif req < 0:
            residual += max(0.0, total - req) * dt
    return delivered, residual


def check_tracking(resources: list[Resource], dt: float) -> list[str]:
    """Defensive re-check of power, ramp and energy-balance limits."""
    out = []
    for r in resources:
        prev = 0.0
        tol = RAMP_TOL * max(1.0, r.r_max, r.p_max)
        for k, p in enumerate(r.power):
            if abs(p - prev) > r.r_max + tol:
                out.append(f"{r.type_id} step {k}: ramp {abs(p - prev):.6g} > {r.r_max:.6g}")
            if abs(p) > r.p_max + tol or (not r.is_storage and p < -tol):
                out.append(f"{r.type_id} step {k}: power {p:.6g} outside rating")
            prev = p
        if r.is_storage:
            for k, s in enumerate(r.soc):
                if s < 0.0 or s > r.e_max:
                    out.append(f"{r.type_id} step {k}: SoC {s:.6g} outside [0, {r.e_max:.6g}]")
            for k, p in enumerate(r.power):
                if soc_step(r.soc[k], p, dt, r.eta_ch, r.eta_dis) != r.soc[k + 1]:
                    out.append(f"{r.type_id} step {k}: energy balance mismatch")
    return out


def pooled_resources(instance: Instance, units_by_type: dict[str, int]) -> list[Resource]:
    order = sorted(instance.fcm_types, key=lambda t: t.category.is_storage)
    return [Resource.pooled(t, units_by_type[t.id]) for t in order
            if units_by_type.get(t.id, 0) > 0]


def simulate_tracking(decision, scenario: DemandShockScenario,
                      instance: Instance) -> TrackingResult:
    dt = instance.time_step_minutes / 60.0
    nodes = {}
    violations = []
    for sh in scenario.shocks:
        resources = pooled_resources(instance, decision.delivered(sh.node))
        delivered, residual = track_profile(sh.ramp_profile, resources, dt,
                                            instance.initial_soc_fraction)
        violations.extend(f"{sh.node}: {v}" for v in check_tracking(resources, dt))
        nodes[sh.node] = NodeTracking(sh.node, list(sh.ramp_profile), delivered, resources,
                                      residual)
    return TrackingResult(scenario.id, dt, nodes, violations)


def residual_to_metrics(tracking: TrackingResult) -> dict[str, float]:
    """Residual unmet energy (kWh) per shocked node."""
    return {nid: n.residual_kwh for nid, n in tracking.nodes.items()}
