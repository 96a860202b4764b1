"""Monte Carlo demand-shock scenarios.

Each scenario picks a handful of load nodes (weighted by volatility, without
replacement) and gives each a trapezoidal ramp profile: slew up, hold at the
sampled peak, slew down. Positive values are surges that need injection,
negative values are drops that need absorption. Per-type FCM requirements
are derived from the profile peak.

All sampling goes through one ``numpy.random.Generator`` seeded from the
config, so a set is a pure function of (instance, config).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import ConfigError, ParseError, ValidationError
from .instance import FcmType, Instance, loads_json

SET_FORMAT = 1


@dataclass(frozen=True)
class GenConfig:
    scenario_count: int
    seed: int
    shocks_per_scenario: tuple[int, int] = (1, 1)
    magnitude_fraction: tuple[float, float] = (0.5, 1.0)
    ramp_step_fraction: tuple[float, float] = (0.2, 0.5)
    sign_mix: float = 1.0
    duration_hours: tuple[float, float] = (1.0, 1.0)
    type_split: Mapping[str, float] = field(default_factory=dict)

    def validate(self, instance: Instance | None = None) -> "GenConfig":
        errs = []
        if isinstance(self.scenario_count, bool) or not isinstance(self.scenario_count, int) \
                or self.scenario_count < 1:
            errs.append("scenario_count must be an integer >= 1")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) \
                or not 0 <= self.seed < 2**64:
            errs.append("seed must be an integer in [0, 2^64)")
        for name in ("shocks_per_scenario", "magnitude_fraction", "ramp_step_fraction",
                     "duration_hours"):
            rng = getattr(self, name)
            if len(rng) != 2 or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                                        for v in rng) or rng[0] > rng[1]:
                errs.append(f"{name} must be a [low, high] pair with low <= high")
        if not errs:
            if self.shocks_per_scenario[0] < 1:
                errs.append("shocks_per_scenario low must be >= 1")
            if self.magnitude_fraction[0] < 0:
                errs.append("magnitude_fraction must be >= 0")
            if self.ramp_step_fraction[0] <= 0:
                errs.append("ramp_step_fraction must be > 0")
            if self.duration_hours[0] <= 0:
                errs.append("duration_hours must be > 0")
        if not 0 <= self.sign_mix <= 1:
            errs.append("sign_mix must lie in [0, 1]")
        if any(v < 0 for v in self.type_split.values()) or \
                abs(sum(self.type_split.values()) - 1.0) > 1e-9:
            errs.append("type_split fractions must be >= 0 and sum to 1")
        if instance is not None:
            unknown = set(self.type_split) - set(instance.type_ids)
            if unknown:
                errs.append(f"type_split names unknown FCM types {sorted(unknown)}")
            if not errs:
                eligible = sum(1 for n in instance.nodes if n.volatility_weight > 0)
                if self.shocks_per_scenario[1] > len(instance.nodes):
                    errs.append(f"shocks_per_scenario high {self.shocks_per_scenario[1]} "
                                f"exceeds node count {len(instance.nodes)}")
                elif self.shocks_per_scenario[1] > eligible:
                    errs.append(f"shocks_per_scenario high {self.shocks_per_scenario[1]} "
                                f"exceeds the {eligible} nodes with positive volatility weight")
        if errs:
            raise ConfigError("; ".join(errs))
        return self

    def to_dict(self) -> dict:
        return {
            "scenario_count": self.scenario_count,
            "seed": self.seed,
            "shocks_per_scenario": list(self.shocks_per_scenario),
            "magnitude_fraction": list(self.magnitude_fraction),
            "ramp_step_fraction": list(self.ramp_step_fraction),
            "sign_mix": self.sign_mix,
            "duration_hours": list(self.duration_hours),
            "type_split": dict(self.type_split),
        }

    @classmethod
    def from_dict(cls, data: Any) -> "GenConfig":
        if not isinstance(data, dict):
            raise ConfigError("generator config must be a JSON object")
        known = {"scenario_count", "seed", "shocks_per_scenario", "magnitude_fraction",
                 "ramp_step_fraction", "sign_mix", "duration_hours", "type_split"}
        unknown = data.keys() - known
        if unknown:
            raise ConfigError(f"unknown generator config keys {sorted(unknown)}")
        missing = {"scenario_count", "seed", "type_split"} - data.keys()
        if missing:
            raise ConfigError(f"missing generator config keys {sorted(missing)}")
        kw = dict(data)
        for name in ("shocks_per_scenario", "magnitude_fraction", "ramp_step_fraction",
                     "duration_hours"):
            if name in kw:
                if not isinstance(kw[name], list):
                    raise ConfigError(f"{name} must be a [low, high] list")
                kw[name] = tuple(kw[name])
        if not isinstance(kw["type_split"], dict):
            raise ConfigError("type_split must be an object")
        return cls(**kw).validate()


@dataclass(frozen=True)
class NodeShock:
    node: str
    requirement: Mapping[str, int]
    ramp_profile: tuple[float, ...]  # kW per time step
    duration: float  # hours

    @property
    def peak(self) -> float:
        return max((abs(v) for v in self.ramp_profile), default=0.0)

    @property
    def is_drop(self) -> bool:
        return any(v < 0 for v in self.ramp_profile)


@dataclass(frozen=True)
class DemandShockScenario:
    id: int
    probability: float
    shocks: tuple[NodeShock, ...]

    @property
    def affected(self) -> tuple[str, ...]:
        return tuple(s.node for s in self.shocks)

    def shock(self, node_id: str) -> NodeShock:
        for s in self.shocks:
            if s.node == node_id:
                return s
        raise KeyError(node_id)


@dataclass(frozen=True)
class ScenarioSet:
    scenarios: tuple[DemandShockScenario, ...]
    seed: int | None = None
    config: GenConfig | None = None
    time_step_minutes: float = 5.0

    def __len__(self) -> int:
        return len(self.scenarios)

    def __getitem__(self, k: int) -> DemandShockScenario:
        return self.scenarios[k]

    @property
    def probabilities(self) -> list[float]:
        return [s.probability for s in self.scenarios]


def profile_to_requirements(profile: Sequence[float], catalog: Sequence[FcmType],
                            split: Mapping[str, float]) -> dict[str, int]:
    """Units of each type needed to cover the profile peak under the type split."""
    peak = max((abs(v) for v in profile), default=0.0)
    out = {}
    for t in catalog:
        share = split.get(t.id, 0.0)
        need = peak * share / t.unit_power_rating
        # Guard against 600.0000000001-style round-off pushing the ceiling up.
        out[t.id] = max(0, math.ceil(need - 1e-9)) if share > 0 else 0
    return out


def trapezoid(peak: float, steps: int, slew_fraction: float) -> tuple[float, ...]:
    """Ramp from zero at ``slew_fraction*|peak|`` per step, hold, ramp back."""
    return tuple(peak * min(1.0, (t + 1) * slew_fraction, (steps - t) * slew_fraction)
                 for t in range(steps))


def profile_steps(duration_hours: float, time_step_minutes: float) -> int:
    return max(1, math.ceil(duration_hours * 60.0 / time_step_minutes - 1e-9))


def generate_scenarios(instance: Instance, config: GenConfig) -> ScenarioSet:
    config.validate(instance)
    rng = np.random.default_rng(config.seed)
    nodes = instance.nodes
    weights = np.array([n.volatility_weight for n in nodes], dtype=float)
    p = weights / weights.sum()
    dt = instance.time_step_minutes
    S = config.scenario_count
    scenarios = []
    for s in range(S):
        lo, hi = config.shocks_per_scenario
        k = int(rng.integers(lo, hi + 1))
        picks = rng.choice(len(nodes), size=k, replace=False, p=p)
        shocks = []
        for j in picks:
            node = nodes[int(j)]
            mag = float(rng.uniform(*config.magnitude_fraction))
            sign = 1.0 if rng.random() < config.sign_mix else -1.0
            slew = float(rng.uniform(*config.ramp_step_fraction))
            duration = float(rng.uniform(*config.duration_hours))
            profile = trapezoid(sign * mag * node.base_load, profile_steps(duration, dt), slew)
            req = profile_to_requirements(profile, instance.fcm_types, config.type_split)
            shocks.append(NodeShock(node.id, req, profile, duration))
        scenarios.append(DemandShockScenario(s, 1.0 / S, tuple(shocks)))
    return ScenarioSet(tuple(scenarios), config.seed, config, dt)


def validate_scenarios(sset: ScenarioSet, instance: Instance | None = None) -> ScenarioSet:
    errs: list[tuple[str, str]] = []
    total = math.fsum(sset.probabilities)
    if abs(total - 1.0) > 1e-9:
        errs.append(("scenarios", f"probabilities sum to {total}, expected 1"))
    node_ids = {n.id for n in instance.nodes} if instance else None
    for k, sc in enumerate(sset.scenarios):
        p = f"scenarios[{k}]"
        if not 0 < sc.probability <= 1:
            errs.append((f"{p}.probability", "must lie in (0, 1]"))
        if not sc.shocks:
            errs.append((f"{p}.shocks", "affected node set is empty"))
        if len(set(sc.affected)) != len(sc.affected):
            errs.append((f"{p}.shocks", "node appears twice"))
        for q, sh in enumerate(sc.shocks):
            sp = f"{p}.shocks[{q}]"
            if sh.duration <= 0:
                errs.append((f"{sp}.duration", "must be > 0"))
            if any(not isinstance(v, int) or isinstance(v, bool) or v < 0
                   for v in sh.requirement.values()):
                errs.append((f"{sp}.requirement", "units must be integers >= 0"))
            if node_ids is not None:
                if sh.node not in node_ids:
                    errs.append((f"{sp}.node", f"unknown node {sh.node!r}"))
                unknown = set(sh.requirement) - set(instance.type_ids)
                if unknown:
                    errs.append((f"{sp}.requirement", f"unknown FCM types {sorted(unknown)}"))
                if sh.duration > 0 and len(sh.ramp_profile) != profile_steps(
                        sh.duration, instance.time_step_minutes):
                    errs.append((f"{sp}.ramp_profile", "length does not match duration"))
    if instance is not None and sset.time_step_minutes != instance.time_step_minutes:
        errs.append(("time_step_minutes", "differs from the instance time step"))
    if errs:
        raise ValidationError(errs)
    return sset


def set_to_dict(sset: ScenarioSet) -> dict:
    return {
        "format": SET_FORMAT,
        "seed": sset.seed,
        "config": sset.config.to_dict() if sset.config else None,
        "time_step_minutes": sset.time_step_minutes,
        "scenarios": [
            {"id": sc.id, "probability": sc.probability,
             "shocks": [{"node": sh.node, "duration": sh.duration,
                         "requirement": dict(sh.requirement),
                         "ramp_profile": list(sh.ramp_profile)} for sh in sc.shocks]}
            for sc in sset.scenarios
        ],
    }


def set_from_dict(data: Any) -> ScenarioSet:
    try:
        cfg = GenConfig.from_dict(data["config"]) if data.get("config") is not None else None
        scenarios = tuple(
            DemandShockScenario(
                int(sc["id"]), float(sc["probability"]),
                tuple(NodeShock(sh["node"], {k: v for k, v in sh["requirement"].items()},
                                tuple(float(v) for v in sh["ramp_profile"]),
                                float(sh["duration"])) for sh in sc["shocks"]))
            for sc in data["scenarios"])
        return validate_scenarios(ScenarioSet(scenarios, data.get("seed"), cfg,
                                              float(data.get("time_step_minutes", 5.0))))
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise ParseError(f"malformed scenario set: {exc!r}") from exc


def dumps_set(sset: ScenarioSet) -> str:
    return json.dumps(set_to_dict(sset), indent=1) + "\n"


def save_set(sset: ScenarioSet, path: str | Path) -> None:
    Path(path).write_text(dumps_set(sset))


def load_set(path: str | Path, instance: Instance | None = None) -> ScenarioSet:
    path = Path(path)
    sset = set_from_dict(loads_json(path.read_text(), str(path)))
    return validate_scenarios(sset, instance) if instance is not None else sset
