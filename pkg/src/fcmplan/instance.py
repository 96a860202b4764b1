"""Static problem data: FCM catalog, suppliers, staging hubs, load nodes, feeder.

Instances are frozen dataclasses. They are read from and written to a single
JSON document; :func:`validate_instance` checks every invariant and reports
all violations at once.
"""

from __future__ import annotations

import enum
import heapq
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Any, Hashable, Mapping

from .errors import DisconnectedError, ParseError, ValidationError

COST_SCALE = 10_000
"""Cost coefficients are multiplied by this and rounded to integers in every stage model."""

Bus = Hashable


class Category(str, enum.Enum):
    BESS = "BESS"
    FAST_GEN = "FAST_GEN"
    DEMAND_RESPONSE = "DEMAND_RESPONSE"
    PSH = "PSH"

    @property
    def is_storage(self) -> bool:
        return self in (Category.BESS, Category.PSH)


@dataclass(frozen=True)
class FcmType:
    id: str
    category: Category
    unit_power_rating: float  # kW per unit
    unit_energy_rating: float  # kWh per unit, 0 for non-storage
    eta_ch: float
    eta_dis: float
    unit_ramp_limit: float  # kW per time step per unit
    unit_transport_cost: float  # currency per unit per km
    activation_lead_time: float  # minutes


@dataclass(frozen=True)
class Supplier:
    id: str
    bus: Bus
    inventory: Mapping[str, int]


@dataclass(frozen=True)
class StagingHub:
    id: str
    bus: Bus
    setup_cost: float
    capacity_units: int


@dataclass(frozen=True)
class LoadNode:
    id: str
    bus: Bus
    base_load: float  # kW
    is_data_center: bool
    volatility_weight: float
    stabilize_window: float  # minutes
    shortfall_penalty: Mapping[str, float]  # currency per unit short, by FCM type id


@dataclass(frozen=True)
class Line:
    from_bus: Bus
    to_bus: Bus
    length_km: float = 1.0


@dataclass(frozen=True)
class Network:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]


@dataclass(frozen=True)
class RiskParams:
    alpha: float
    lam: float
    gamma: float  # currency per kWh unserved
    travel_speed: float  # km per minute


@dataclass(frozen=True)
class Instance:
    fcm_types: tuple[FcmType, ...]
    suppliers: tuple[Supplier, ...]
    hubs: tuple[StagingHub, ...]
    nodes: tuple[LoadNode, ...]
    network: Network
    risk: RiskParams
    time_step_minutes: float = 5.0
    initial_soc_fraction: float = 1.0
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    def fcm(self, type_id: str) -> FcmType:
        return self._index("fcm", self.fcm_types)[type_id]

    def node(self, node_id: str) -> LoadNode:
        return self._index("node", self.nodes)[node_id]

    def hub(self, hub_id: str) -> StagingHub:
        return self._index("hub", self.hubs)[hub_id]

    def _index(self, key, items):
        if key not in self._cache:
            self._cache[key] = {it.id: it for it in items}
        return self._cache[key]

    @property
    def type_ids(self) -> list[str]:
        return [t.id for t in self.fcm_types]

    def distances(self) -> dict[tuple[Bus, Bus], Fraction]:
        if "dist" not in self._cache:
            self._cache["dist"] = distance_matrix(self.network)
        return self._cache["dist"]

    def km(self, a: Bus, b: Bus) -> Fraction:
        return self.distances()[(a, b)]

    def with_risk(self, **changes) -> "Instance":
        return replace(self, risk=replace(self.risk, **changes), _cache={})


def exact(value: float | int) -> Fraction:
    """Exact decimal value of a number as written (0.1 -> 1/10)."""
    if isinstance(value, int):
        return Fraction(value)
    return Fraction(repr(float(value)))


def distance_matrix(network: Network) -> dict[tuple[Bus, Bus], Fraction]:
    """All-pairs shortest-path km over the line list, in exact arithmetic."""
    adj: dict[Bus, list[tuple[Bus, Fraction]]] = {b: [] for b in network.buses}
    for ln in network.lines:
        w = exact(ln.length_km)
        adj[ln.from_bus].append((ln.to_bus, w))
        adj[ln.to_bus].append((ln.from_bus, w))
    order = {b: k for k, b in enumerate(network.buses)}
    out: dict[tuple[Bus, Bus], Fraction] = {}
    for src in network.buses:
        dist = {src: Fraction(0)}
        heap = [(Fraction(0), order[src], src)]
        done = set()
        while heap:
            d, _, u = heapq.heappop(heap)
            if u in done:
                continue
            done.add(u)
            for v, w in adj[u]:
                nd = d + w
                if v not in dist or nd < dist[v]:
                    dist[v] = nd
                    heapq.heappush(heap, (nd, order[v], v))
        if len(done) != len(network.buses):
            missing = [b for b in network.buses if b not in done]
            raise DisconnectedError(f"buses unreachable from {src!r}: {missing}")
        for b, d in dist.items():
            out[(src, b)] = d
    return out


# --------------------------------------------------------------------------- validation

def validate_instance(inst: Instance) -> Instance:
    """Return ``inst`` unchanged if every invariant holds, else raise ValidationError."""
    errs: list[tuple[str, str]] = []

    def check(cond: bool, path: str, msg: str) -> None:
        if not cond:
            errs.append((path, msg))

    def unique(items, what):
        seen = set()
        for k, it in enumerate(items):
            check(it.id not in seen, f"{what}[{k}].id", f"duplicate id {it.id!r}")
            seen.add(it.id)

    type_ids = {t.id for t in inst.fcm_types}
    for k, t in enumerate(inst.fcm_types):
        p = f"fcm_types[{k}]"
        check(t.unit_power_rating > 0, f"{p}.unit_power_rating", "must be > 0")
        check(0 < t.eta_ch <= 1, f"{p}.eta_ch", "must lie in (0, 1]")
        check(0 < t.eta_dis <= 1, f"{p}.eta_dis", "must lie in (0, 1]")
        check(t.unit_ramp_limit > 0, f"{p}.unit_ramp_limit", "must be > 0")
        check(t.unit_transport_cost >= 0, f"{p}.unit_transport_cost", "must be >= 0")
        check(t.activation_lead_time >= 0, f"{p}.activation_lead_time", "must be >= 0")
        check(t.unit_energy_rating >= 0, f"{p}.unit_energy_rating", "must be >= 0")
        if t.category.is_storage:
            check(t.unit_energy_rating > 0, f"{p}.unit_energy_rating",
                  f"storage category {t.category.value} needs energy rating > 0")
        else:
            check(t.unit_energy_rating == 0, f"{p}.unit_energy_rating",
                  f"non-storage category {t.category.value} must have energy rating 0")
    unique(inst.fcm_types, "fcm_types")

    buses = set(inst.network.buses)
    check(len(buses) == len(inst.network.buses), "network.buses", "duplicate bus ids")
    for k, ln in enumerate(inst.network.lines):
        p = f"network.lines[{k}]"
        check(ln.from_bus in buses, f"{p}.from", f"unknown bus {ln.from_bus!r}")
        check(ln.to_bus in buses, f"{p}.to", f"unknown bus {ln.to_bus!r}")
        check(ln.length_km > 0, f"{p}.length_km", "must be > 0")
    if buses and all(ln.from_bus in buses and ln.to_bus in buses for ln in inst.network.lines):
        try:
            distance_matrix(inst.network)
        except DisconnectedError as exc:
            errs.append(("network", str(exc)))

    for k, s in enumerate(inst.suppliers):
        p = f"suppliers[{k}]"
        check(s.bus in buses, f"{p}.bus", f"unknown bus {s.bus!r}")
        for tid, qty in s.inventory.items():
            check(tid in type_ids, f"{p}.inventory.{tid}", "unknown FCM type")
            check(isinstance(qty, int) and not isinstance(qty, bool) and qty >= 0,
                  f"{p}.inventory.{tid}", "must be an integer >= 0")
    unique(inst.suppliers, "suppliers")

    for k, h in enumerate(inst.hubs):
        p = f"hubs[{k}]"
        check(h.bus in buses, f"{p}.bus", f"unknown bus {h.bus!r}")
        check(h.setup_cost >= 0, f"{p}.setup_cost", "must be >= 0")
        check(isinstance(h.capacity_units, int) and not isinstance(h.capacity_units, bool)
              and h.capacity_units >= 0, f"{p}.capacity_units", "must be an integer >= 0")
    unique(inst.hubs, "hubs")

    for k, n in enumerate(inst.nodes):
        p = f"nodes[{k}]"
        check(n.bus in buses, f"{p}.bus", f"unknown bus {n.bus!r}")
        check(n.base_load >= 0, f"{p}.base_load", "must be >= 0")
        check(n.stabilize_window > 0, f"{p}.stabilize_window", "must be > 0")
        check(n.volatility_weight >= 0, f"{p}.volatility_weight", "must be >= 0")
        if n.is_data_center:
            check(n.volatility_weight > 0, f"{p}.volatility_weight",
                  "data-center nodes need a positive weight")
        for tid, pen in n.shortfall_penalty.items():
            check(tid in type_ids, f"{p}.shortfall_penalty.{tid}", "unknown FCM type")
            check(pen >= 0, f"{p}.shortfall_penalty.{tid}", "must be >= 0")
    unique(inst.nodes, "nodes")

    r = inst.risk
    check(0 <= r.alpha < 1, "risk.alpha", "must lie in [0, 1)")
    check(0 <= r.lam <= 1, "risk.lambda", "must lie in [0, 1]")
    check(r.gamma >= 0, "risk.gamma", "must be >= 0")
    check(r.travel_speed > 0, "risk.travel_speed", "must be > 0")
    check(inst.time_step_minutes > 0, "time_step_minutes", "must be > 0")
    check(0 <= inst.initial_soc_fraction <= 1, "initial_soc_fraction", "must lie in [0, 1]")
    for what, items in (("fcm_types", inst.fcm_types), ("suppliers", inst.suppliers),
                        ("hubs", inst.hubs), ("nodes", inst.nodes)):
        check(len(items) >= 1, what, "at least one entry required")

    if errs:
        raise ValidationError(errs)
    return inst


# --------------------------------------------------------------------------- JSON i/o

_TOP_KEYS = {"fcm_types", "suppliers", "hubs", "nodes", "network", "risk", "time_step_minutes"}
_OPTIONAL_TOP = {"initial_soc_fraction", "description"}
_NUM = (int, float)


class _Reader:
    """Pulls typed fields out of parsed JSON, recording every problem."""

    def __init__(self) -> None:
        self.errs: list[tuple[str, str]] = []

    def obj(self, data: Any, path: str, required: set[str], optional: set[str] = frozenset()):
        if not isinstance(data, dict):
            self.errs.append((path, "expected an object"))
            return None
        for key in data.keys() - required - optional:
            self.errs.append((f"{path}.{key}" if path else key, "unknown key"))
        for key in required - data.keys():
            self.errs.append((f"{path}.{key}" if path else key, "missing key"))
        return data

    def num(self, data: dict, key: str, path: str, default=None):
        v = data.get(key, default)
        if isinstance(v, bool) or not isinstance(v, _NUM) or not math.isfinite(v):
            if key in data or default is None:
                self.errs.append((f"{path}.{key}", "expected a finite number"))
            return math.nan if default is None else default
        return v

    def int_(self, data: dict, key: str, path: str):
        v = data.get(key)
        if isinstance(v, bool) or not isinstance(v, int):
            if isinstance(v, float) and v.is_integer():
                return int(v)
            self.errs.append((f"{path}.{key}", "expected an integer"))
            return v if isinstance(v, (int, float)) else -1
        return v

    def str_(self, data: dict, key: str, path: str) -> str:
        v = data.get(key)
        if not isinstance(v, str):
            self.errs.append((f"{path}.{key}", "expected a string"))
            return str(v)
        return v

    def bus(self, data: dict, key: str, path: str):
        v = data.get(key)
        if isinstance(v, bool) or not isinstance(v, (int, str)):
            self.errs.append((f"{path}.{key}", "expected a bus id (string or integer)"))
            return str(v)
        return v


def instance_from_dict(data: Any) -> Instance:
    """Parse and validate a JSON-decoded instance document."""
    rd = _Reader()
    top = rd.obj(data, "", _TOP_KEYS, _OPTIONAL_TOP)
    if top is None:
        raise ValidationError(rd.errs)

    types = []
    for k, t in enumerate(top.get("fcm_types") or []):
        p = f"fcm_types[{k}]"
        keys = {f.name for f in fields(FcmType)}
        if rd.obj(t, p, keys) is None:
            continue
        cat = t.get("category")
        try:
            category = Category(cat)
        except ValueError:
            rd.errs.append((f"{p}.category", f"unknown category {cat!r}"))
            category = Category.FAST_GEN
        types.append(FcmType(
            id=rd.str_(t, "id", p), category=category,
            **{f: rd.num(t, f, p) for f in keys - {"id", "category"}}))

    suppliers = []
    for k, s in enumerate(top.get("suppliers") or []):
        p = f"suppliers[{k}]"
        if rd.obj(s, p, {"id", "bus", "inventory"}) is None:
            continue
        inv = s.get("inventory")
        if not isinstance(inv, dict):
            rd.errs.append((f"{p}.inventory", "expected an object"))
            inv = {}
        suppliers.append(Supplier(rd.str_(s, "id", p), rd.bus(s, "bus", p),
                                  {tid: rd.int_(inv, tid, f"{p}.inventory") for tid in inv}))

    hubs = []
    for k, h in enumerate(top.get("hubs") or []):
        p = f"hubs[{k}]"
        if rd.obj(h, p, {"id", "bus", "setup_cost", "capacity_units"}) is None:
            continue
        hubs.append(StagingHub(rd.str_(h, "id", p), rd.bus(h, "bus", p),
                               rd.num(h, "setup_cost", p), rd.int_(h, "capacity_units", p)))

    nodes = []
    node_keys = {"id", "bus", "base_load", "is_data_center", "volatility_weight",
                 "stabilize_window", "shortfall_penalty"}
    for k, n in enumerate(top.get("nodes") or []):
        p = f"nodes[{k}]"
        if rd.obj(n, p, node_keys) is None:
            continue
        pen = n.get("shortfall_penalty")
        if not isinstance(pen, dict):
            rd.errs.append((f"{p}.shortfall_penalty", "expected an object"))
            pen = {}
        dc = n.get("is_data_center")
        if not isinstance(dc, bool):
            rd.errs.append((f"{p}.is_data_center", "expected a boolean"))
        nodes.append(LoadNode(
            rd.str_(n, "id", p), rd.bus(n, "bus", p), rd.num(n, "base_load", p), bool(dc),
            rd.num(n, "volatility_weight", p), rd.num(n, "stabilize_window", p),
            {tid: rd.num(pen, tid, f"{p}.shortfall_penalty") for tid in pen}))

    network = Network((), ())
    net = rd.obj(top.get("network"), "network", {"buses", "lines"}) if "network" in top else None
    if net is not None:
        buses = net.get("buses")
        if not isinstance(buses, list):
            rd.errs.append(("network.buses", "expected a list"))
            buses = []
        lines = []
        for k, ln in enumerate(net.get("lines") or []):
            p = f"network.lines[{k}]"
            if not isinstance(ln, list) or len(ln) not in (2, 3):
                rd.errs.append((p, "expected [from, to] or [from, to, length_km]"))
                continue
            length = ln[2] if len(ln) == 3 else 1.0
            if isinstance(length, bool) or not isinstance(length, _NUM):
                rd.errs.append((f"{p}.length_km", "expected a number"))
                length = math.nan
            lines.append(Line(ln[0], ln[1], length))
        network = Network(tuple(buses), tuple(lines))

    risk = RiskParams(math.nan, math.nan, math.nan, math.nan)
    rk = rd.obj(top.get("risk"), "risk", {"alpha", "lambda", "gamma", "travel_speed"}) \
        if "risk" in top else None
    if rk is not None:
        risk = RiskParams(rd.num(rk, "alpha", "risk"), rd.num(rk, "lambda", "risk"),
                          rd.num(rk, "gamma", "risk"), rd.num(rk, "travel_speed", "risk"))

    inst = Instance(tuple(types), tuple(suppliers), tuple(hubs), tuple(nodes), network, risk,
                    time_step_minutes=rd.num(top, "time_step_minutes", "", 5.0)
                    if "time_step_minutes" in top else math.nan,
                    initial_soc_fraction=rd.num(top, "initial_soc_fraction", "", 1.0))
    if rd.errs:
        # Structural problems first; invariant checks may add more.
        try:
            validate_instance(inst)
        except ValidationError as exc:
            rd.errs.extend(e for e in exc.violations if e not in rd.errs)
        except Exception:
            pass
        raise ValidationError(rd.errs)
    return validate_instance(inst)


def instance_to_dict(inst: Instance) -> dict:
    def fcm(t: FcmType) -> dict:
        d = asdict(t)
        d["category"] = t.category.value
        return d

    out = {
        "fcm_types": [fcm(t) for t in inst.fcm_types],
        "suppliers": [{"id": s.id, "bus": s.bus, "inventory": dict(s.inventory)}
                      for s in inst.suppliers],
        "hubs": [{"id": h.id, "bus": h.bus, "setup_cost": h.setup_cost,
                  "capacity_units": h.capacity_units} for h in inst.hubs],
        "nodes": [{"id": n.id, "bus": n.bus, "base_load": n.base_load,
                   "is_data_center": n.is_data_center,
                   "volatility_weight": n.volatility_weight,
                   "stabilize_window": n.stabilize_window,
                   "shortfall_penalty": dict(n.shortfall_penalty)} for n in inst.nodes],
        "network": {"buses": list(inst.network.buses),
                    "lines": [[ln.from_bus, ln.to_bus, ln.length_km]
                              for ln in inst.network.lines]},
        "risk": {"alpha": inst.risk.alpha, "lambda": inst.risk.lam,
                 "gamma": inst.risk.gamma, "travel_speed": inst.risk.travel_speed},
        "time_step_minutes": inst.time_step_minutes,
    }
    if inst.initial_soc_fraction != 1.0:
        out["initial_soc_fraction"] = inst.initial_soc_fraction
    return out


def loads_json(text: str, source: str = "<string>") -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{source}: line {exc.lineno} column {exc.colno} "
                         f"(offset {exc.pos}): {exc.msg}") from exc


def load_instance(path: str | Path) -> Instance:
    path = Path(path)
    return instance_from_dict(loads_json(path.read_text(), str(path)))


def save_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst), indent=2) + "\n")


def builtin_path(name: str) -> Path:
    return Path(str(resources.files("fcmplan") / "data" / name))


def builtin_ieee33() -> Instance:
    """The bundled 33-bus feeder instance (see ``data/ieee33.json``)."""
    return load_instance(builtin_path("ieee33.json"))
