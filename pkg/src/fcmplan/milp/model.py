"""Mixed-integer linear model container.

A :class:`MilpModel` is built incrementally with :meth:`add_var` and
:meth:`add_constraint`, then handed to the solvers. Solvers never mutate
a model; branch-and-bound works on private copies of the bound arrays.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

INF = math.inf


class VarKind(str, enum.Enum):
    CONTINUOUS = "continuous"
    INTEGER = "integer"
    BINARY = "binary"


class Sense(str, enum.Enum):
    LE = "<="
    EQ = "="
    GE = ">="


class Status(str, enum.Enum):
    OPTIMAL = "OPTIMAL"
    INFEASIBLE = "INFEASIBLE"
    UNBOUNDED = "UNBOUNDED"
    TIMEOUT = "TIMEOUT"


@dataclass(frozen=True)
class Variable:
    name: str
    lb: float
    ub: float
    kind: VarKind

    @property
    def is_integer(self) -> bool:
        return self.kind is not VarKind.CONTINUOUS


@dataclass(frozen=True)
class Constraint:
    terms: tuple[tuple[int, float], ...]
    sense: Sense
    rhs: float
    name: str = ""


Terms = Mapping[int, float] | Iterable[tuple[int, float]]


def _merge_terms(terms: Terms) -> tuple[tuple[int, float], ...]:
    items = terms.items() if isinstance(terms, Mapping) else terms
    acc: dict[int, float] = {}
    for idx, coef in items:
        acc[idx] = acc.get(idx, 0.0) + float(coef)
    return tuple((i, c) for i, c in acc.items() if c != 0.0)


@dataclass
class MilpModel:
    """Minimization MILP: ``min c.x + const`` subject to linear rows and bounds."""

    name: str = "model"
    variables: list[Variable] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    objective: dict[int, float] = field(default_factory=dict)
    objective_constant: float = 0.0
    _names: dict[str, int] = field(default_factory=dict, repr=False)

    def add_var(self, name: str, lb: float = 0.0, ub: float = INF,
                kind: VarKind | str = VarKind.CONTINUOUS, cost: float = 0.0) -> int:
        kind = VarKind(kind)
        if kind is VarKind.BINARY:
            lb, ub = max(0.0, lb), min(1.0, ub)
        if name in self._names:
            raise ValueError(f"duplicate variable name {name!r}")
        if lb > ub:
            raise ValueError(f"variable {name!r}: lb {lb} > ub {ub}")
        idx = len(self.variables)
        self.variables.append(Variable(name, float(lb), float(ub), kind))
        self._names[name] = idx
        if cost:
            self.objective[idx] = self.objective.get(idx, 0.0) + float(cost)
        self.__dict__.pop("compiled", None)
        return idx

    def add_constraint(self, terms: Terms, sense: Sense | str, rhs: float,
                       name: str = "") -> int:
        merged = _merge_terms(terms)
        n = len(self.variables)
        for idx, _ in merged:
            if not 0 <= idx < n:
                raise ValueError(f"constraint {name!r} references unknown variable {idx}")
        self.constraints.append(Constraint(merged, Sense(sense), float(rhs), name))
        self.__dict__.pop("compiled", None)
        return len(self.constraints) - 1

    def set_objective(self, terms: Terms, constant: float = 0.0) -> None:
        self.objective = dict(_merge_terms(terms))
        self.objective_constant = float(constant)
        self.__dict__.pop("compiled", None)

    def index(self, name: str) -> int:
        return self._names[name]

    @property
    def num_vars(self) -> int:
        return len(self.variables)

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    def copy(self) -> "MilpModel":
        return MilpModel(self.name, list(self.variables), list(self.constraints),
                         dict(self.objective), self.objective_constant, dict(self._names))

    def relaxed(self) -> "MilpModel":
        """Same model with every integrality requirement dropped."""
        m = self.copy()
        m.variables = [Variable(v.name, v.lb, v.ub, VarKind.CONTINUOUS) for v in self.variables]
        return m

    def evaluate(self, values: Sequence[float]) -> float:
        return self.objective_constant + sum(c * values[i] for i, c in self.objective.items())

    @cached_property
    def compiled(self) -> "CompiledModel":
        return CompiledModel.from_model(self)


@dataclass(frozen=True)
class CompiledModel:
    """Dense array view of a model, the form every solver consumes."""

    A: np.ndarray
    sense: np.ndarray  # int8: -1 for <=, 0 for =, +1 for >=
    rhs: np.ndarray
    c: np.ndarray
    const: float
    lb: np.ndarray
    ub: np.ndarray
    is_int: np.ndarray

    @classmethod
    def from_model(cls, model: MilpModel) -> "CompiledModel":
        n, m = model.num_vars, model.num_constraints
        A = np.zeros((m, n))
        sense = np.zeros(m, dtype=np.int8)
        rhs = np.zeros(m)
        code = {Sense.LE: -1, Sense.EQ: 0, Sense.GE: 1}
        for r, con in enumerate(model.constraints):
            for j, coef in con.terms:
                A[r, j] += coef
            sense[r] = code[con.sense]
            rhs[r] = con.rhs
        c = np.zeros(n)
        for j, coef in model.objective.items():
            c[j] = coef
        lb = np.array([v.lb for v in model.variables], dtype=float)
        ub = np.array([v.ub for v in model.variables], dtype=float)
        is_int = np.array([v.is_integer for v in model.variables], dtype=bool)
        for arr in (A, sense, rhs, c, lb, ub, is_int):
            arr.setflags(write=False)
        return cls(A, sense, rhs, c, float(model.objective_constant), lb, ub, is_int)

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def m(self) -> int:
        return self.rhs.shape[0]

    def integer_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Bounds with integer variables rounded inward."""
        lb, ub = self.lb.copy(), self.ub.copy()
        lb[self.is_int] = np.ceil(lb[self.is_int] - 1e-9)
        ub[self.is_int] = np.floor(ub[self.is_int] + 1e-9)
        return lb, ub


@dataclass
class MipSolution:
    status: Status
    values: np.ndarray | None
    objective: float
    nodes: int = 0
    lp_iterations: int = 0
    solve_time: float = 0.0
    timed_out: bool = False
    bound: float = -INF
    names: tuple[str, ...] = ()

    def value(self, name: str) -> float:
        if self.values is None:
            raise ValueError(f"no values available (status {self.status.value})")
        return float(self.values[self.names.index(name)])

    def as_dict(self) -> dict[str, float]:
        if self.values is None:
            return {}
        return {nm: float(v) for nm, v in zip(self.names, self.values)}
