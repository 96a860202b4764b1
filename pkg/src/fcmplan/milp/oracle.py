"""Brute-force reference solver and feasibility checker.

``enumerate_oracle`` walks every integer assignment inside the variable
bounds. Rows touching only integer variables are screened in vectorized
chunks; survivors get their continuous remainder solved by LP. It is
meant for tiny models and serves as the ground truth in tests.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from ..errors import CapExceededError
from .model import INF, MilpModel, MipSolution, Status
from .simplex import solve_lp_arrays

DEFAULT_CAP = 10**6
CHECK_TOL = 1e-6
_CHUNK = 1 << 15


def enumerate_oracle(model: MilpModel, cap: int = DEFAULT_CAP) -> MipSolution:
    start = time.perf_counter()
    cm = model.compiled
    names = tuple(v.name for v in model.variables)
    lb, ub = cm.integer_bounds()
    ints = np.flatnonzero(cm.is_int)
    conts = np.flatnonzero(~cm.is_int)

    if np.any(~np.isfinite(lb[ints])) or np.any(~np.isfinite(ub[ints])):
        raise CapExceededError("integer variable with infinite bound")
    sizes = np.maximum(ub[ints] - lb[ints] + 1, 0).astype(np.int64)
    total = math.prod(int(s) for s in sizes)
    if total > cap:
        raise CapExceededError(f"{total} integer assignments exceed cap {cap}")
    if total == 0:
        return MipSolution(Status.INFEASIBLE, None, INF, 0, 0,
                           time.perf_counter() - start, names=names)

    A_int = cm.A[:, ints]
    A_con = cm.A[:, conts]
    # Interval of each row's continuous contribution under the bounds.
    lo_c = np.where(A_con > 0, A_con * lb[conts], A_con * ub[conts])
    hi_c = np.where(A_con > 0, A_con * ub[conts], A_con * lb[conts])
    lo_c = np.where(A_con == 0, 0.0, lo_c).sum(axis=1) if conts.size else np.zeros(cm.m)
    hi_c = np.where(A_con == 0, 0.0, hi_c).sum(axis=1) if conts.size else np.zeros(cm.m)
    tol = 1e-9 * (1.0 + np.abs(cm.rhs))
    le, ge = cm.sense <= 0, cm.sense >= 0
    c_con = cm.c[conts]
    # Cheapest conceivable continuous cost; lets LPs that cannot win be skipped.
    cont_floor = float(np.sum(np.where(c_con > 0, c_con * lb[conts], c_con * ub[conts]))) \
        if conts.size else 0.0
    if not np.isfinite(cont_floor):
        cont_floor = -INF

    radix = np.cumprod(np.concatenate([[1], sizes[:-1]])) if sizes.size else np.array([], np.int64)
    best = INF
    best_key = None
    best_x = None
    iters = 0
    scanned = 0
    for lo in range(0, total, _CHUNK):
        idx = np.arange(lo, min(lo + _CHUNK, total), dtype=np.int64)
        scanned += idx.size
        assign = (idx[:, None] // radix[None, :]) % sizes[None, :] + lb[ints][None, :] \
            if ints.size else np.zeros((idx.size, 0))
        act = assign @ A_int.T
        ok = np.ones(idx.size, dtype=bool)
        ok &= np.all(~le | (act + lo_c <= cm.rhs + tol), axis=1)
        ok &= np.all(~ge | (act + hi_c >= cm.rhs - tol), axis=1)
        if not ok.any():
            continue
        assign, idx = assign[ok], idx[ok]
        int_cost = assign @ cm.c[ints]
        order = np.argsort(int_cost, kind="stable")
        for k in order:
            if int_cost[k] + cont_floor > best + 1e-9 * max(1.0, abs(best)):
                break
            a = assign[k]
            if conts.size:
                res = solve_lp_arrays(A_con, cm.sense, cm.rhs - A_int @ a, c_con,
                                      lb[conts], ub[conts])
                iters += res.iterations
                if res.status is Status.INFEASIBLE:
                    continue
                if res.status is Status.UNBOUNDED:
                    return MipSolution(Status.UNBOUNDED, None, -INF, scanned, iters,
                                       time.perf_counter() - start, names=names)
                obj = float(int_cost[k] + res.objective)
                cont_vals = res.x
            else:
                obj = float(int_cost[k])
                cont_vals = np.zeros(0)
            key = (obj, int(idx[k]))
            if best_key is None or obj < best - 1e-9 * max(1.0, abs(best)) or (
                    abs(obj - best) <= 1e-9 * max(1.0, abs(best)) and key[1] < best_key[1]):
                best, best_key = obj, key
                best_x = np.zeros(cm.n)
                best_x[ints] = a
                best_x[conts] = cont_vals
    elapsed = time.perf_counter() - start
    if best_x is None:
        return MipSolution(Status.INFEASIBLE, None, INF, scanned, iters, elapsed, names=names)
    return MipSolution(Status.OPTIMAL, best_x, best + cm.const, scanned, iters, elapsed,
                       bound=best + cm.const, names=names)


@dataclass(frozen=True)
class Violation:
    kind: str  # "bound", "integrality" or "constraint"
    name: str
    amount: float

    def __str__(self) -> str:
        return f"{self.kind} {self.name}: violated by {self.amount:.3g}"


def check_solution(model: MilpModel, values, tol: float = CHECK_TOL) -> list[Violation]:
    """Every bound, integrality and row violation beyond ``tol``; empty iff feasible."""
    x = np.asarray(values, dtype=float)
    out: list[Violation] = []
    for j, v in enumerate(model.variables):
        if x[j] < v.lb - tol:
            out.append(Violation("bound", v.name, v.lb - x[j]))
        elif x[j] > v.ub + tol:
            out.append(Violation("bound", v.name, x[j] - v.ub))
        if v.is_integer and abs(x[j] - round(x[j])) > tol:
            out.append(Violation("integrality", v.name, abs(x[j] - round(x[j]))))
    for r, con in enumerate(model.constraints):
        act = sum(coef * x[j] for j, coef in con.terms)
        scale = max(1.0, abs(con.rhs))
        gap = 0.0
        if con.sense.value == "<=":
            gap = act - con.rhs
        elif con.sense.value == ">=":
            gap = con.rhs - act
        else:
            gap = abs(act - con.rhs)
        if gap > tol * scale:
            out.append(Violation("constraint", con.name or f"row{r}", gap))
    return out
