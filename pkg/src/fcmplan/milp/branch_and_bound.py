"""Best-first branch-and-bound over the simplex LP relaxation."""

from __future__ import annotations

import heapq
import itertools
import math
import time
from collections import OrderedDict

import numpy as np

from .model import INF, MilpModel, MipSolution, Status
from .simplex import LpTimeout, Tableau

INT_TOL = 1e-6
DEFAULT_TIME_LIMIT = 300.0
CACHE_SIZE = 4


def _objective_is_integral(cm) -> bool:
    """True when every feasible integer point has an integer objective."""
    c = cm.c
    if np.any(c[~cm.is_int] != 0.0):
        return False
    ci = c[cm.is_int]
    return bool(np.all(ci == np.round(ci))) and float(cm.const).is_integer()


def _most_fractional(x: np.ndarray, is_int: np.ndarray) -> int:
    frac = x - np.floor(x)
    score = np.where(is_int, np.minimum(frac, 1.0 - frac), 0.0)
    j = int(np.argmax(score))
    return j if score[j] > INT_TOL else -1


def solve_mip(model: MilpModel, *, time_limit: float = DEFAULT_TIME_LIMIT,
              pricing: str = "dantzig") -> MipSolution:
    """Exact MILP optimum by best-first branch-and-bound.

    Nodes are explored in order of LP bound (deeper node first on ties,
    then creation order). Branching picks the most fractional integer
    variable, lowest index on ties. When the objective is integral on
    integer points, node bounds are rounded up before pruning. Child LPs
    are warm-started from the parent's final tableau with the dual simplex.

    On hitting ``time_limit`` the best incumbent so far is returned with
    status ``TIMEOUT`` and ``timed_out=True``.
    """
    start = time.perf_counter()
    cm = model.compiled
    names = tuple(v.name for v in model.variables)
    integral = _objective_is_integral(cm)
    lb0, ub0 = cm.integer_bounds()

    def bound_of(obj: float) -> float:
        if integral:
            return math.ceil(obj - 1e-6 * max(1.0, abs(obj)))
        return obj

    def cold(lb, ub) -> tuple[Tableau, Status]:
        tab = Tableau(cm.A, cm.sense, cm.rhs, cm.c, lb, ub, pricing=pricing)
        tab.deadline = start + time_limit
        return tab, tab.solve()

    try:
        root_tab, status = cold(lb0, ub0)
    except LpTimeout:
        return MipSolution(Status.TIMEOUT, None, INF, 1, 0, time.perf_counter() - start, True,
                           bound=-INF, names=names)
    nodes = 1
    iters = root_tab.iterations
    if status is Status.INFEASIBLE:
        return MipSolution(Status.INFEASIBLE, None, INF, nodes, iters,
                           time.perf_counter() - start, names=names)
    if status is Status.UNBOUNDED:
        return MipSolution(Status.UNBOUNDED, None, -INF, nodes, iters,
                           time.perf_counter() - start, names=names)
    root = root_tab.result(status)
    warm = all(root_tab.can_rebound(j) for j in np.flatnonzero(cm.is_int))
    # Solved tableaus of recently created nodes, so a child popped right
    # after its parent needs no refactorization.
    cache: OrderedDict[int, Tableau] = OrderedDict()

    def node_tableau(key: int, lb, ub, snap) -> Tableau:
        tab = cache.pop(key, None)
        if tab is not None:
            return tab
        if not warm:
            return cold(lb, ub)[0]
        tab = root_tab.copy()
        tab.restore(snap, lb, ub)
        tab.reoptimize()
        return tab

    def solve_child(tab: Tableau, j: int, lb, ub) -> tuple[Tableau, Status]:
        if not warm:
            return cold(lb, ub)
        if not tab.set_var_bounds(j, lb[j], ub[j]):
            return tab, Status.INFEASIBLE
        return tab, tab.reoptimize()

    incumbent: np.ndarray | None = None
    best = INF
    counter = itertools.count()
    key = next(counter)
    heap: list = [(bound_of(root.objective), 0, key, lb0, ub0, root.x, root_tab.snapshot())]
    cache[key] = root_tab
    global_bound = heap[0][0]
    timed_out = False

    def prune_tol(value: float) -> float:
        return 1e-9 * max(1.0, abs(value))

    def dominated(b: float) -> bool:
        return best < INF and b >= best - prune_tol(best)

    def offer(x: np.ndarray) -> None:
        nonlocal best, incumbent
        xi = x.copy()
        xi[cm.is_int] = np.round(xi[cm.is_int])
        obj = float(cm.c @ xi)
        if best == INF or obj < best - prune_tol(best):
            best, incumbent = obj, xi

    while heap:
        if time.perf_counter() - start > time_limit:
            timed_out = True
            break
        bound, negdepth, key, lb, ub, x, snap = heapq.heappop(heap)
        global_bound = bound
        if dominated(bound):
            heap.clear()
            break
        j = _most_fractional(x, cm.is_int)
        if j < 0:
            cache.pop(key, None)
            offer(x)
            continue
        try:
            parent = node_tableau(key, lb, ub, snap)
        except LpTimeout:
            timed_out = True
            break
        down_ub = ub.copy()
        down_ub[j] = math.floor(x[j])
        up_lb = lb.copy()
        up_lb[j] = math.ceil(x[j])
        for clb, cub, reuse in ((lb, down_ub, False), (up_lb, ub, True)):
            before = parent.iterations
            try:
                tab, res_status = solve_child(parent if reuse else parent.copy(), j, clb, cub)
            except LpTimeout:
                timed_out = True
                break
            nodes += 1
            iters += tab.iterations - before if warm else tab.iterations
            if res_status is not Status.OPTIMAL:
                continue
            res = tab.result(res_status)
            cb = bound_of(res.objective)
            if dominated(cb):
                continue
            if _most_fractional(res.x, cm.is_int) < 0:
                offer(res.x)
                continue
            ckey = next(counter)
            heapq.heappush(heap, (cb, negdepth - 1, ckey, clb, cub, res.x,
                                  tab.snapshot() if warm else None))
            cache[ckey] = tab
            while len(cache) > CACHE_SIZE:
                cache.popitem(last=False)
        if timed_out:
            break

    elapsed = time.perf_counter() - start
    if incumbent is None:
        status = Status.TIMEOUT if timed_out else Status.INFEASIBLE
        return MipSolution(status, None, INF, nodes, iters, elapsed, timed_out,
                           bound=global_bound + cm.const, names=names)
    status = Status.TIMEOUT if timed_out else Status.OPTIMAL
    final_bound = global_bound if timed_out else best
    return MipSolution(status, incumbent, best + cm.const, nodes, iters, elapsed, timed_out,
                       bound=min(final_bound, best) + cm.const, names=names)
