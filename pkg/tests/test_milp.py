import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fcmplan.errors import CapExceededError
from fcmplan.milp import (INF, MilpModel, Status, Tableau, VarKind, check_solution, dump_lp,
                          enumerate_oracle, solve_lp, solve_mip)


def vertex_oracle(A, sense, rhs, c, lb, ub):
    """Brute-force LP optimum over basic solutions (all bounds finite)."""
    m, n = A.shape
    rows = [(A[i], rhs[i]) for i in range(m)]
    eye = np.eye(n)
    rows += [(eye[j], lb[j]) for j in range(n)] + [(eye[j], ub[j]) for j in range(n)]
    eq = [i for i in range(m) if sense[i] == 0]
    best = INF
    for combo in itertools.combinations(range(len(rows)), n):
        if not set(eq) <= set(combo):
            continue
        M = np.array([rows[k][0] for k in combo])
        if abs(np.linalg.det(M)) < 1e-9:
            continue
        x = np.linalg.solve(M, np.array([rows[k][1] for k in combo]))
        act = A @ x
        tol = 1e-7
        if np.any(x < lb - tol) or np.any(x > ub + tol):
            continue
        if np.any((sense <= 0) & (act > rhs + tol)) or np.any((sense >= 0) & (act < rhs - tol)):
            continue
        best = min(best, float(c @ x))
    return best


def random_lp(rng, n, m):
    A = rng.integers(-4, 5, size=(m, n)).astype(float)
    sense = rng.choice([-1, 0, 1], size=m, p=[0.45, 0.1, 0.45])
    rhs = rng.integers(-5, 9, size=m).astype(float)
    c = rng.integers(-5, 6, size=n).astype(float)
    lb = rng.integers(-3, 2, size=n).astype(float)
    ub = lb + rng.integers(0, 5, size=n)
    return A, sense, rhs, c, lb, ub


def model_from_arrays(A, sense, rhs, c, lb, ub, kinds=None):
    mdl = MilpModel()
    for j in range(A.shape[1]):
        mdl.add_var(f"x{j}", lb[j], ub[j], kinds[j] if kinds else VarKind.CONTINUOUS, c[j])
    names = {-1: "<=", 0: "=", 1: ">="}
    for i in range(A.shape[0]):
        mdl.add_constraint([(j, A[i, j]) for j in range(A.shape[1]) if A[i, j]],
                           names[int(sense[i])], rhs[i])
    return mdl


def test_textbook_lp():
    # max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
    mdl = MilpModel()
    x = mdl.add_var("x", cost=-3)
    y = mdl.add_var("y", cost=-5)
    mdl.add_constraint([(x, 1)], "<=", 4)
    mdl.add_constraint([(y, 2)], "<=", 12)
    mdl.add_constraint([(x, 3), (y, 2)], "<=", 18)
    sol = solve_lp(mdl)
    assert sol.status is Status.OPTIMAL
    assert sol.objective == pytest.approx(-36)
    assert sol.value("x") == pytest.approx(2) and sol.value("y") == pytest.approx(6)


def test_free_and_negative_bounds():
    mdl = MilpModel()
    x = mdl.add_var("x", -INF, INF, cost=1)
    y = mdl.add_var("y", -5, -1, cost=-1)
    mdl.add_constraint([(x, 1), (y, 1)], ">=", -3)
    sol = solve_lp(mdl)
    assert sol.objective == pytest.approx(-3 + 1 + 1)  # y = -1, x = -2
    assert sol.value("x") == pytest.approx(-2)


def test_infeasible_and_unbounded():
    mdl = MilpModel()
    x = mdl.add_var("x", 0, 10)
    mdl.add_constraint([(x, 1)], ">=", 11)
    assert solve_lp(mdl).status is Status.INFEASIBLE
    assert solve_mip(mdl).status is Status.INFEASIBLE

    mdl = MilpModel()
    x = mdl.add_var("x", 0, INF, cost=-1)
    y = mdl.add_var("y", 0, INF)
    mdl.add_constraint([(x, 1), (y, -1)], "<=", 2)
    assert solve_lp(mdl).status is Status.UNBOUNDED


def test_degenerate_cycling_example():
    # Beale's example cycles under naive textbook pricing.
    mdl = MilpModel()
    v = [mdl.add_var(f"x{k}") for k in range(4)]
    mdl.set_objective([(v[0], -0.75), (v[1], 150), (v[2], -0.02), (v[3], 6)])
    mdl.add_constraint([(v[0], 0.25), (v[1], -60), (v[2], -0.04), (v[3], 9)], "<=", 0)
    mdl.add_constraint([(v[0], 0.5), (v[1], -90), (v[2], -0.02), (v[3], 3)], "<=", 0)
    mdl.add_constraint([(v[2], 1)], "<=", 1)
    for pricing in ("dantzig", "bland"):
        sol = solve_lp(mdl, pricing=pricing)
        assert sol.objective == pytest.approx(-0.05)


@pytest.mark.parametrize("seed", range(40))
def test_lp_matches_vertex_enumeration(seed):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(2, 5)), int(rng.integers(1, 5))
    A, sense, rhs, c, lb, ub = random_lp(rng, n, m)
    ref = vertex_oracle(A, sense, rhs, c, lb, ub)
    sol = solve_lp(model_from_arrays(A, sense, rhs, c, lb, ub))
    if ref == INF:
        assert sol.status is Status.INFEASIBLE
    else:
        assert sol.status is Status.OPTIMAL
        assert sol.objective == pytest.approx(ref, abs=1e-7)


def test_lp_matches_highs_on_random_models():
    from scipy.optimize import Bounds, LinearConstraint, milp

    rng = np.random.default_rng(7)
    for _ in range(60):
        n, m = int(rng.integers(2, 9)), int(rng.integers(1, 7))
        A, sense, rhs, c, lb, ub = random_lp(rng, n, m)
        kinds = list(rng.choice(["continuous", "integer"], n))
        mdl = model_from_arrays(A, sense, rhs, c, lb, ub, kinds)
        lo = np.where(sense >= 0, rhs, -np.inf)
        hi = np.where(sense <= 0, rhs, np.inf)
        ref = milp(c, constraints=LinearConstraint(A, lo, hi), bounds=Bounds(lb, ub),
                   integrality=np.array([k == "integer" for k in kinds], dtype=int))
        ours = solve_mip(mdl)
        if ref.status == 2:
            assert ours.status is Status.INFEASIBLE
        else:
            assert ref.status == 0
            assert ours.status is Status.OPTIMAL
            assert ours.objective == pytest.approx(ref.fun, abs=1e-6)
            assert not check_solution(mdl, ours.values)


def knapsack_dp(values, weights, cap):
    best = [0] * (cap + 1)
    for v, w in zip(values, weights):
        for r in range(cap, w - 1, -1):
            best[r] = max(best[r], best[r - w] + v)
    return best[cap]


@pytest.mark.parametrize("seed", range(15))
def test_knapsack_against_dynamic_programming(seed):
    rng = np.random.default_rng(100 + seed)
    n = int(rng.integers(3, 12))
    values = [int(v) for v in rng.integers(1, 40, n)]
    weights = [int(w) for w in rng.integers(1, 20, n)]
    cap = int(rng.integers(5, 50))
    mdl = MilpModel()
    xs = [mdl.add_var(f"x{k}", kind=VarKind.BINARY, cost=-v) for k, v in enumerate(values)]
    mdl.add_constraint(list(zip(xs, weights)), "<=", cap)
    sol = solve_mip(mdl)
    assert -round(sol.objective) == knapsack_dp(values, weights, cap)


@pytest.mark.parametrize("seed", range(20))
def test_branch_and_bound_matches_enumeration(seed):
    rng = np.random.default_rng(200 + seed)
    n, m = int(rng.integers(2, 6)), int(rng.integers(1, 5))
    A, sense, rhs, c, lb, ub = random_lp(rng, n, m)
    kinds = [VarKind.INTEGER] * (n - 1) + [VarKind.CONTINUOUS]
    mdl = model_from_arrays(A, sense, rhs, c, lb, ub, kinds)
    ref = enumerate_oracle(mdl)
    sol = solve_mip(mdl)
    assert sol.status is ref.status
    if ref.status is Status.OPTIMAL:
        assert sol.objective == pytest.approx(ref.objective, abs=1e-7)


def test_oracle_cap():
    mdl = MilpModel()
    for k in range(30):
        mdl.add_var(f"b{k}", kind=VarKind.BINARY)
    with pytest.raises(CapExceededError):
        enumerate_oracle(mdl, cap=1000)


def test_check_solution_reports_each_kind():
    mdl = MilpModel()
    x = mdl.add_var("x", 0, 3, VarKind.INTEGER)
    y = mdl.add_var("y", 0, 1)
    mdl.add_constraint([(x, 1), (y, 1)], "<=", 2, "row")
    assert check_solution(mdl, [2, 0]) == []
    kinds = {v.kind for v in check_solution(mdl, [2.5, 1.5])}
    assert kinds == {"bound", "integrality", "constraint"}


def test_time_limit_returns_incumbent_or_timeout():
    rng = np.random.default_rng(5)
    mdl = MilpModel()
    n = 40
    xs = [mdl.add_var(f"x{k}", kind=VarKind.BINARY, cost=-float(rng.integers(10, 99)))
          for k in range(n)]
    for _ in range(6):
        mdl.add_constraint([(x, float(rng.integers(5, 60))) for x in xs], "<=", 400)
    sol = solve_mip(mdl, time_limit=0.0)
    assert sol.status is Status.TIMEOUT and sol.timed_out
    if sol.values is not None:
        assert not check_solution(mdl, sol.values)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_warm_start_agrees_with_cold_solve(seed):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(2, 7)), int(rng.integers(1, 6))
    A, sense, rhs, c, lb, ub = random_lp(rng, n, m)
    tab = Tableau(A, sense, rhs, c, lb, ub)
    if tab.solve() is not Status.OPTIMAL:
        return
    j = int(rng.integers(n))
    new_lb, new_ub = lb.copy(), ub.copy()
    cut = float(rng.integers(int(lb[j]), int(ub[j]) + 1))
    if rng.random() < 0.5:
        new_ub[j] = cut
    else:
        new_lb[j] = cut
    cold = Tableau(A, sense, rhs, c, new_lb, new_ub)
    cold_status = cold.solve()
    warm_status = tab.reoptimize() if tab.set_var_bounds(j, new_lb[j], new_ub[j]) \
        else Status.INFEASIBLE
    assert warm_status is cold_status
    if cold_status is Status.OPTIMAL:
        assert tab.result(warm_status).objective == pytest.approx(
            cold.result(cold_status).objective, abs=1e-7)


def test_dump_lp_lists_every_row_and_kind():
    mdl = MilpModel()
    x = mdl.add_var("x", 0, 4, VarKind.INTEGER, cost=2)
    b = mdl.add_var("b", kind=VarKind.BINARY, cost=-1)
    mdl.add_constraint([(x, 1), (b, -3)], ">=", 0, "link")
    text = dump_lp(mdl)
    assert "link:" in text and "general" in text and "binary" in text
    assert text.rstrip().endswith("end")
    # b = 1 forces x >= 3, costing 6 - 1; leaving both at zero is optimal
    assert solve_mip(mdl).objective == 0
