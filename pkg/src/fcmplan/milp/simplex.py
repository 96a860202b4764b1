"""Dense bounded-variable simplex: two-phase primal plus a dual simplex for warm starts.

Every variable is mapped onto a tableau column ``xp`` with bounds
``lo <= xp <= hi`` (``lo`` finite). Variables fixed at build time are
substituted out, free variables are split into two nonnegative columns.
Rows and columns are scaled by powers of two (geometric mean passes,
then row max-norm) so coefficient ranges such as cost rows next to unit
rows stay well conditioned. Rows whose right-hand side is zero or
of the right sign start with their slack basic, and only the rest get an
artificial column.

Primal pricing is Dantzig's largest reduced cost, falling back to
Bland's smallest-index rule for entering and leaving choices once a run
of degenerate pivots appears, which rules out cycling. ``pricing="bland"``
uses Bland's rule throughout. The dual simplex (used after bound changes)
follows the same scheme on the leaving row.

The tableau is recomputed from the original columns every
``REFACTOR_EVERY`` pivots, and again before optimality is declared if the
basic values no longer satisfy the rows, so round-off cannot pile up over
long runs.

Practical limit: the tableau is a dense ``m x (n + m)`` float array, so
models beyond a few thousand rows/columns get slow and memory hungry.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..errors import NumericsError
from .model import INF, MilpModel, MipSolution, Status

PIVOT_TOL = 1e-7
HARRIS_TOL = 1e-9
OPT_TOL = 1e-9
FEAS_TOL = 1e-9
MAX_ITER = 50_000
DEGENERATE_RUN = 10
REFACTOR_EVERY = 200
DRIFT_TOL = 1e-9
CLOCK_EVERY = 32  # pivots between deadline checks



class LpTimeout(Exception):
    """Raised from inside a simplex run once ``Tableau.deadline`` has passed."""


FIXED = -1
SPLIT = -2


@dataclass
class LpResult:
    status: Status
    x: np.ndarray | None
    objective: float
    iterations: int = 0


def _pow2(v: np.ndarray) -> np.ndarray:
    return np.exp2(np.round(np.log2(v)))


def _equilibrate(A: np.ndarray, passes: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Power-of-two row and column scale factors (geometric, then row max-norm)."""
    m, n = A.shape
    rs, cs = np.ones(m), np.ones(n)
    if not A.size:
        return rs, cs
    absA = np.abs(A)
    nz = absA > 0
    big = np.where(nz, absA, 1.0)
    with np.errstate(divide="ignore"):
        for _ in range(passes):
            S = big * rs[:, None] * cs
            hi = np.where(nz, S, 0.0).max(axis=1)
            lo = np.where(nz, S, INF).min(axis=1)
            ok = hi > 0
            rs[ok] /= _pow2(np.sqrt(hi[ok] * lo[ok]))
            S = big * rs[:, None] * cs
            hi = np.where(nz, S, 0.0).max(axis=0)
            lo = np.where(nz, S, INF).min(axis=0)
            ok = hi > 0
            cs[ok] /= _pow2(np.sqrt(hi[ok] * lo[ok]))
        S = np.where(nz, big * rs[:, None] * cs, 0.0).max(axis=1)
        ok = S > 0
        rs[ok] /= _pow2(S[ok])
    return rs, cs


class Tableau:
    """Simplex state for ``min c.x, A x (sense) rhs, lb <= x <= ub``.

    ``sense`` holds -1 for ``<=``, 0 for ``=``, +1 for ``>=``. After
    :meth:`solve`, bounds of single variables may be tightened with
    :meth:`set_var_bounds` and the optimum restored with :meth:`reoptimize`.
    """

    def __init__(self, A, sense, rhs, c, lb, ub, *, pricing: str = "dantzig"):
        if pricing not in ("dantzig", "bland"):
            raise ValueError(f"unknown pricing rule {pricing!r}")
        self.pricing = pricing
        self.deadline: float | None = None  # time.perf_counter() value
        A = np.asarray(A, dtype=float)
        m, n = A.shape
        lb = np.asarray(lb, dtype=float)
        ub = np.asarray(ub, dtype=float)
        self.c_orig = np.asarray(c, dtype=float)
        self.n_orig = n
        self.iterations = 0
        self.trivially_infeasible = bool(np.any(lb > ub + FEAS_TOL))

        fixed = np.isfinite(lb) & (ub - lb <= 1e-12)
        self.fixed_val = np.where(fixed, lb, 0.0)
        free = np.flatnonzero(~fixed)
        lbk, ubk = lb[free], ub[free]
        has_lb = np.isfinite(lbk)
        only_ub = ~has_lb & np.isfinite(ubk)
        split = ~has_lb & ~only_ub
        pos = np.concatenate([np.flatnonzero(has_lb), np.flatnonzero(only_ub),
                              np.flatnonzero(split), np.flatnonzero(split)])
        self.var_of = free[pos]
        self.sign = np.concatenate([np.ones(has_lb.sum()), -np.ones(only_ub.sum()),
                                    np.ones(split.sum()), -np.ones(split.sum())])
        self.offset = np.zeros(n)
        self.offset[free] = np.where(has_lb, lbk, np.where(only_ub, ubk, 0.0))
        self.col_of = np.full(n, FIXED, dtype=np.int64)
        n_single = int(has_lb.sum() + only_ub.sum())
        self.col_of[self.var_of[:n_single]] = np.arange(n_single)
        self.col_of[free[split]] = SPLIT
        hi_struct = np.concatenate([ubk[has_lb] - lbk[has_lb],
                                    np.full(only_ub.sum() + 2 * split.sum(), INF)])

        b = np.asarray(rhs, dtype=float) - A @ self.fixed_val
        b = b - A @ np.where(fixed, 0.0, self.offset)
        A_s = A[:, self.var_of] * self.sign
        self.c_struct = self.c_orig[self.var_of] * self.sign

        row_scale = np.abs(A_s).max(axis=1) if A_s.shape[1] else np.zeros(m)
        empty = row_scale == 0.0
        if empty.any():
            tol = FEAS_TOL * (1.0 + np.abs(b[empty]))
            be, se = b[empty], np.asarray(sense)[empty]
            bad = (((se < 0) & (be < -tol)) | ((se > 0) & (be > tol))
                   | ((se == 0) & (np.abs(be) > tol)))
            if bad.any():
                self.trivially_infeasible = True
        keep = ~empty
        A_s, b = A_s[keep], b[keep]
        sense_k = np.asarray(sense)[keep]
        m = A_s.shape[0]
        rs, cs = _equilibrate(A_s)
        A_s = A_s * rs[:, None] * cs
        b = b * rs
        self.col_scale = cs
        self.c_struct = self.c_struct * cs
        hi_struct = hi_struct / cs

        n_s = A_s.shape[1]
        slack_rows = np.flatnonzero(sense_k != 0)
        slack_coef = np.where(sense_k[slack_rows] < 0, 1.0, -1.0)
        flip = (b < 0) | ((b == 0) & (sense_k > 0))
        A_s[flip] *= -1.0
        b[flip] *= -1.0
        slack_coef = np.where(flip[slack_rows], -slack_coef, slack_coef)
        n_sl = slack_rows.size
        basic_slack = slack_coef > 0
        has_basis = np.zeros(m, dtype=bool)
        has_basis[slack_rows[basic_slack]] = True
        art_rows = np.flatnonzero(~has_basis)
        n_art = art_rows.size

        N = n_s + n_sl + n_art
        M0 = np.zeros((m, N))
        M0[:, :n_s] = A_s
        M0[slack_rows, n_s + np.arange(n_sl)] = slack_coef
        M0[art_rows, n_s + n_sl + np.arange(n_art)] = 1.0
        self.M0 = M0
        self.b = b
        self.m, self.N, self.n_struct = m, N, n_s
        self.art = np.arange(n_s + n_sl, N)

        self.lo = np.zeros(N)
        self.hi = np.concatenate([hi_struct, np.full(n_sl + n_art, INF)])
        self.basis = np.empty(m, dtype=np.int64)
        self.basis[slack_rows[basic_slack]] = n_s + np.flatnonzero(basic_slack)
        self.basis[art_rows] = n_s + n_sl + np.arange(n_art)
        self.is_basic = np.zeros(N, dtype=bool)
        self.is_basic[self.basis] = True
        self.at_upper = np.zeros(N, dtype=bool)
        self.T = M0.copy()
        self.beta = b.copy()
        self.cost = np.zeros(N)
        self.d = np.zeros(N)
        self.since_refactor = 0

        scale = float(np.abs(self.c_struct).max(initial=0.0)) or 1.0
        self.cost2 = np.zeros(N)
        self.cost2[:n_s] = self.c_struct / scale

    # -- state handling -------------------------------------------------

    def copy(self) -> "Tableau":
        new = object.__new__(Tableau)
        new.__dict__.update(self.__dict__)
        for name in ("lo", "hi", "basis", "is_basic", "at_upper", "T", "beta", "d"):
            setattr(new, name, getattr(self, name).copy())
        return new

    def snapshot(self) -> tuple[np.ndarray, np.ndarray]:
        return self.basis.copy(), self.at_upper.copy()

    def restore(self, snap, lb: np.ndarray, ub: np.ndarray) -> bool:
        """Load a saved basis under new variable bounds; False if bounds are empty."""
        self.basis = snap[0].copy()
        self.is_basic = np.zeros(self.N, dtype=bool)
        self.is_basic[self.basis] = True
        self.at_upper = snap[1].copy()
        ok = True
        for j in np.flatnonzero(self.col_of >= 0):
            ok &= self._map_bounds(j, lb[j], ub[j])
        for j in np.flatnonzero(self.col_of == FIXED):
            if not lb[j] - FEAS_TOL <= self.fixed_val[j] <= ub[j] + FEAS_TOL:
                ok = False
        self.at_upper &= np.isfinite(self.hi)
        self.cost = self.cost2
        self.refactor()
        return ok

    def _map_bounds(self, j: int, lb: float, ub: float) -> bool:
        k = self.col_of[j]
        o = self.offset[j]
        if self.sign[k] > 0:
            lo, hi = lb - o, ub - o
        else:
            lo, hi = o - ub, o - lb
        lo, hi = lo / self.col_scale[k], hi / self.col_scale[k]
        self.lo[k], self.hi[k] = lo, hi
        return lo <= hi + FEAS_TOL

    def can_rebound(self, j: int) -> bool:
        return self.col_of[j] != SPLIT

    def set_var_bounds(self, j: int, lb: float, ub: float) -> bool:
        """Tighten bounds of original variable ``j`` in place; False if now empty."""
        k = self.col_of[j]
        if k == FIXED:
            return lb - FEAS_TOL <= self.fixed_val[j] <= ub + FEAS_TOL
        if k == SPLIT:
            raise ValueError("bounds of a split free variable cannot be changed in place")
        old = self.hi[k] if self.at_upper[k] else self.lo[k]
        ok = self._map_bounds(j, lb, ub)
        if not ok:
            return False
        if not self.is_basic[k]:
            if self.at_upper[k] and not np.isfinite(self.hi[k]):
                self.at_upper[k] = False
            new = self.hi[k] if self.at_upper[k] else self.lo[k]
            if new != old:
                self.beta -= self.T[:, k] * (new - old)
        return True

    def refactor(self) -> None:
        m = self.m
        if m == 0:
            self.d = self.cost.copy()
            self.since_refactor = 0
            return
        xn = np.where(self.at_upper, self.hi, self.lo)
        xn[self.basis] = 0.0
        rhs = self.b - self.M0 @ xn
        try:
            sol = np.linalg.solve(self.M0[:, self.basis], np.column_stack([self.M0, rhs]))
        except np.linalg.LinAlgError as exc:
            raise NumericsError("simplex basis became singular") from exc
        self.T = sol[:, :-1]
        self.T[:, self.basis] = np.eye(m)
        self.beta = sol[:, -1]
        self.d = self.cost - self.cost[self.basis] @ self.T
        self.since_refactor = 0

    def _drifted(self) -> bool:
        """True when the updated basic values or reduced costs have lost accuracy."""
        xn = np.where(self.at_upper, self.hi, self.lo)
        xn[self.basis] = self.beta
        res = self.M0 @ xn - self.b
        if np.abs(res).max(initial=0.0) > DRIFT_TOL * (1.0 + np.abs(self.b).max(initial=0.0)):
            return True
        d = self.cost - self.cost[self.basis] @ self.T
        return bool(np.abs(d - self.d).max(initial=0.0) > DRIFT_TOL)

    def _pivot(self, r: int, q: int, value: float) -> None:
        T = self.T
        leave = self.basis[r]
        self.is_basic[leave] = False
        self.is_basic[q] = True
        self.basis[r] = q
        self.at_upper[q] = False
        T[r] /= T[r, q]
        col = T[:, q].copy()
        col[r] = 0.0
        nz = np.flatnonzero(col)
        if nz.size:
            T[nz] -= np.outer(col[nz], T[r])
        T[:, q] = 0.0
        T[r, q] = 1.0
        self.d -= self.d[q] * T[r]
        self.d[q] = 0.0
        self.beta[r] = value
        self.iterations += 1
        self.since_refactor += 1
        if self.since_refactor >= REFACTOR_EVERY:
            self.refactor()

    def _check_cap(self, start: int, max_iter: int) -> None:
        if self.iterations - start >= max_iter:
            raise NumericsError(f"simplex iteration cap ({max_iter}) reached")
        if (self.deadline is not None and self.iterations % CLOCK_EVERY == 0
                and time.perf_counter() > self.deadline):
            raise LpTimeout

    # -- algorithms -----------------------------------------------------

    def primal(self, cost: np.ndarray, max_iter: int = MAX_ITER) -> Status:
        """Primal simplex from the current (primal feasible) basis."""
        self.cost = cost
        self.d = cost - cost[self.basis] @ self.T
        start = self.iterations
        degenerate = 0
        m = self.m
        while True:
            self._check_cap(start, max_iter)
            movable = self.hi > self.lo
            d = self.d
            cand = movable & ~self.is_basic & np.where(self.at_upper, d > OPT_TOL, d < -OPT_TOL)
            if not cand.any():
                if self.since_refactor and self._drifted():
                    self.refactor()
                    continue
                return Status.OPTIMAL
            bland = self.pricing == "bland" or degenerate >= DEGENERATE_RUN
            if bland:
                q = int(np.argmax(cand))
            else:
                q = int(np.argmax(np.where(cand, np.abs(d), -1.0)))
            delta = -1.0 if self.at_upper[q] else 1.0
            alpha = delta * self.T[:, q]

            theta_row, r = INF, -1
            if m:
                lo_b, hi_b = self.lo[self.basis], self.hi[self.basis]
                ratios = np.full(m, INF)
                pos = alpha > PIVOT_TOL
                neg = (alpha < -PIVOT_TOL) & np.isfinite(hi_b)
                gap = np.zeros(m)
                gap[pos] = np.maximum(self.beta[pos] - lo_b[pos], 0.0)
                gap[neg] = np.maximum(hi_b[neg] - self.beta[neg], 0.0)
                step = np.where(pos | neg, np.abs(alpha), 1.0)
                ratios[pos | neg] = gap[pos | neg] / step[pos | neg]
                if bland:
                    theta_row = float(ratios.min())
                    if theta_row < INF:
                        ties = np.flatnonzero(ratios <= theta_row + 1e-12 * (1.0 + theta_row))
                        r = int(ties[np.argmin(self.basis[ties])])
                else:
                    # Harris: allow a tiny bound overshoot, take the largest pivot.
                    relaxed = np.full(m, INF)
                    relaxed[pos | neg] = (gap[pos | neg] + HARRIS_TOL) / step[pos | neg]
                    limit = float(relaxed.min())
                    if limit < INF:
                        ties = np.flatnonzero(ratios <= limit)
                        r = int(ties[np.argmax(np.abs(alpha[ties]))])
                        theta_row = float(ratios[r])
            theta_flip = self.hi[q] - self.lo[q]

            if theta_flip <= theta_row:
                if theta_flip == INF:
                    self.iterations += 1
                    return Status.UNBOUNDED
                self.beta -= theta_flip * alpha
                self.at_upper[q] = not self.at_upper[q]
                self.iterations += 1
                degenerate = 0
                continue

            theta = theta_row
            degenerate = degenerate + 1 if theta <= 1e-12 else 0
            self.beta -= theta * alpha
            leave = self.basis[r]
            self.at_upper[leave] = alpha[r] < 0
            value = self.lo[q] + theta if delta > 0 else self.hi[q] - theta
            self._pivot(r, q, value)

    def dual(self, max_iter: int = MAX_ITER) -> Status:
        """Dual simplex from the current (dual feasible) basis."""
        start = self.iterations
        degenerate = 0
        while True:
            self._check_cap(start, max_iter)
            lo_b, hi_b = self.lo[self.basis], self.hi[self.basis]
            beta = self.beta
            below = beta < lo_b - FEAS_TOL * (1.0 + np.abs(lo_b))
            with np.errstate(invalid="ignore"):
                above = beta > hi_b + FEAS_TOL * (1.0 + np.abs(hi_b))
            if not (below.any() or above.any()):
                if self.since_refactor and self._drifted():
                    self.refactor()
                    continue
                return Status.OPTIMAL
            bland = self.pricing == "bland" or degenerate >= DEGENERATE_RUN
            infeas = np.where(below, lo_b - beta, np.where(above, beta - hi_b, 0.0))
            bad = np.flatnonzero(infeas > 0)
            if bland:
                r = int(bad[np.argmin(self.basis[bad])])
            else:
                r = int(bad[np.argmax(infeas[bad])])
            row = self.T[r]
            nb = ~self.is_basic & (self.hi > self.lo)
            up = ~self.at_upper
            if below[r]:
                elig = nb & np.where(up, row < -PIVOT_TOL, row > PIVOT_TOL)
            else:
                elig = nb & np.where(up, row > PIVOT_TOL, row < -PIVOT_TOL)
            if not elig.any():
                if self.since_refactor:
                    self.refactor()
                    continue
                return Status.INFEASIBLE
            idx = np.flatnonzero(elig)
            dj = np.maximum(np.where(up[idx], self.d[idx], -self.d[idx]), 0.0)
            ratios = dj / np.abs(row[idx])
            if bland:
                best = float(ratios.min())
                q = int(idx[ratios <= best + 1e-12 * (1.0 + best)][0])
            else:
                limit = float(((dj + OPT_TOL) / np.abs(row[idx])).min())
                ties = idx[ratios <= limit]
                q = int(ties[np.argmax(np.abs(row[ties]))])
                best = float(ratios[np.searchsorted(idx, q)])
            degenerate = degenerate + 1 if best <= 1e-12 else 0
            target = lo_b[r] if below[r] else hi_b[r]
            dq = (beta[r] - target) / row[q]
            xq = self.hi[q] if self.at_upper[q] else self.lo[q]
            self.beta -= self.T[:, q] * dq
            self.at_upper[self.basis[r]] = not below[r]
            self._pivot(r, q, xq + dq)

    def solve(self, max_iter: int = MAX_ITER) -> Status:
        """Cold two-phase solve from the slack/artificial basis."""
        if self.trivially_infeasible:
            return Status.INFEASIBLE
        start = self.iterations
        if self.art.size:
            cost1 = np.zeros(self.N)
            cost1[self.art] = 1.0
            self.primal(cost1, max_iter)
            infeas = float(cost1[self.basis] @ self.beta)
            if infeas > FEAS_TOL * (1.0 + float(np.abs(self.b).max(initial=0.0))) * 10:
                return Status.INFEASIBLE
            self.hi[self.art] = 0.0
            self.at_upper[self.art] = False
        return self.primal(self.cost2, max_iter - (self.iterations - start))

    def reoptimize(self, max_iter: int = MAX_ITER) -> Status:
        """Restore optimality after bound changes (dual, then primal clean-up)."""
        if self.trivially_infeasible:
            return Status.INFEASIBLE
        self.cost = self.cost2
        start = self.iterations
        if self.dual(max_iter) is Status.INFEASIBLE:
            return Status.INFEASIBLE
        return self.primal(self.cost2, max_iter - (self.iterations - start))

    def x(self) -> np.ndarray:
        """Current basic solution in the original variables."""
        xp = np.where(self.at_upper, self.hi, self.lo)
        xp[self.basis] = self.beta
        xp = np.clip(xp, self.lo, self.hi)
        x = self.fixed_val.copy()
        single = self.col_of >= 0
        x[single] = self.offset[single]
        np.add.at(x, self.var_of, self.sign * xp[:self.n_struct] * self.col_scale)
        lb = np.full(self.n_orig, -INF)
        ub = np.full(self.n_orig, INF)
        fixed = self.col_of == FIXED
        lb[fixed] = ub[fixed] = self.fixed_val[fixed]
        idx = np.flatnonzero(single)
        k = self.col_of[idx]
        pos, o = self.sign[k] > 0, self.offset[idx]
        lo_k, hi_k = self.lo[k] * self.col_scale[k], self.hi[k] * self.col_scale[k]
        lb[idx] = np.where(pos, o + lo_k, o - hi_k)
        ub[idx] = np.where(pos, o + hi_k, o - lo_k)
        # Snap values sitting within round-off of a bound.
        for bound in (lb, ub):
            near = np.isfinite(bound) & (np.abs(x - bound) <= 1e-11 * (1.0 + np.abs(bound)))
            x[near] = bound[near]
        return x

    def result(self, status: Status) -> LpResult:
        if status is Status.OPTIMAL:
            x = self.x()
            return LpResult(status, x, float(self.c_orig @ x), self.iterations)
        obj = -INF if status is Status.UNBOUNDED else INF
        return LpResult(status, None, obj, self.iterations)


def solve_lp(model: MilpModel, *, pricing: str = "dantzig",
             max_iter: int = MAX_ITER) -> MipSolution:
    """Solve the LP relaxation of ``model`` (integrality ignored)."""
    cm = model.compiled
    res = solve_lp_arrays(cm.A, cm.sense, cm.rhs, cm.c, cm.lb, cm.ub,
                          pricing=pricing, max_iter=max_iter)
    obj = res.objective + cm.const if res.status is Status.OPTIMAL else res.objective
    return MipSolution(res.status, res.x, obj, nodes=1, lp_iterations=res.iterations,
                       bound=obj, names=tuple(v.name for v in model.variables))


def solve_lp_arrays(A: np.ndarray, sense: np.ndarray, rhs: np.ndarray, c: np.ndarray,
                    lb: np.ndarray, ub: np.ndarray, *, pricing: str = "dantzig",
                    max_iter: int = MAX_ITER) -> LpResult:
    """Minimize ``c.x`` s.t. ``A x (sense) rhs`` and ``lb <= x <= ub``.

    The returned objective excludes any constant term.
    """
    tab = Tableau(A, sense, rhs, c, lb, ub, pricing=pricing)
    return tab.result(tab.solve(max_iter))
