"""Bounded-variable revised simplex with duals and reduced costs.

The solver keeps a dense basis inverse with periodic refactorization, uses
Dantzig pricing with a lowest-index tie break, and falls back to Bland's
rule once a degeneracy detector trips, which guarantees termination.
Feasibility is established by an artificial-variable phase 1; a warm basis
skips phase 1 whenever it is still primal feasible (the common case after
adding columns).

Internal column layout: user columns, then one slack per row, then one
artificial per row. Slack bounds encode the row sense ('<' -> [0, inf),
'=' -> [0, 0], '>' -> (-inf, 0]).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .clock import LP_PIVOT_OVERHEAD, LP_SOLVE_OVERHEAD, WorkClock
from .model import StructuralError

FEAS_TOL = 1e-7
OPT_TOL = 1e-7
REPORT_TOL = 1e-6
REFACTOR_EVERY = 100

AT_LO, AT_HI, BASIC, FREE = 0, 1, 2, 3

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"
FAILED = "failed"


class LinearProgram:
    """Column-oriented LP: min c.x st rows(sense, rhs), lo <= x <= hi."""

    def __init__(self) -> None:
        self.obj: list[float] = []
        self.cols: list[list[tuple[int, float]]] = []
        self.lo: list[float] = []
        self.hi: list[float] = []
        self.sense: list[str] = []
        self.rhs: list[float] = []

    @property
    def n_rows(self) -> int:
        return len(self.rhs)

    @property
    def n_cols(self) -> int:
        return len(self.obj)

    def add_row(self, sense: str, rhs: float) -> int:
        if sense not in ("<", "=", ">"):
            raise StructuralError(f"bad row sense {sense!r}")
        self.sense.append(sense)
        self.rhs.append(float(rhs))
        return self.n_rows - 1

    def add_column(
        self,
        obj: float,
        entries: list[tuple[int, float]],
        lo: float = 0.0,
        hi: float = np.inf,
    ) -> int:
        for row, _ in entries:
            if not (0 <= row < self.n_rows):
                raise StructuralError(f"column entry references bad row {row}")
        if hi < lo:
            raise StructuralError("empty variable bound interval")
        self.obj.append(float(obj))
        self.cols.append([(int(r), float(v)) for r, v in entries])
        self.lo.append(float(lo))
        self.hi.append(float(hi))
        return self.n_cols - 1


@dataclass
class Basis:
    """Warm-start state. Basic columns use stable ids: user j >= 0, slack i -> -(i+1)."""

    n_user: int
    n_rows: int
    col_status: np.ndarray  # per user column
    slack_status: np.ndarray  # per row
    basic: list[int]


@dataclass
class LpResult:
    status: str
    x: np.ndarray
    duals: np.ndarray
    reduced_costs: np.ndarray
    objective: float
    iterations: int
    basis: Optional[Basis] = None
    infeasibility: float = 0.0


@dataclass
class _Work:
    A: np.ndarray
    b: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    statuses: np.ndarray
    basic: np.ndarray
    Binv: np.ndarray
    x: np.ndarray
    pivots: int = 0
    since_refactor: int = 0
    bland: bool = False
    stall: int = 0
    charge: float = 0.0


def _nonbasic_value(status: int, lo: float, hi: float) -> float:
    if status == AT_LO:
        return lo
    if status == AT_HI:
        return hi
    return 0.0


def _default_status(lo: float, hi: float) -> int:
    if np.isfinite(lo):
        return AT_LO
    if np.isfinite(hi):
        return AT_HI
    return FREE


def _refactor(w: _Work) -> bool:
    try:
        w.Binv = np.linalg.inv(w.A[:, w.basic])
    except np.linalg.LinAlgError:
        return False
    mask = np.ones(w.A.shape[1], dtype=bool)
    mask[w.basic] = False
    rhs = w.b - w.A[:, mask] @ w.x[mask]
    w.x[w.basic] = w.Binv @ rhs
    w.since_refactor = 0
    w.charge += w.A.shape[0] ** 3 / 3.0
    return True


def _iterate(w: _Work, costs: np.ndarray, max_iter: int, bland_after: int) -> str:
    m, n_total = w.A.shape
    movable = w.hi - w.lo > FEAS_TOL  # fixed columns can never improve
    last_obj = float(costs @ w.x)
    while True:
        if w.pivots >= max_iter:
            return ITERATION_LIMIT
        y = costs[w.basic] @ w.Binv
        d = costs - y @ w.A
        w.charge += m * m + m * n_total / 4.0

        can_inc = ((w.statuses == AT_LO) | (w.statuses == FREE)) & movable
        can_dec = ((w.statuses == AT_HI) | (w.statuses == FREE)) & movable
        viol = np.zeros(n_total)
        np.copyto(viol, -d, where=can_inc & (d < -OPT_TOL))
        viol_dec = can_dec & (d > OPT_TOL)
        viol[viol_dec] = np.maximum(viol[viol_dec], d[viol_dec])

        if w.bland:
            candidates = np.nonzero(viol > OPT_TOL)[0]
            if candidates.size == 0:
                return OPTIMAL
            j = int(candidates[0])
        else:
            j = int(np.argmax(viol))
            if viol[j] <= OPT_TOL:
                return OPTIMAL

        direction = 1.0 if (can_inc[j] and d[j] < -OPT_TOL) else -1.0

        col = w.A[:, j]
        wdir = w.Binv @ col
        w.charge += m * m

        # Ratio test: largest step t >= 0 before a basic variable hits a bound
        # or the entering variable flips to its opposite bound.
        xb = w.x[w.basic]
        lob = w.lo[w.basic]
        hib = w.hi[w.basic]
        delta = direction * wdir

        ratios = np.full(m, np.inf)
        pos = delta > 1e-9
        neg = delta < -1e-9
        with np.errstate(invalid="ignore"):
            ratios[pos] = (xb[pos] - lob[pos]) / delta[pos]
            ratios[neg] = (xb[neg] - hib[neg]) / delta[neg]
        ratios[pos & ~np.isfinite(lob)] = np.inf
        ratios[neg & ~np.isfinite(hib)] = np.inf
        np.maximum(ratios, 0.0, out=ratios)

        t_bound = w.hi[j] - w.lo[j] if np.isfinite(w.hi[j]) and np.isfinite(w.lo[j]) else np.inf
        t_basic = ratios.min() if m else np.inf

        if not np.isfinite(min(t_basic, t_bound)):
            return UNBOUNDED

        if t_bound <= t_basic + 1e-12:
            # Bound flip: no basis change.
            t = t_bound
            w.x[w.basic] = xb - t * delta
            w.x[j] = w.hi[j] if w.statuses[j] == AT_LO else w.lo[j]
            w.statuses[j] = AT_HI if w.statuses[j] == AT_LO else AT_LO
        else:
            t = t_basic
            tie = np.nonzero(ratios <= t + 1e-12)[0]
            r = int(tie[np.argmax(np.abs(delta[tie]))])
            leaving = int(w.basic[r])

            w.x[w.basic] = xb - t * delta
            w.x[j] = _nonbasic_value(int(w.statuses[j]), w.lo[j], w.hi[j]) + direction * t
            w.statuses[leaving] = AT_LO if delta[r] > 0 else AT_HI
            w.x[leaving] = w.lo[leaving] if delta[r] > 0 else w.hi[leaving]
            w.statuses[j] = BASIC
            w.basic[r] = j

            pivot = wdir[r]
            if abs(pivot) < 1e-11:
                if not _refactor(w):
                    return FAILED
            else:
                eta = wdir / pivot
                eta[r] = 1.0 / pivot
                row_r = w.Binv[r].copy()
                w.Binv -= np.outer(wdir, row_r) / pivot
                w.Binv[r] = row_r / pivot
                w.charge += m * m

        w.pivots += 1
        w.since_refactor += 1
        w.charge += LP_PIVOT_OVERHEAD
        if w.since_refactor >= REFACTOR_EVERY:
            if not _refactor(w):
                return FAILED

        obj = float(costs @ w.x)
        if obj < last_obj - 1e-10 * (1.0 + abs(last_obj)):
            w.stall = 0
        else:
            w.stall += 1
            if w.stall >= bland_after:
                w.bland = True
        last_obj = obj


def solve_lp(
    lp: LinearProgram,
    warm_basis: Optional[Basis] = None,
    max_iter: Optional[int] = None,
    clock: Optional[WorkClock] = None,
) -> LpResult:
    """Solve to optimality; deterministic for identical input."""
    m, n = lp.n_rows, lp.n_cols
    n_slack = m
    n_total = n + n_slack + m  # user + slacks + artificials

    A = np.zeros((m, n_total))
    for j, entries in enumerate(lp.cols):
        for row, val in entries:
            A[row, j] += val
    lo = np.empty(n_total)
    hi = np.empty(n_total)
    lo[:n] = lp.lo
    hi[:n] = lp.hi
    for i, sense in enumerate(lp.sense):
        A[i, n + i] = 1.0
        if sense == "<":
            lo[n + i], hi[n + i] = 0.0, np.inf
        elif sense == "=":
            lo[n + i], hi[n + i] = 0.0, 0.0
        else:
            lo[n + i], hi[n + i] = -np.inf, 0.0
    # Artificial bounds are opened only during phase 1.
    lo[n + n_slack:] = 0.0
    hi[n + n_slack:] = 0.0
    b = np.asarray(lp.rhs, dtype=float)

    costs2 = np.zeros(n_total)
    costs2[:n] = lp.obj

    if max_iter is None:
        max_iter = max(20000, 60 * (m + n))
    bland_after = 5 * (m + n)

    statuses = np.empty(n_total, dtype=np.int8)
    for j in range(n_total):
        statuses[j] = _default_status(lo[j], hi[j])

    w: Optional[_Work] = None
    warm_ok = False
    if (
        warm_basis is not None
        and warm_basis.n_rows == m
        and warm_basis.n_user <= n
        and len(warm_basis.basic) == m
    ):
        st = statuses.copy()
        st[: warm_basis.n_user] = warm_basis.col_status
        for i in range(m):
            st[n + i] = warm_basis.slack_status[i]
        basic = np.array(
            [j if j >= 0 else n + (-j - 1) for j in warm_basis.basic], dtype=int
        )
        if np.all(st[basic] == BASIC) and len(set(basic.tolist())) == m:
            x = np.array(
                [_nonbasic_value(int(st[j]), lo[j], hi[j]) for j in range(n_total)]
            )
            cand = _Work(A=A, b=b, lo=lo, hi=hi, statuses=st, basic=basic,
                         Binv=np.eye(m), x=x)
            if _refactor(cand):
                xb = cand.x[basic]
                if np.all(xb >= lo[basic] - FEAS_TOL) and np.all(xb <= hi[basic] + FEAS_TOL):
                    w = cand
                    warm_ok = True

    phase1_needed = not warm_ok
    if phase1_needed:
        statuses = np.empty(n_total, dtype=np.int8)
        for j in range(n_total):
            statuses[j] = _default_status(lo[j], hi[j])
        x = np.array(
            [_nonbasic_value(int(statuses[j]), lo[j], hi[j]) for j in range(n_total)]
        )
        resid = b - A[:, : n + n_slack] @ x[: n + n_slack]
        signs = np.where(resid >= 0, 1.0, -1.0)
        for i in range(m):
            A[i, n + n_slack + i] = signs[i]
        hi[n + n_slack:] = np.inf
        basic = np.arange(n + n_slack, n_total)
        statuses[basic] = BASIC
        x[basic] = np.abs(resid)
        w = _Work(A=A, b=b, lo=lo, hi=hi, statuses=statuses, basic=basic,
                  Binv=np.diag(signs), x=x)

        costs1 = np.zeros(n_total)
        costs1[n + n_slack:] = 1.0
        status = _iterate(w, costs1, max_iter, bland_after)
        if clock is not None:
            clock.charge(w.charge + LP_SOLVE_OVERHEAD)
            w.charge = 0.0
        infeas = float(x[n + n_slack:].sum())
        if status in (FAILED, ITERATION_LIMIT):
            return LpResult(status, w.x[:n].copy(), np.zeros(m), np.zeros(n),
                            float("nan"), w.pivots, None, infeas)
        if infeas > FEAS_TOL * max(1.0, float(np.abs(b).max(initial=0.0))):
            return LpResult(INFEASIBLE, w.x[:n].copy(), np.zeros(m), np.zeros(n),
                            float("nan"), w.pivots, None, infeas)
        # Lock artificials at zero for phase 2.
        w.hi[n + n_slack:] = 0.0
        w.x[n + n_slack:][w.statuses[n + n_slack:] != BASIC] = 0.0
        w.bland = False
        w.stall = 0

    assert w is not None
    status = _iterate(w, costs2, max_iter, bland_after)
    if not _refactor(w):  # final clean recompute of basics
        status = FAILED
    if clock is not None:
        clock.charge(w.charge + LP_SOLVE_OVERHEAD)
        w.charge = 0.0

    x_user = w.x[:n].copy()
    duals = costs2[w.basic] @ w.Binv if status == OPTIMAL else np.zeros(m)
    reduced = lp.obj - duals @ w.A[:, :n] if status == OPTIMAL else np.zeros(n)
    objective = float(np.dot(lp.obj, x_user))

    basis = None
    if status == OPTIMAL and _drive_out_artificials(w, n, n_slack):
        stable = []
        for col in w.basic:
            stable.append(int(col) if col < n else -(int(col) - n + 1))
        basis = Basis(
            n_user=n,
            n_rows=m,
            col_status=w.statuses[:n].copy(),
            slack_status=w.statuses[n: n + n_slack].copy(),
            basic=stable,
        )

    return LpResult(status, x_user, np.asarray(duals), np.asarray(reduced),
                    objective, w.pivots, basis)


def _drive_out_artificials(w: _Work, n: int, n_slack: int) -> bool:
    """Pivot basic artificials (all at value 0) out of the basis when possible."""
    first_artificial = n + n_slack
    rows = [i for i, col in enumerate(w.basic) if col >= first_artificial]
    if not rows:
        return True
    for r in rows:
        row_vec = w.Binv[r] @ w.A[:, :first_artificial]
        candidates = np.nonzero(np.abs(row_vec) > 1e-9)[0]
        picked = -1
        for j in candidates:
            if w.statuses[j] != BASIC:
                picked = int(j)
                break
        if picked < 0:
            return False  # structurally redundant row; basis not reusable
        pivot = row_vec[picked]
        wdir = w.Binv @ w.A[:, picked]
        leaving = int(w.basic[r])
        w.statuses[leaving] = AT_LO
        w.x[leaving] = 0.0
        w.statuses[picked] = BASIC
        w.basic[r] = picked
        eta = wdir / pivot
        row_r = w.Binv[r].copy()
        w.Binv -= np.outer(wdir, row_r) / pivot
        w.Binv[r] = row_r / pivot
        # Degenerate pivot: values unchanged (entering stays at its bound value).
        w.x[picked] = w.x[picked]
    return True


def verify_optimal(lp: LinearProgram, res: LpResult) -> dict[str, float]:
    """Residuals for the optimality certificates. Intended for tests."""
    if res.status != OPTIMAL:
        raise StructuralError("verify_optimal expects an optimal result")
    m, n = lp.n_rows, lp.n_cols
    A = np.zeros((m, n))
    for j, entries in enumerate(lp.cols):
        for row, val in entries:
            A[row, j] += val
    ax = A @ res.x
    primal = 0.0
    for i, sense in enumerate(lp.sense):
        if sense == "<":
            primal = max(primal, ax[i] - lp.rhs[i])
        elif sense == ">":
            primal = max(primal, lp.rhs[i] - ax[i])
        else:
            primal = max(primal, abs(ax[i] - lp.rhs[i]))
    primal = max(
        primal,
        float(np.max(np.maximum(np.asarray(lp.lo) - res.x, 0.0), initial=0.0)),
        float(np.max(np.maximum(res.x - np.asarray(lp.hi), 0.0), initial=0.0)),
    )

    # Dual objective for bounded variables:
    # y.b + sum_{d_j > 0} d_j lo_j + sum_{d_j < 0} d_j hi_j
    d = res.reduced_costs
    dual_obj = float(res.duals @ np.asarray(lp.rhs))
    lo = np.asarray(lp.lo)
    hi = np.asarray(lp.hi)
    dual_obj += float(np.sum(np.where(d > 0, d * np.where(np.isfinite(lo), lo, 0.0), 0.0)))
    dual_obj += float(np.sum(np.where(d < 0, d * np.where(np.isfinite(hi), hi, 0.0), 0.0)))
    gap = abs(res.objective - dual_obj) / max(1.0, abs(res.objective))

    # Complementary slackness: interior variables need zero reduced cost.
    comp = 0.0
    for j in range(n):
        interior = (res.x[j] > lo[j] + 1e-6) and (res.x[j] < hi[j] - 1e-6)
        if interior:
            comp = max(comp, abs(d[j]))
    return {"primal": float(primal), "duality_gap": float(gap), "complementarity": float(comp)}
