"""Continuous relaxations: path-flow master with column generation, slope
scaling, capacity scaling with arc pruning, and arc-flow LP assembly.

One shared restricted-master engine backs everything that routes flow: the
minimum-cost multicommodity flow for a fixed design, the linearized flow LP
of slope scaling, the path-flow relaxation that capacity scaling smooths,
and the node relaxations of branch-and-bound. Pricing enumerates loopless
shortest paths (Yen) under reduced-cost arc lengths; forcing rows are
separated lazily.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .clock import WorkClock
from .model import (
    FlowSolution,
    Instance,
    LinearRow,
    Solution,
    StructuralError,
    new_solution,
)
from .simplex import INFEASIBLE, OPTIMAL, LinearProgram, solve_lp

INT_TOL = 1e-6
PRICE_TOL = 1e-7
FLOW_TOL = 1e-9


# ---------------------------------------------------------------------------
# Shortest paths


def _dijkstra(
    instance: Instance,
    lengths: np.ndarray,
    source: int,
    target: int,
    allowed: np.ndarray,
    banned_nodes: Optional[set[int]] = None,
) -> Optional[tuple[float, tuple[int, ...]]]:
    """Shortest simple path under nonnegative arc lengths; None if unreachable."""
    n = instance.node_count
    dist = np.full(n, np.inf)
    pred_arc = np.full(n, -1, dtype=int)
    dist[source] = 0.0
    heap = [(0.0, source)]
    banned = banned_nodes or ()
    while heap:
        d_u, u = heapq.heappop(heap)
        if d_u > dist[u] + 1e-15:
            continue
        if u == target:
            break
        for arc in instance.out_arcs[u]:
            if not allowed[arc]:
                continue
            v = instance.arcs[arc].head
            if v in banned:
                continue
            nd = d_u + lengths[arc]
            if nd < dist[v] - 1e-15:
                dist[v] = nd
                pred_arc[v] = arc
                heapq.heappush(heap, (nd, v))
    if not np.isfinite(dist[target]):
        return None
    arcs = []
    node = target
    while node != source:
        arc = int(pred_arc[node])
        arcs.append(arc)
        node = instance.arcs[arc].tail
    return float(dist[target]), tuple(reversed(arcs))


def _k_shortest(
    instance: Instance,
    lengths: np.ndarray,
    source: int,
    target: int,
    allowed: np.ndarray,
    limit: int,
    threshold: float,
) -> list[tuple[float, tuple[int, ...]]]:
    """Up to `limit` loopless shortest paths with length < threshold (Yen)."""
    first = _dijkstra(instance, lengths, source, target, allowed)
    if first is None or first[0] >= threshold:
        return []
    found = [first]
    candidates: list[tuple[float, tuple[int, ...]]] = []
    seen = {first[1]}
    while len(found) < limit:
        prev = found[-1][1]
        prev_nodes = [source] + [instance.arcs[a].head for a in prev]
        mask = allowed.copy()
        for spur_idx in range(len(prev)):
            spur_node = prev_nodes[spur_idx]
            root = prev[:spur_idx]
            root_len = float(sum(lengths[a] for a in root))
            spur_mask = mask.copy()
            for _, path in found:
                if path[:spur_idx] == root and len(path) > spur_idx:
                    spur_mask[path[spur_idx]] = False
            banned = set(prev_nodes[:spur_idx])
            spur = _dijkstra(instance, lengths, spur_node, target, spur_mask, banned)
            if spur is None:
                continue
            total = root + spur[1]
            if total in seen:
                continue
            seen.add(total)
            heapq.heappush(candidates, (root_len + spur[0], total))
        if not candidates:
            break
        best = heapq.heappop(candidates)
        if best[0] >= threshold:
            break
        found.append(best)
    return [p for p in found if p[0] < threshold]


# ---------------------------------------------------------------------------
# Path pool and master


class PathPool:
    """Deduplicated store of (commodity, arc-sequence) paths."""

    def __init__(self) -> None:
        self.paths: list[tuple[int, tuple[int, ...]]] = []
        self._index: dict[tuple[int, tuple[int, ...]], int] = {}

    def add(self, commodity: int, arcs: tuple[int, ...]) -> tuple[int, bool]:
        key = (commodity, arcs)
        pid = self._index.get(key)
        if pid is not None:
            return pid, False
        pid = len(self.paths)
        self.paths.append(key)
        self._index[key] = pid
        return pid, True

    def __len__(self) -> int:
        return len(self.paths)


@dataclass
class MasterResult:
    status: str  # optimal | infeasible | failed
    objective: float
    converged: bool
    dummy_total: float
    y_values: np.ndarray
    arc_flows: np.ndarray
    flows: dict[int, list[tuple[int, float]]]
    rho: np.ndarray
    sigma: np.ndarray
    tau: dict[tuple[int, int], float]
    last_lengths: np.ndarray
    bound: float
    # One list per LP build; objectives within a segment only move down as
    # columns are added (row additions start a new segment).
    objective_trace: list[list[float]] = field(default_factory=list)


class Master:
    """Restricted path-flow master over a shared path pool.

    mode='flow' solves a pure multicommodity flow (capacity rhs = caps);
    mode='design' carries continuous design columns with bounds, lazily
    separated forcing rows, and arbitrary extra linear rows over the design.
    """

    def __init__(
        self,
        instance: Instance,
        pool: PathPool,
        *,
        mode: str,
        allowed: np.ndarray,
        caps: Optional[np.ndarray] = None,
        cost_matrix: Optional[np.ndarray] = None,
        y_lo: Optional[np.ndarray] = None,
        y_hi: Optional[np.ndarray] = None,
        extra_rows: tuple[LinearRow, ...] = (),
        forcing: Optional[list[tuple[int, int]]] = None,
        forcing_enabled: bool = True,
        col_cap: Optional[int] = None,
        clock: Optional[WorkClock] = None,
        deadline: float = np.inf,
    ):
        if mode not in ("flow", "design"):
            raise StructuralError(f"unknown master mode {mode!r}")
        self.inst = instance
        self.pool = pool
        self.mode = mode
        self.caps = instance.capacity if caps is None else np.asarray(caps, dtype=float)
        self.costs = (
            instance.cost_matrix() if cost_matrix is None else np.asarray(cost_matrix, dtype=float)
        )
        self.y_lo = np.zeros(instance.n_arcs) if y_lo is None else np.asarray(y_lo, dtype=float)
        self.y_hi = np.ones(instance.n_arcs) if y_hi is None else np.asarray(y_hi, dtype=float)
        base = np.asarray(allowed, dtype=bool)
        self.allowed = base & (self.y_hi > 0) if mode == "design" else base
        if mode == "design" and np.any((self.y_lo >= 1.0) & ~self.allowed):
            self.forced_infeasible = True
        else:
            self.forced_infeasible = False
        self.extra_rows = tuple(extra_rows)
        self.forcing = forcing if forcing is not None else []
        self.forcing_enabled = forcing_enabled and mode == "design"
        self.col_cap = col_cap
        self.clock = clock
        self.deadline = deadline
        max_c = float(self.costs.max()) if self.costs.size else 1.0
        fix_total = float(instance.fixed_cost.sum())
        min_d = float(instance.demand.min()) if instance.demand.size else 1.0
        self.dummy_unit = 100.0 * ((1.0 + max_c) * instance.node_count + fix_total / min_d)
        # Dual tolerances scale with the objective magnitudes in play.
        self.dual_tol = 1e-7 * max(10.0, max_c, float(instance.fixed_cost.max(initial=0.0)))

    # -- LP construction -----------------------------------------------------

    def _build(self):
        inst = self.inst
        K, A = inst.n_commodities, inst.n_arcs
        lp = LinearProgram()
        for k in range(K):
            lp.add_row("=", inst.demand[k])
        cap_row = {}
        for a in range(A):
            if self.allowed[a]:
                rhs = 0.0 if self.mode == "design" else self.caps[a]
                cap_row[a] = lp.add_row("<", rhs)
        forcing_row = {}
        for (a, k) in self.forcing:
            if self.allowed[a]:
                forcing_row[(a, k)] = lp.add_row("<", 0.0)
        extra_row_ids = []
        extra_coeffs: dict[int, list[tuple[int, float]]] = {}
        constant_infeasible = False
        for row in self.extra_rows:
            kept = [(a, c) for a, c in row.coeffs if self.allowed[a]]
            if not kept:
                ok = LinearRow((), row.sense, row.rhs).satisfied_by(np.zeros(A))
                if not ok:
                    constant_infeasible = True
                continue
            rid = lp.add_row(row.sense, row.rhs)
            extra_row_ids.append(rid)
            for a, c in kept:
                extra_coeffs.setdefault(a, []).append((rid, c))

        dummy_cols = []
        for k in range(K):
            dummy_cols.append(
                lp.add_column(self.dummy_unit, [(k, 1.0)], 0.0, float(inst.demand[k]))
            )
        y_cols: dict[int, int] = {}
        if self.mode == "design":
            for a in range(A):
                if not self.allowed[a]:
                    continue
                entries = [(cap_row[a], -self.caps[a])]
                for k in range(K):
                    rid = forcing_row.get((a, k))
                    if rid is not None:
                        entries.append((rid, -float(inst.demand[k])))
                entries.extend(extra_coeffs.get(a, []))
                y_cols[a] = lp.add_column(
                    float(inst.fixed_cost[a]), entries, float(self.y_lo[a]), float(self.y_hi[a])
                )
        path_cols: dict[int, int] = {}
        for pid, (k, arcs) in enumerate(self.pool.paths):
            if not all(self.allowed[a] for a in arcs):
                continue
            cost = float(sum(self.costs[k, a] for a in arcs))
            entries = [(k, 1.0)]
            for a in arcs:
                entries.append((cap_row[a], 1.0))
                rid = forcing_row.get((a, k))
                if rid is not None:
                    entries.append((rid, 1.0))
            path_cols[pid] = lp.add_column(cost, entries, 0.0, float(inst.demand[k]))
        return lp, cap_row, forcing_row, dummy_cols, y_cols, path_cols, constant_infeasible

    # -- pricing ---------------------------------------------------------------

    def _price(self, res, cap_row, forcing_row, remaining: list[int]):
        """Return (new paths per commodity, shortest length per commodity)."""
        inst = self.inst
        K, A = inst.n_commodities, inst.n_arcs
        sigma = np.zeros(A)
        for a, rid in cap_row.items():
            sigma[a] = res.duals[rid]
        if np.any(sigma > self.dual_tol):
            raise StructuralError("capacity dual above tolerance: inconsistent master")
        tau_by_k: dict[int, np.ndarray] = {}
        for (a, k), rid in forcing_row.items():
            tau_by_k.setdefault(k, np.zeros(A))[a] = res.duals[rid]
        rho = res.duals[:K]

        new_paths: list[tuple[int, tuple[int, ...]]] = []
        lengths_out = np.full(K, np.inf)
        n_dij = 0
        for k in range(K):
            lengths = self.costs[k] - sigma
            tau = tau_by_k.get(k)
            if tau is not None:
                lengths = lengths - tau
            if np.any(lengths[self.allowed] < -self.dual_tol * 10):
                raise StructuralError("negative pricing length: inconsistent master")
            lengths = np.maximum(lengths, 0.0)
            com = inst.commodities[k]
            limit = remaining[k] if self.col_cap is not None else 64
            threshold = float(rho[k]) - PRICE_TOL
            if limit <= 0:
                base = _dijkstra(inst, lengths, com.origin, com.destination, self.allowed)
                n_dij += 1
                if base is not None:
                    lengths_out[k] = base[0]
                continue
            shortest = _dijkstra(inst, lengths, com.origin, com.destination, self.allowed)
            n_dij += 1
            if shortest is None:
                continue
            lengths_out[k] = shortest[0]
            if shortest[0] >= threshold:
                continue
            cands = _k_shortest(
                inst, lengths, com.origin, com.destination, self.allowed, limit, threshold
            )
            n_dij += sum(max(1, len(p)) for _, p in cands)
            for _, arcs in cands:
                _, is_new = self.pool.add(k, arcs)
                if is_new:
                    new_paths.append((k, arcs))
                    remaining[k] -= 1
                    if self.col_cap is not None and remaining[k] <= 0:
                        break
        if self.clock is not None:
            self.clock.charge(n_dij * (4 * A + 200))
        return new_paths, lengths_out

    # -- main loop -------------------------------------------------------------

    def solve(self) -> MasterResult:
        inst = self.inst
        K, A = inst.n_commodities, inst.n_arcs
        remaining = [self.col_cap if self.col_cap is not None else 1 << 30 for _ in range(K)]
        cap_hit = False
        converged = False
        lengths = np.full(K, np.inf)
        trace: list[list[float]] = []

        if self.forced_infeasible:
            return self._empty_result("infeasible")

        while True:
            lp, cap_row, forcing_row, dummies, y_cols, path_cols, const_bad = self._build()
            if const_bad:
                return self._empty_result("infeasible")
            res = solve_lp(lp, clock=self.clock)
            if res.status == INFEASIBLE:
                return self._empty_result("infeasible")
            if res.status != OPTIMAL:
                return self._empty_result("failed")
            trace.append([res.objective])
            basis = res.basis
            rows_added = False
            while True:
                if (self.clock is not None and self.clock.now() > self.deadline):
                    break
                new_paths, lengths = self._price(res, cap_row, forcing_row, remaining)
                cap_hit = cap_hit or any(r <= 0 for r in remaining)
                if not new_paths:
                    converged = not cap_hit
                    break
                for k, arcs in new_paths:
                    pid = self.pool._index[(k, arcs)]
                    cost = float(sum(self.costs[k, a] for a in arcs))
                    entries = [(k, 1.0)]
                    for a in arcs:
                        entries.append((cap_row[a], 1.0))
                        rid = forcing_row.get((a, k))
                        if rid is not None:
                            entries.append((rid, 1.0))
                    path_cols[pid] = lp.add_column(cost, entries, 0.0, float(inst.demand[k]))
                res = solve_lp(lp, warm_basis=basis, clock=self.clock)
                if res.status != OPTIMAL:
                    return self._empty_result("failed")
                trace[-1].append(res.objective)
                basis = res.basis

            # Lazy forcing separation.
            if self.forcing_enabled:
                flows_ka: dict[tuple[int, int], float] = {}
                for pid, col in path_cols.items():
                    val = res.x[col]
                    if val > FLOW_TOL:
                        k, arcs = self.pool.paths[pid]
                        for a in arcs:
                            flows_ka[(a, k)] = flows_ka.get((a, k), 0.0) + val
                have = set(self.forcing)
                violated = []
                for (a, k), amount in sorted(flows_ka.items()):
                    if (a, k) in have:
                        continue
                    ycol = y_cols.get(a)
                    yval = res.x[ycol] if ycol is not None else 0.0
                    if amount > inst.demand[k] * yval + 1e-6 * max(1.0, inst.demand[k]):
                        violated.append((a, k))
                if violated:
                    self.forcing.extend(violated)
                    converged = False
                    rows_added = True
            if not rows_added:
                break

        # Extraction.
        arc_flows = np.zeros(A)
        flows: dict[int, list[tuple[int, float]]] = {}
        for pid, col in path_cols.items():
            val = float(res.x[col])
            if val <= FLOW_TOL:
                continue
            k, arcs = self.pool.paths[pid]
            bucket = flows.setdefault(k, {})
            for a in arcs:
                arc_flows[a] += val
                bucket[a] = bucket.get(a, 0.0) + val
        flows = {k: sorted(b.items()) for k, b in flows.items()}

        y_values = np.zeros(A)
        if self.mode == "design":
            for a, col in y_cols.items():
                y_values[a] = res.x[col]
        sigma = np.zeros(A)
        for a, rid in cap_row.items():
            sigma[a] = res.duals[rid]
        tau = {key: float(res.duals[rid]) for key, rid in forcing_row.items()}
        rho = res.duals[:K].copy()
        dummy_total = float(sum(res.x[c] for c in dummies))

        # Lagrangian bound: valid after any pricing pass. Unreachable
        # commodities contribute nothing (their shortest length is +inf).
        finite = np.isfinite(lengths)
        correction = float(
            np.sum(inst.demand[finite] * np.minimum(0.0, lengths[finite] - rho[finite]))
        )
        bound = res.objective + correction

        return MasterResult(
            status="optimal",
            objective=float(res.objective),
            converged=converged,
            dummy_total=dummy_total,
            y_values=y_values,
            arc_flows=arc_flows,
            flows=flows,
            rho=rho,
            sigma=sigma,
            tau=tau,
            last_lengths=lengths,
            bound=float(bound),
            objective_trace=trace,
        )

    def _empty_result(self, status: str) -> MasterResult:
        K, A = self.inst.n_commodities, self.inst.n_arcs
        return MasterResult(
            status=status,
            objective=np.inf,
            converged=status == "infeasible",
            dummy_total=0.0,
            y_values=np.zeros(A),
            arc_flows=np.zeros(A),
            flows={},
            rho=np.zeros(K),
            sigma=np.zeros(A),
            tau={},
            last_lengths=np.full(K, np.inf),
            bound=np.inf,
        )


# ---------------------------------------------------------------------------
# Public operations


def solve_flow_lp(
    instance: Instance,
    design,
    clock: Optional[WorkClock] = None,
    pool: Optional[PathPool] = None,
) -> Optional[FlowSolution]:
    """Minimum-cost multicommodity flow on the open arcs; None if infeasible."""
    y = np.asarray(design)
    if y.shape[0] != instance.n_arcs:
        raise StructuralError("design length mismatch")
    open_mask = y > 0.5
    master = Master(
        instance, pool if pool is not None else PathPool(), mode="flow",
        allowed=open_mask, clock=clock,
    )
    res = master.solve()
    if res.status != "optimal" or res.dummy_total > 1e-6:
        return None
    routing = float(
        sum(
            instance.arc_cost(k)[a] * amt
            for k, entries in res.flows.items()
            for a, amt in entries
        )
    )
    return FlowSolution(flows=res.flows, design=y.astype(float), objective=routing)


@dataclass
class SlopeState:
    """Slope-scaling linearization factors with frozen index sets."""

    factors: np.ndarray
    a0: frozenset = frozenset()  # factor forced to BIG (arc discouraged)
    a1: frozenset = frozenset()  # factor forced to 0 (arc free)

    def __post_init__(self):
        if self.a0 & self.a1:
            raise StructuralError("frozen sets must be disjoint")
        if np.any(self.factors < 0):
            raise StructuralError("negative linearization factor")


def initial_slope_state(instance: Instance) -> SlopeState:
    return SlopeState(factors=instance.fixed_cost / instance.capacity)


def slope_scaling_big(instance: Instance) -> float:
    return 1e7 * (float(instance.cost_matrix().max()) + float(instance.fixed_cost.max()) + 1.0)


def slope_scaling_iterate(
    instance: Instance,
    state: SlopeState,
    clock: Optional[WorkClock] = None,
    pool: Optional[PathPool] = None,
) -> Optional[tuple[FlowSolution, np.ndarray, SlopeState]]:
    """One linearized flow LP solve plus the rounding and factor update.

    Returns (flows with fractional design readout, rounded design, new state),
    or None when the linearized LP is infeasible.
    """
    big = slope_scaling_big(instance)
    rho = state.factors.copy()
    if state.a0:
        rho[list(state.a0)] = big
    if state.a1:
        rho[list(state.a1)] = 0.0
    costs = instance.cost_matrix() + rho

    master = Master(
        instance, pool if pool is not None else PathPool(), mode="flow",
        allowed=np.ones(instance.n_arcs, dtype=bool), cost_matrix=costs, clock=clock,
    )
    res = master.solve()
    if res.status != "optimal" or res.dummy_total > 1e-6:
        return None

    totals = res.arc_flows
    scale = max(1.0, float(instance.demand.max()))
    positive = totals > 1e-9 * scale
    y_ss = np.where(
        positive, np.ceil(np.maximum(totals - 1e-9 * scale, 0.0) / instance.capacity), 0.0
    ).astype(np.int8)
    frac = np.clip(totals / instance.capacity, 0.0, 1.0)

    new_factors = state.factors.copy()
    new_factors[positive] = instance.fixed_cost[positive] / totals[positive]

    routing = float(
        sum(
            instance.arc_cost(k)[a] * amt
            for k, entries in res.flows.items()
            for a, amt in entries
        )
    )
    flows = FlowSolution(flows=res.flows, design=frac, objective=routing)
    return flows, y_ss, replace(state, factors=new_factors)


@dataclass
class MasterDuals:
    rho: np.ndarray
    sigma: np.ndarray
    tau: dict[tuple[int, int], float] = field(default_factory=dict)


@dataclass
class PricedPath:
    commodity: int
    arcs: tuple[int, ...]
    length: float
    reduced_cost: float


def price_paths(
    instance: Instance,
    duals: MasterDuals,
    allowed: Optional[np.ndarray] = None,
    limit_per_commodity: int = 1,
) -> list[PricedPath]:
    """Negative-reduced-cost paths under the given master duals."""
    mask = np.ones(instance.n_arcs, dtype=bool) if allowed is None else np.asarray(allowed, bool)
    if np.any(duals.sigma[mask] > 1e-6):
        raise StructuralError("capacity dual above tolerance")
    out: list[PricedPath] = []
    for k in range(instance.n_commodities):
        lengths = instance.arc_cost(k) - duals.sigma
        for (a, kk), t in duals.tau.items():
            if kk == k:
                lengths = lengths.copy()
                lengths[a] -= t
        if np.any(lengths[mask] < -1e-6):
            raise StructuralError("negative pricing length")
        lengths = np.maximum(lengths, 0.0)
        com = instance.commodities[k]
        threshold = float(duals.rho[k]) - PRICE_TOL
        cands = _k_shortest(
            instance, lengths, com.origin, com.destination, mask, limit_per_commodity, threshold
        )
        for dist, arcs in cands:
            out.append(PricedPath(k, arcs, dist, dist - float(duals.rho[k])))
    return out


# ---------------------------------------------------------------------------
# Capacity scaling


@dataclass
class CsLimits:
    max_iter: int = 50
    frac_threshold: Optional[int] = None  # None: < 1% of |A|
    columns_per_round: int = 50
    time_budget: float = np.inf


@dataclass
class ScalingState:
    u_eff: np.ndarray
    lam: float
    iteration: int
    history: list[np.ndarray]
    pruned: frozenset


@dataclass
class CsResult:
    final_frac: np.ndarray
    pool: PathPool
    forcing: list[tuple[int, int]]
    pruned: frozenset
    feasible: list[Solution]
    state: ScalingState
    master_values: list[float]
    stalled: bool = False


def _commodity_connected(instance: Instance, allowed: np.ndarray, k: int) -> bool:
    com = instance.commodities[k]
    seen = {com.origin}
    stack = [com.origin]
    while stack:
        node = stack.pop()
        if node == com.destination:
            return True
        for arc in instance.out_arcs[node]:
            if allowed[arc]:
                head = instance.arcs[arc].head
                if head not in seen:
                    seen.add(head)
                    stack.append(head)
    return com.destination in seen


def capacity_scaling(
    instance: Instance,
    lam: float,
    limits: CsLimits = CsLimits(),
    clock: Optional[WorkClock] = None,
    prune_eps: float = 0.01,
    epoch: float = 0.0,
    trace: Optional[Callable[[str], None]] = None,
) -> CsResult:
    """Iterative capacity smoothing of the path-flow relaxation.

    Effective capacities follow u' = lam * u * y_frac + (1 - lam) * u, arcs
    whose relaxation value collapses below `prune_eps` are pruned (from
    iteration 3 on), and every integral relaxation readout is recorded as a
    feasible solution after a flow re-solve.
    """
    if not (0.0 <= lam <= 1.0):
        raise StructuralError("lambda must lie in [0, 1]")
    clk = clock if clock is not None else WorkClock()
    A = instance.n_arcs
    u = instance.capacity
    u_eff = u.copy()
    allowed = np.ones(A, dtype=bool)
    pool = PathPool()
    forcing: list[tuple[int, int]] = []
    history: list[np.ndarray] = []
    master_values: list[float] = []
    feasible: list[Solution] = []
    stalled = False
    t0 = clk.now()
    deadline = t0 + limits.time_budget
    threshold = (
        limits.frac_threshold
        if limits.frac_threshold is not None
        else int(0.01 * A)
    )

    frac = np.zeros(A)
    iteration = 0
    for iteration in range(1, limits.max_iter + 1):
        master = Master(
            instance, pool, mode="design", allowed=allowed, caps=u_eff,
            forcing=forcing, col_cap=limits.columns_per_round, clock=clk,
            deadline=deadline,
        )
        res = master.solve()
        if res.status != "optimal" or (res.dummy_total > 1e-6 and res.converged):
            stalled = True
            break
        if res.dummy_total > 1e-6:
            # The per-iteration column cap left demand on the dummy columns;
            # keep iterating so the pool accumulates enough paths.
            if clk.now() > deadline:
                break
            continue
        frac = res.y_values.copy()
        history.append(frac.copy())
        master_values.append(res.objective)

        frac_flags = np.minimum(frac, 1.0 - frac) > INT_TOL
        frac_count = int(np.sum(frac_flags & allowed))
        if trace is not None:
            trace(
                f"cs iter={iteration} master={res.objective:.6g} "
                f"frac={frac_count} pruned={int((~allowed).sum())}"
            )

        if frac_count == 0:
            design = (frac > 0.5).astype(np.int8)
            flows = solve_flow_lp(instance, design, clock=clk, pool=PathPool())
            if flows is not None:
                feasible.append(
                    new_solution(instance, design, flows, clk.now() - t0 + epoch, "cs")
                )
            break
        if frac_count <= threshold:
            break
        if clk.now() > deadline:
            break

        u_eff = lam * u * frac + (1.0 - lam) * u
        if iteration >= 3:
            candidates = allowed & (frac < prune_eps)
            if np.any(candidates):
                tentative = allowed & ~candidates
                for k in range(instance.n_commodities):
                    if not _commodity_connected(instance, tentative, k):
                        com = instance.commodities[k]
                        sp = _dijkstra(
                            instance, instance.arc_cost(k), com.origin, com.destination, allowed
                        )
                        if sp is not None:
                            for a in sp[1]:
                                tentative[a] = True
                allowed = tentative

    state = ScalingState(
        u_eff=u_eff, lam=lam, iteration=iteration, history=history,
        pruned=frozenset(np.nonzero(~allowed)[0].tolist()),
    )
    return CsResult(
        final_frac=frac,
        pool=pool,
        forcing=forcing,
        pruned=state.pruned,
        feasible=feasible,
        state=state,
        master_values=master_values,
        stalled=stalled,
    )


# ---------------------------------------------------------------------------
# Reduction and bounds


@dataclass
class ReducedInstance:
    instance: Instance
    mapping: np.ndarray  # reduced arc index -> original arc index
    removed: frozenset
    disconnected: tuple[int, ...]

    @property
    def ok(self) -> bool:
        return not self.disconnected

    def lift(self, design_reduced) -> np.ndarray:
        full = np.zeros(len(self.removed) + len(self.mapping), dtype=np.int8)
        full[self.mapping] = np.asarray(design_reduced, dtype=np.int8)
        return full

    def restrict(self, design_full) -> np.ndarray:
        return np.asarray(design_full)[self.mapping].astype(np.int8)

    def lift_flows(self, flows: FlowSolution) -> FlowSolution:
        lifted = {
            k: [(int(self.mapping[a]), amt) for a, amt in entries]
            for k, entries in flows.flows.items()
        }
        design = np.zeros(len(self.removed) + len(self.mapping))
        design[self.mapping] = flows.design
        return FlowSolution(flows=lifted, design=design, objective=flows.objective)


def build_reduced_instance(instance: Instance, removed) -> ReducedInstance:
    """Delete arcs; report commodities whose origin/destination disconnect."""
    removed_set = frozenset(int(a) for a in removed)
    for a in removed_set:
        if not (0 <= a < instance.n_arcs):
            raise StructuralError(f"removed arc {a} out of range")
    keep = [a for a in range(instance.n_arcs) if a not in removed_set]
    mapping = np.array(keep, dtype=int)
    arcs = [instance.arcs[a] for a in keep]
    table = (
        instance.commodity_costs[:, mapping] if instance.commodity_costs is not None else None
    )
    reduced = Instance(
        instance.node_count, arcs, instance.commodities,
        name=f"{instance.name}@reduced{len(removed_set)}", commodity_costs=table,
    )
    allowed = np.ones(instance.n_arcs, dtype=bool)
    allowed[list(removed_set)] = False
    disconnected = tuple(
        k for k in range(instance.n_commodities)
        if not _commodity_connected(instance, allowed, k)
    )
    return ReducedInstance(reduced, mapping, removed_set, disconnected)


def path_flow_bound(instance: Instance, clock: Optional[WorkClock] = None) -> float:
    """Exact path-flow relaxation value with forcing rows fully separated."""
    master = Master(
        instance, PathPool(), mode="design",
        allowed=np.ones(instance.n_arcs, dtype=bool), clock=clock,
    )
    res = master.solve()
    if res.status != "optimal" or not res.converged:
        raise StructuralError("path-flow relaxation did not converge")
    return res.objective


def arc_flow_lp_value(instance: Instance, clock: Optional[WorkClock] = None) -> float:
    """Arc-flow LP relaxation (capacity rows only), assembled densely.

    Intended for small instances; serves as the weak-relaxation reference.
    """
    K, A, N = instance.n_commodities, instance.n_arcs, instance.node_count
    lp = LinearProgram()
    cons_row = {}
    for k in range(K):
        com = instance.commodities[k]
        for node in range(N):
            rhs = com.demand if node == com.origin else (-com.demand if node == com.destination else 0.0)
            cons_row[(k, node)] = lp.add_row("=", rhs)
    cap_rows = [lp.add_row("<", 0.0) for _ in range(A)]
    for k in range(K):
        cost_k = instance.arc_cost(k)
        d = float(instance.demand[k])
        for a, arc in enumerate(instance.arcs):
            entries = [
                (cons_row[(k, arc.tail)], 1.0),
                (cons_row[(k, arc.head)], -1.0),
                (cap_rows[a], 1.0),
            ]
            lp.add_column(float(cost_k[a]), entries, 0.0, d)
    for a, arc in enumerate(instance.arcs):
        lp.add_column(float(instance.fixed_cost[a]), [(cap_rows[a], -float(arc.capacity))], 0.0, 1.0)
    res = solve_lp(lp, clock=clock)
    if res.status != OPTIMAL:
        raise StructuralError(f"arc-flow relaxation status {res.status}")
    return res.objective
