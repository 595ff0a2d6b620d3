"""Branch-and-bound over binary design variables.

Node relaxations are path-flow masters (column generation with lazily
separated forcing rows) sharing one path pool across the tree; pruning uses
the Lagrangian completion bound, which stays valid even when a node's
pricing loop is cut short. Supports side rows over the design (neighbourhood
cuts, pseudo-cuts, local-branching balls, anything linear), fixed variables,
strict objective cutoffs, warm starts, node/time limits, and a seeded dive
direction that plays the diversification role a commercial solver gets from
its heuristic/seed parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .clock import NODE_OVERHEAD, WorkClock
from .model import (
    Instance,
    LinearRow,
    Solution,
    StructuralError,
    new_solution,
)
from .relaxation import Master, PathPool, solve_flow_lp
from .rng import Rng, derive_seed

INT_TOL = 1e-6
PRUNE_REL = 1e-9

OPTIMAL = "optimal"
FEASIBLE_LIMIT = "feasible_limit"
INFEASIBLE = "infeasible"
NO_BETTER = "no_better_than_cutoff"


@dataclass
class MipLimits:
    time: float = np.inf
    nodes: Optional[int] = None


@dataclass
class MipProblem:
    instance: Instance
    extra_rows: tuple[LinearRow, ...] = ()
    fixed: dict[int, int] = field(default_factory=dict)
    cutoff: Optional[float] = None
    warm: Optional[np.ndarray] = None
    hint: Optional[np.ndarray] = None
    limits: MipLimits = field(default_factory=MipLimits)
    seed: int = 0
    dive_bias: float = 0.5

    def validate(self) -> None:
        A = self.instance.n_arcs
        for row in self.extra_rows:
            for a, _ in row.coeffs:
                if not (0 <= a < A):
                    raise StructuralError(f"row references arc {a} out of range")
        for a, v in self.fixed.items():
            if not (0 <= a < A):
                raise StructuralError(f"fixed arc {a} out of range")
            if v not in (0, 1):
                raise StructuralError("fixed values must be binary")
        if not (0.0 <= self.dive_bias <= 1.0):
            raise StructuralError("dive_bias must lie in [0, 1]")


@dataclass
class MipResult:
    status: str
    best: Optional[Solution]
    incumbents: list[Solution]
    nodes: int
    wall_time: float
    trajectory: list[tuple[float, float]]


def add_neighbourhood_rows(p: MipProblem, incumbent, m_size: int) -> MipProblem:
    """Katayama-style neighbourhood: close at least one incumbent arc, at most m_size."""
    if m_size < 0:
        raise StructuralError("neighbourhood size must be nonnegative")
    inc = np.asarray(incumbent)
    open_arcs = [int(a) for a in np.nonzero(inc == 1)[0]]
    count = len(open_arcs)
    coeffs = tuple((a, 1.0) for a in open_arcs)
    rows = (
        LinearRow(coeffs, "<", count - 1),
        LinearRow(coeffs, ">", count - m_size),
    )
    return replace(p, extra_rows=p.extra_rows + rows)


def add_local_branching_row(p: MipProblem, reference, beta: float) -> MipProblem:
    """Hamming ball of radius beta around the reference design."""
    if beta < 0:
        raise StructuralError("beta must be nonnegative")
    ref = np.asarray(reference)
    coeffs = []
    ones = 0
    for a in range(ref.shape[0]):
        if ref[a] >= 0.5:
            coeffs.append((a, -1.0))
            ones += 1
        else:
            coeffs.append((a, 1.0))
    row = LinearRow(tuple(coeffs), "<", float(beta) - ones)
    return replace(p, extra_rows=p.extra_rows + (row,))


def pseudo_cut_row(a0, a1) -> LinearRow:
    set0, set1 = set(int(a) for a in a0), set(int(a) for a in a1)
    if set0 & set1:
        raise StructuralError("pseudo-cut index sets must be disjoint")
    if not set0 and not set1:
        raise StructuralError("pseudo-cut needs at least one arc")
    coeffs = tuple((a, 1.0) for a in sorted(set0)) + tuple((a, -1.0) for a in sorted(set1))
    return LinearRow(coeffs, ">", 1.0 - len(set1))


def add_pseudo_cut(p: MipProblem, a0, a1) -> MipProblem:
    """Exclude designs that agree with the relaxation on the index sets."""
    return replace(p, extra_rows=p.extra_rows + (pseudo_cut_row(a0, a1),))


def _rows_ok(rows: tuple[LinearRow, ...], design) -> bool:
    return all(row.satisfied_by(design, tol=1e-6) for row in rows)


@dataclass
class _Node:
    y_lo: np.ndarray
    y_hi: np.ndarray
    bound: float
    depth: int


def solve_mip(p: MipProblem, clock: Optional[WorkClock] = None) -> MipResult:
    """Exact on exhaustion, anytime under limits, deterministic per seed."""
    p.validate()
    inst = p.instance
    A = inst.n_arcs
    clk = clock if clock is not None else WorkClock()
    t0 = clk.now()
    deadline = t0 + p.limits.time
    rng = Rng(derive_seed(p.seed, "bnb"))

    pool = PathPool()
    forcing: list[tuple[int, int]] = []

    cutoff_thr = (
        p.cutoff - PRUNE_REL * max(1.0, abs(p.cutoff)) if p.cutoff is not None else np.inf
    )
    incumbent: Optional[Solution] = None
    incumbents: list[Solution] = []
    trajectory: list[tuple[float, float]] = []
    cutoff_pruned = False
    tried_heuristic: set[bytes] = set()

    def threshold() -> float:
        inc_thr = (
            incumbent.objective - PRUNE_REL * max(1.0, abs(incumbent.objective))
            if incumbent is not None
            else np.inf
        )
        return min(cutoff_thr, inc_thr)

    def accept(design: np.ndarray, provenance: str) -> bool:
        nonlocal incumbent
        flows = solve_flow_lp(inst, design, clock=clk, pool=PathPool())
        if flows is None:
            return False
        sol = new_solution(inst, design, flows, clk.now() - t0, provenance)
        if sol.objective >= threshold():
            return False
        incumbent = sol
        incumbents.append(sol)
        trajectory.append((sol.wall_time, sol.objective))
        return True

    # Warm start: only admissible when it honours fixings, rows and cutoff.
    if p.warm is not None:
        warm = np.asarray(p.warm, dtype=np.int8)
        fix_ok = all(warm[a] == v for a, v in p.fixed.items())
        if fix_ok and _rows_ok(p.extra_rows, warm):
            accept(warm, "warm")

    y_lo = np.zeros(A)
    y_hi = np.ones(A)
    for a, v in p.fixed.items():
        y_lo[a] = y_hi[a] = float(v)

    stack = [_Node(y_lo, y_hi, -np.inf, 0)]
    nodes = 0
    hit_limit = False

    while stack:
        if clk.now() >= deadline:
            hit_limit = True
            break
        if p.limits.nodes is not None and nodes >= p.limits.nodes:
            hit_limit = True
            break
        node = stack.pop()
        thr = threshold()
        if node.bound >= thr:
            if p.cutoff is not None and node.bound >= cutoff_thr:
                cutoff_pruned = True
            continue

        nodes += 1
        clk.charge(NODE_OVERHEAD)
        master = Master(
            inst, pool, mode="design", allowed=np.ones(A, dtype=bool),
            y_lo=node.y_lo, y_hi=node.y_hi, extra_rows=p.extra_rows,
            forcing=forcing, clock=clk, deadline=deadline,
        )
        res = master.solve()
        if res.status == "infeasible":
            continue
        if res.status != "optimal":
            hit_limit = True
            break
        if res.dummy_total > 1e-6 and res.converged:
            continue  # no feasible flow under these fixings
        if res.bound >= thr:
            if p.cutoff is not None and res.bound >= cutoff_thr:
                cutoff_pruned = True
            continue

        y = res.y_values
        frac = np.minimum(y, 1.0 - y)
        frac[node.y_hi <= 0.0] = 0.0
        frac[node.y_lo >= 1.0] = 0.0
        fractional = np.nonzero(frac > INT_TOL)[0]

        if fractional.size == 0:
            if res.dummy_total > 1e-6:
                continue
            design = (y > 0.5).astype(np.int8)
            design[node.y_lo >= 1.0] = 1
            design[node.y_hi <= 0.0] = 0
            accept(design, "bnb")
            continue

        # Rounding heuristic: open every arc carrying flow plus forced arcs.
        if res.dummy_total <= 1e-6:
            h_design = ((res.arc_flows > 1e-7) | (node.y_lo >= 1.0)).astype(np.int8)
            key = h_design.tobytes()
            if key not in tried_heuristic:
                tried_heuristic.add(key)
                fix_ok = all(h_design[a] == v for a, v in p.fixed.items())
                if fix_ok and _rows_ok(p.extra_rows, h_design):
                    accept(h_design, "bnb-heur")

        # Branch on the most fractional variable; ties by larger fixed cost,
        # then lowest index.
        order = sorted(
            (int(a) for a in fractional),
            key=lambda a: (-frac[a], -inst.fixed_cost[a], a),
        )
        branch = order[0]
        if p.hint is not None:
            dive_up = bool(np.asarray(p.hint)[branch] >= 0.5)
        else:
            dive_up = rng.uniform() < p.dive_bias

        lo_up, hi_up = node.y_lo.copy(), node.y_hi.copy()
        lo_up[branch] = 1.0
        lo_dn, hi_dn = node.y_lo.copy(), node.y_hi.copy()
        hi_dn[branch] = 0.0
        up = _Node(lo_up, hi_up, res.bound, node.depth + 1)
        dn = _Node(lo_dn, hi_dn, res.bound, node.depth + 1)
        if dive_up:
            stack.append(dn)
            stack.append(up)
        else:
            stack.append(up)
            stack.append(dn)

    if hit_limit:
        status = FEASIBLE_LIMIT
    elif incumbent is not None:
        status = OPTIMAL
    elif p.cutoff is not None and cutoff_pruned:
        status = NO_BETTER
    else:
        status = INFEASIBLE

    return MipResult(
        status=status,
        best=incumbent,
        incumbents=incumbents,
        nodes=nodes,
        wall_time=clk.now() - t0,
        trajectory=trajectory,
    )
