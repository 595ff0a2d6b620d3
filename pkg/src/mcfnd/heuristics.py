"""Search heuristics: the capacity-scaling + MIP-neighbourhood local search,
the RSS and LSFS sampling routines, and the prediction-integration
strategies (graph reduction, local branching, in-search cut).

Local search alternates between a relaxation-driven reduction phase and a
loop of neighbourhood MIPs around the incumbent: each MIP must strictly
improve (objective cutoff), an improvement restores the neighbourhood size,
a timeout halves it, and a proven-empty neighbourhood stops the run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .bnb import (
    FEASIBLE_LIMIT,
    INFEASIBLE,
    NO_BETTER,
    MipLimits,
    MipProblem,
    add_local_branching_row,
    add_neighbourhood_rows,
    pseudo_cut_row,
    solve_mip,
)
from .clock import WorkClock
from .model import (
    Instance,
    LinearRow,
    SampleSet,
    Solution,
    StructuralError,
    new_solution,
)
from .relaxation import (
    CsLimits,
    PathPool,
    _dijkstra,
    build_reduced_instance,
    capacity_scaling,
    initial_slope_state,
    slope_scaling_iterate,
    solve_flow_lp,
)
from .rng import Rng, derive_seed

SS_PLATEAU = 3
SS_MAX_ITER = 20
RSS_BIG_FRACTION = 0.01


@dataclass
class LsConfig:
    lam: float = 0.05
    m0: int = 20
    per_mip_s: float = 20.0
    budget_s: float = 120.0
    columns_per_round: int = 50
    prune_eps: float = 0.01
    cs_max_iter: int = 50
    seed: int = 0
    dive_bias: float = 0.5

    def validate(self) -> None:
        if not (0.0 <= self.lam <= 1.0):
            raise StructuralError("lambda must lie in [0, 1]")
        if self.m0 < 0 or self.per_mip_s <= 0 or self.budget_s < 0:
            raise StructuralError("bad local-search limits")


@dataclass
class LsResult:
    best: Optional[Solution]
    trajectory: list[tuple[float, float]]
    samples: SampleSet
    status: str  # ok | failed | infeasible


@dataclass
class SampleRun:
    routine: str
    samples: SampleSet
    wall: float
    trajectory: list[tuple[float, float]] = field(default_factory=list)
    mip_calls: int = 0


class _Tracker:
    """Incumbent bookkeeping with a strictly improving trajectory."""

    def __init__(self) -> None:
        self.best: Optional[Solution] = None
        self.trajectory: list[tuple[float, float]] = []

    def record(self, sol: Solution) -> bool:
        if self.best is None or sol.objective < self.best.objective - 1e-9:
            self.best = sol
            self.trajectory.append((sol.wall_time, sol.objective))
            return True
        return False


def _rescored(instance: Instance, design: np.ndarray, wall: float, provenance: str,
              clock: Optional[WorkClock]) -> Optional[Solution]:
    flows = solve_flow_lp(instance, design, clock=clock, pool=PathPool())
    if flows is None:
        return None
    return new_solution(instance, design, flows, wall, provenance)


def ls_star(
    instance: Instance,
    cfg: LsConfig,
    initial: Optional[Solution] = None,
    reduction_override=None,
    clock: Optional[WorkClock] = None,
    mip_extra_rows: tuple[LinearRow, ...] = (),
    mip_hint: Optional[np.ndarray] = None,
    trace=None,
) -> LsResult:
    """Reduction phase (capacity scaling, or a supplied removal set) followed
    by strictly improving MIP neighbourhood search with halving size."""
    cfg.validate()
    clk = clock if clock is not None else WorkClock()
    t0 = clk.now()
    deadline = t0 + cfg.budget_s
    samples = SampleSet()
    tracker = _Tracker()
    A = instance.n_arcs

    support_design: Optional[np.ndarray] = None
    if reduction_override is not None:
        removed = set(int(a) for a in reduction_override)
    else:
        cs = capacity_scaling(
            instance,
            cfg.lam,
            CsLimits(
                max_iter=cfg.cs_max_iter,
                columns_per_round=cfg.columns_per_round,
                time_budget=max(0.0, deadline - clk.now()),
            ),
            clock=clk,
            prune_eps=cfg.prune_eps,
            epoch=clk.now() - t0,
            trace=trace,
        )
        removed = set(cs.pruned)
        for frac in cs.state.history:
            samples.add_fractional(frac)
        for sol in cs.feasible:
            samples.add_feasible(sol)
            tracker.record(sol)
        if cs.state.history:
            support_design = (cs.final_frac > 1e-6).astype(np.int8)

    if initial is not None:
        removed -= set(int(a) for a in np.nonzero(initial.design == 1)[0])
    if tracker.best is not None:
        removed -= set(int(a) for a in np.nonzero(tracker.best.design == 1)[0])

    red = build_reduced_instance(instance, removed)
    if not red.ok:
        # Repair: re-add arcs along a cheapest path of each cut-off commodity.
        for k in red.disconnected:
            com = instance.commodities[k]
            sp = _dijkstra(
                instance, instance.arc_cost(k), com.origin, com.destination,
                np.ones(A, dtype=bool),
            )
            if sp is not None:
                removed -= set(sp[1])
        red = build_reduced_instance(instance, removed)
    if not red.ok:
        removed = set()
        red = build_reduced_instance(instance, removed)

    # Incumbent: supplied initial, then relaxation support, then everything open.
    if initial is not None:
        tracker.record(initial)
    if tracker.best is None and support_design is not None:
        support_design[list(removed)] = 0
        sol = _rescored(instance, support_design, clk.now() - t0, "ls-init", clk)
        if sol is not None:
            samples.add_feasible(sol)
            tracker.record(sol)
    if tracker.best is None:
        open_kept = red.lift(np.ones(red.instance.n_arcs, dtype=np.int8))
        sol = _rescored(instance, open_kept, clk.now() - t0, "ls-init", clk)
        if sol is None and removed:
            removed = set()
            red = build_reduced_instance(instance, removed)
            sol = _rescored(instance, np.ones(A, dtype=np.int8), clk.now() - t0, "ls-init", clk)
        if sol is not None:
            samples.add_feasible(sol)
            tracker.record(sol)
    if tracker.best is None:
        return LsResult(None, tracker.trajectory, samples, "failed")

    reduced_rows = tuple(
        row.restricted({int(old): new for new, old in enumerate(red.mapping)})
        for row in mip_extra_rows
    )
    reduced_hint = red.restrict(mip_hint) if mip_hint is not None else None

    m_size = cfg.m0
    iteration = 0
    while m_size > 0 and clk.now() < deadline:
        incumbent_r = red.restrict(tracker.best.design)
        p = MipProblem(
            red.instance,
            extra_rows=reduced_rows,
            cutoff=tracker.best.objective,
            hint=reduced_hint,
            limits=MipLimits(time=min(cfg.per_mip_s, deadline - clk.now())),
            seed=derive_seed(cfg.seed, f"ls-mip-{iteration}"),
            dive_bias=cfg.dive_bias,
        )
        p = add_neighbourhood_rows(p, incumbent_r, m_size)
        res = solve_mip(p, clk)
        iteration += 1

        improved = False
        for sol in res.incumbents:
            lifted = red.lift(sol.design)
            full = new_solution(
                instance, lifted, red.lift_flows(sol.flows), clk.now() - t0, "ls"
            )
            samples.add_feasible(full)
            if tracker.record(full):
                improved = True
        if improved:
            m_size = cfg.m0
        elif res.status in (NO_BETTER, INFEASIBLE):
            break
        else:
            m_size //= 2

    return LsResult(tracker.best, tracker.trajectory, samples, "ok")


def rss_sample(
    instance: Instance,
    budget_s: float,
    per_iter_s: float,
    seed: int,
    clock: Optional[WorkClock] = None,
) -> SampleRun:
    """Randomized slope-scaling sampler.

    Each iteration solves the design relaxation of the current model (with
    all accumulated pseudo-cuts), freezes the arcs whose relaxation value is
    integral, runs slope scaling to a plateau under those frozen sets, then
    solves the restricted MIP with a random seed and dive bias (1% of the
    free arcs get a prohibitive opening cost). The pseudo-cut added at the
    end steers the next relaxation away from the same index sets.
    """
    if budget_s <= 0 or per_iter_s <= 0:
        raise StructuralError("budgets must be positive")
    clk = clock if clock is not None else WorkClock()
    t0 = clk.now()
    deadline = t0 + budget_s
    rng = Rng(derive_seed(seed, "rss"))
    samples = SampleSet()
    tracker = _Tracker()
    state = initial_slope_state(instance)
    cuts: list[LinearRow] = []
    pool = PathPool()
    from .relaxation import Master

    # Opening deterrent for the randomly penalized arcs: larger than any
    # plausible objective, small enough to keep LP duals well scaled.
    routing_bound = float(
        instance.cost_matrix().max() * instance.node_count * instance.demand.sum()
    )
    big = 100.0 * (routing_bound + float(instance.fixed_cost.sum()))
    max_mips = math.ceil(budget_s / per_iter_s)

    mips = 0
    while clk.now() < deadline and mips < max_mips:
        relaxation = Master(
            instance, pool, mode="design",
            allowed=np.ones(instance.n_arcs, dtype=bool),
            extra_rows=tuple(cuts), clock=clk, deadline=deadline,
        ).solve()
        if relaxation.status != "optimal" or relaxation.dummy_total > 1e-6:
            break  # accumulated cuts exhausted the relaxation
        y_tilde = relaxation.y_values
        samples.add_fractional(np.clip(y_tilde, 0.0, 1.0))
        a0 = sorted(int(a) for a in np.nonzero(y_tilde <= 1e-6)[0])
        a1 = sorted(int(a) for a in np.nonzero(y_tilde >= 1.0 - 1e-6)[0])
        state = replace(state, a0=frozenset(a0), a1=frozenset(a1))

        prev_key = None
        stable = 0
        flows = None
        y_ss = None
        for _ in range(SS_MAX_ITER):
            out = slope_scaling_iterate(instance, state, clk, pool)
            if out is None:
                break
            flows, y_ss, state = out
            samples.add_fractional(flows.design)
            if not samples.has_design(y_ss):
                sol = _rescored(instance, y_ss, clk.now() - t0, "rss", clk)
                if sol is not None:
                    samples.add_feasible(sol)
                    tracker.record(sol)
            key = y_ss.tobytes()
            stable = stable + 1 if key == prev_key else 1
            prev_key = key
            if stable >= SS_PLATEAU or clk.now() >= deadline:
                break
        if flows is None or y_ss is None:
            break

        free = sorted(set(range(instance.n_arcs)) - set(a0) - set(a1))

        picks = rng.sample(free, math.ceil(RSS_BIG_FRACTION * len(free))) if free else []
        if picks:
            fixed_cost = instance.fixed_cost.copy()
            fixed_cost[picks] = big
            from .model import Arc

            arcs = [
                Arc(arc.tail, arc.head, arc.cost, arc.capacity, float(fixed_cost[i]))
                for i, arc in enumerate(instance.arcs)
            ]
            mip_inst = Instance(
                instance.node_count, arcs, instance.commodities,
                name=instance.name, commodity_costs=instance.commodity_costs,
            )
        else:
            mip_inst = instance

        fixed = {a: 0 for a in a0}
        fixed.update({a: 1 for a in a1})
        warm = y_ss.copy()
        warm[a1] = 1
        warm[a0] = 0
        p = MipProblem(
            mip_inst,
            extra_rows=tuple(cuts),
            fixed=fixed,
            warm=warm,
            limits=MipLimits(time=min(per_iter_s, deadline - clk.now())),
            seed=rng.next_u64(),
            dive_bias=rng.uniform(),
        )
        res = solve_mip(p, clk)
        mips += 1
        for sol in res.incumbents:
            if samples.has_design(sol.design):
                continue
            rescored = _rescored(instance, sol.design, clk.now() - t0, "rss", clk)
            if rescored is not None:
                samples.add_feasible(rescored)
                tracker.record(rescored)

        if a0 or a1:
            cuts.append(pseudo_cut_row(a0, a1))

    return SampleRun("rss", samples, clk.now() - t0, tracker.trajectory, mips)


def lsfs_sample(
    instance: Instance,
    budget_s: float,
    per_iter_s: float,
    columns: int,
    seed: int,
    clock: Optional[WorkClock] = None,
) -> SampleRun:
    """Local-search fast sampling: the local search itself, run with few
    generated columns so the scaling phase stays cheap."""
    clk = clock if clock is not None else WorkClock()
    t0 = clk.now()
    cfg = LsConfig(
        per_mip_s=per_iter_s, budget_s=budget_s, columns_per_round=columns, seed=seed
    )
    res = ls_star(instance, cfg, clock=clk)
    return SampleRun("lsfs", res.samples, clk.now() - t0, res.trajectory)


def lsr_removal_set(prediction: np.ndarray, best_sample: Solution) -> list[int]:
    """Arcs to delete: predicted removals minus the best sample's open arcs."""
    pred = np.asarray(prediction, dtype=np.int8)
    removal = set(int(a) for a in np.nonzero(pred == 1)[0])
    removal -= set(int(a) for a in np.nonzero(best_sample.design == 1)[0])
    return sorted(removal)


def lsr(
    instance: Instance,
    prediction: np.ndarray,
    best_sample: Solution,
    cfg: LsConfig,
    clock: Optional[WorkClock] = None,
) -> LsResult:
    """Reduce the graph by the prediction (1 = remove), repaired so that every
    arc open in the best sampled solution stays, then local-search without
    the scaling phase."""
    pred = np.asarray(prediction, dtype=np.int8)
    if pred.shape[0] != instance.n_arcs:
        raise StructuralError("prediction length mismatch")
    removal = lsr_removal_set(pred, best_sample)
    return ls_star(
        instance, cfg, initial=best_sample, reduction_override=removal, clock=clock
    )


def local_branching_radius(n_arcs: int, respect_fraction: float) -> int:
    if not (0.0 < respect_fraction <= 1.0):
        raise StructuralError("respect_fraction must lie in (0, 1]")
    return int(math.floor((1.0 - respect_fraction) * n_arcs + 1e-9))


def lbh(
    instance: Instance,
    reference: np.ndarray,
    best_sample: Optional[Solution],
    respect_fraction: float,
    cfg: LsConfig,
    clock: Optional[WorkClock] = None,
) -> LsResult:
    """One MIP on the full instance inside a Hamming ball around a reference
    design, warm-started at the best sample, branching hints toward the
    reference. Callers holding a removal prediction pass its complement."""
    clk = clock if clock is not None else WorkClock()
    t0 = clk.now()
    beta = local_branching_radius(instance.n_arcs, respect_fraction)
    p = MipProblem(
        instance,
        warm=best_sample.design if best_sample is not None else None,
        hint=np.asarray(reference),
        limits=MipLimits(time=cfg.budget_s),
        seed=derive_seed(cfg.seed, "lbh"),
        dive_bias=cfg.dive_bias,
    )
    p = add_local_branching_row(p, reference, beta)
    res = solve_mip(p, clk)
    samples = SampleSet()
    tracker = _Tracker()
    for sol in res.incumbents:
        stamped = Solution(sol.design, sol.flows, sol.objective, sol.wall_time, "lbh")
        samples.add_feasible(stamped)
        tracker.record(stamped)
    status = "ok" if tracker.best is not None else ("infeasible" if res.status in (INFEASIBLE, NO_BETTER) else "failed")
    return LsResult(tracker.best, tracker.trajectory, samples, status)


def lswsh(
    instance: Instance,
    reference: np.ndarray,
    best_sample: Optional[Solution],
    respect_fraction: float,
    cfg: LsConfig,
    clock: Optional[WorkClock] = None,
) -> LsResult:
    """The local search with the local-branching cut and hints installed in
    every neighbourhood MIP. The reference design may be infeasible in the
    reduced problem; the run proceeds regardless."""
    beta = local_branching_radius(instance.n_arcs, respect_fraction)
    pred = np.asarray(reference)
    coeffs = []
    ones = 0
    for a in range(pred.shape[0]):
        if pred[a] >= 0.5:
            coeffs.append((a, -1.0))
            ones += 1
        else:
            coeffs.append((a, 1.0))
    lb_row = LinearRow(tuple(coeffs), "<", float(beta) - ones)
    return ls_star(
        instance,
        cfg,
        initial=best_sample,
        clock=clock,
        mip_extra_rows=(lb_row,),
        mip_hint=pred,
    )
