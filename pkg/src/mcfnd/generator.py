"""Seeded pseudo-random instance generator (grid and circular topologies).

Grid instances place nodes on an r x c lattice with arcs in both directions
between 4-neighbours. Circular instances use a bidirectional ring plus a
number of random bidirectional chords. Capacities are scaled so that total
network capacity over total demand lands inside the requested ratio range;
every generated instance is guaranteed feasible (capacity is added until the
all-open flow LP is feasible).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .model import Arc, Commodity, Instance, SpecError
from .rng import Rng, derive_seed

TIGHT_RATIO = (1.1, 1.5)
LOOSE_RATIO = (2.0, 5.0)

_DEMAND_RANGE = (5.0, 15.0)


@dataclass(frozen=True)
class GenSpec:
    topology: str = "grid"  # grid | circular
    rows: int = 6
    cols: int = 6
    ring_size: int = 12
    chords: int = 4
    commodity_count: int = 20
    cost_range: tuple[float, float] = (1.0, 10.0)
    fixed_range: tuple[float, float] = (20.0, 120.0)
    capacity_ratio_range: tuple[float, float] = LOOSE_RATIO
    seed: int = 0

    def node_count(self) -> int:
        if self.topology == "grid":
            return self.rows * self.cols
        return self.ring_size

    def validate(self) -> None:
        if self.topology not in ("grid", "circular"):
            raise SpecError(f"unknown topology {self.topology!r}")
        if self.topology == "grid":
            if self.rows < 2 or self.cols < 1 or self.rows * self.cols < 2:
                raise SpecError("grid needs at least 2 nodes with rows >= 2")
            if self.rows * self.cols == self.rows or (self.rows == 1 and self.cols == 1):
                raise SpecError("degenerate grid")
        else:
            if self.ring_size < 3:
                raise SpecError("ring needs at least 3 nodes")
            if self.chords < 0:
                raise SpecError("negative chord count")
        n = self.node_count()
        if self.commodity_count < 1:
            raise SpecError("commodity_count must be positive")
        if self.commodity_count > n * (n - 1):
            raise SpecError("commodity_count exceeds available node pairs")
        for lo, hi, tag in (
            (*self.cost_range, "cost_range"),
            (*self.fixed_range, "fixed_range"),
            (*self.capacity_ratio_range, "capacity_ratio_range"),
        ):
            if lo < 0 or hi < lo:
                raise SpecError(f"bad {tag}")


def _half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def scale_spec(spec: GenSpec, factor: float) -> GenSpec:
    """Scale node and commodity counts by `factor` (half-up rounding).

    For grids only the row count is scaled; for rings the ring size. The seed
    is re-derived deterministically so scaled sets are independent streams.
    """
    if factor <= 0:
        raise SpecError("scale factor must be positive")
    new = replace(
        spec,
        rows=_half_up(spec.rows * factor) if spec.topology == "grid" else spec.rows,
        ring_size=_half_up(spec.ring_size * factor) if spec.topology == "circular" else spec.ring_size,
        commodity_count=_half_up(spec.commodity_count * factor),
        seed=derive_seed(spec.seed, f"scale:{factor:.6g}"),
    )
    new.validate()
    return new


def _grid_arcs(rows: int, cols: int) -> list[tuple[int, int]]:
    pairs = []
    for r in range(rows):
        for c in range(cols):
            node = r * cols + c
            if c + 1 < cols:
                pairs.append((node, node + 1))
            if r + 1 < rows:
                pairs.append((node, node + cols))
    arcs = []
    for a, b in pairs:
        arcs.append((a, b))
        arcs.append((b, a))
    return arcs


def _circular_arcs(ring_size: int, chords: int, rng: Rng) -> list[tuple[int, int]]:
    arcs = []
    for i in range(ring_size):
        j = (i + 1) % ring_size
        arcs.append((i, j))
        arcs.append((j, i))
    existing = set(arcs)
    added = 0
    attempts = 0
    while added < chords and attempts < 200 * max(1, chords):
        attempts += 1
        i = rng.randint(0, ring_size - 1)
        j = rng.randint(0, ring_size - 1)
        if i == j or (i, j) in existing:
            continue
        arcs.append((i, j))
        arcs.append((j, i))
        existing.add((i, j))
        existing.add((j, i))
        added += 1
    if added < chords:
        raise SpecError("cannot place requested chords without duplicates")
    return arcs


def generate(spec: GenSpec) -> Instance:
    """Deterministically generate a feasible instance from a spec."""
    spec.validate()
    rng = Rng(derive_seed(spec.seed, "generate"))

    if spec.topology == "grid":
        pairs = _grid_arcs(spec.rows, spec.cols)
        name = f"grid{spec.rows}x{spec.cols}_k{spec.commodity_count}_s{spec.seed}"
    else:
        pairs = _circular_arcs(spec.ring_size, spec.chords, rng.spawn("chords"))
        name = f"ring{spec.ring_size}c{spec.chords}_k{spec.commodity_count}_s{spec.seed}"

    n_nodes = spec.node_count()
    n_arcs = len(pairs)
    if n_arcs == 0:
        raise SpecError("spec produces no arcs")

    costs = np.array([rng.uniform(*spec.cost_range) for _ in range(n_arcs)])
    fixed = np.array([rng.uniform(*spec.fixed_range) for _ in range(n_arcs)])

    # Distinct origin/destination pairs.
    pair_rng = rng.spawn("commodities")
    chosen: list[tuple[int, int]] = []
    seen = set()
    while len(chosen) < spec.commodity_count:
        o = pair_rng.randint(0, n_nodes - 1)
        d = pair_rng.randint(0, n_nodes - 1)
        if o == d or (o, d) in seen:
            continue
        seen.add((o, d))
        chosen.append((o, d))
    demands = np.array([rng.uniform(*_DEMAND_RANGE) for _ in chosen])

    # Raw capacities, then a global rescale to hit the target capacity ratio.
    raw = np.array([rng.uniform(0.5, 1.5) for _ in range(n_arcs)])
    target_ratio = rng.uniform(*spec.capacity_ratio_range)
    total_demand = float(demands.sum())
    capacity = raw * (target_ratio * total_demand / raw.sum())

    commodities = [Commodity(o, d, dem) for (o, d), dem in zip(chosen, demands)]

    # Guarantee per-commodity cut capacity at the origin and destination.
    out_idx: list[list[int]] = [[] for _ in range(n_nodes)]
    in_idx: list[list[int]] = [[] for _ in range(n_nodes)]
    for i, (t, h) in enumerate(pairs):
        out_idx[t].append(i)
        in_idx[h].append(i)
    for com in commodities:
        for idx_set in (out_idx[com.origin], in_idx[com.destination]):
            have = capacity[idx_set].sum()
            if have < com.demand * 1.05:
                bump = (com.demand * 1.05 - have) / len(idx_set) + 1e-9
                capacity[idx_set] += bump

    def build() -> Instance:
        arcs = [
            Arc(t, h, float(c), float(u), float(f))
            for (t, h), c, u, f in zip(pairs, costs, capacity, fixed)
        ]
        return Instance(n_nodes, arcs, commodities, name=name)

    # Both topologies are strongly connected by construction, but shared
    # capacity can still starve the joint flow; widen until the all-open LP
    # is feasible.
    from .relaxation import solve_flow_lp

    instance = build()
    for _ in range(40):
        if solve_flow_lp(instance, np.ones(n_arcs, dtype=np.int8)) is not None:
            return instance
        capacity *= 1.3
        instance = build()
    raise SpecError("could not reach a feasible capacity profile")
