"""Core data types for capacitated fixed-charge network design.

An instance is a directed graph with per-arc capacity, variable cost and
fixed (opening) cost, plus a list of commodities, each an origin/destination
pair with a demand that must be routed. A design chooses which arcs to open;
flows route the commodities over open arcs within capacities. The objective
is routing cost plus opening cost.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np


class StructuralError(ValueError):
    """Raised when inputs violate a structural contract (dimension, index range)."""


class DataFormatError(ValueError):
    """Raised on malformed or inconsistent files."""


class SpecError(ValueError):
    """Raised when a generator spec cannot be satisfied."""


@dataclass(frozen=True)
class Arc:
    tail: int
    head: int
    cost: float
    capacity: float
    fixed_cost: float


@dataclass(frozen=True)
class Commodity:
    origin: int
    destination: int
    demand: float


class Instance:
    """Immutable problem instance.

    Variable costs are per-arc by default; an optional per-commodity table
    (shape K x A) overrides them, covering both cost conventions found in
    the literature.
    """

    def __init__(
        self,
        node_count: int,
        arcs: Iterable[Arc],
        commodities: Iterable[Commodity],
        name: str = "unnamed",
        commodity_costs: Optional[np.ndarray] = None,
    ):
        self.node_count = int(node_count)
        self.arcs = tuple(arcs)
        self.commodities = tuple(commodities)
        self.name = name
        self._validate()

        self.capacity = np.array([a.capacity for a in self.arcs], dtype=float)
        self.fixed_cost = np.array([a.fixed_cost for a in self.arcs], dtype=float)
        self.base_cost = np.array([a.cost for a in self.arcs], dtype=float)
        if commodity_costs is not None:
            table = np.asarray(commodity_costs, dtype=float)
            if table.shape != (len(self.commodities), len(self.arcs)):
                raise StructuralError("commodity cost table shape mismatch")
            if np.any(table < 0):
                raise StructuralError("negative commodity cost")
            self.commodity_costs: Optional[np.ndarray] = table
        else:
            self.commodity_costs = None
        self.demand = np.array([k.demand for k in self.commodities], dtype=float)

        # Adjacency caches: arc indices leaving / entering each node.
        out_arcs: list[list[int]] = [[] for _ in range(self.node_count)]
        in_arcs: list[list[int]] = [[] for _ in range(self.node_count)]
        for idx, a in enumerate(self.arcs):
            out_arcs[a.tail].append(idx)
            in_arcs[a.head].append(idx)
        self.out_arcs = tuple(tuple(v) for v in out_arcs)
        self.in_arcs = tuple(tuple(v) for v in in_arcs)

    def _validate(self) -> None:
        if self.node_count <= 0:
            raise StructuralError("node_count must be positive")
        for i, a in enumerate(self.arcs):
            if not (0 <= a.tail < self.node_count and 0 <= a.head < self.node_count):
                raise StructuralError(f"arc {i}: node index out of range")
            if a.tail == a.head:
                raise StructuralError(f"arc {i}: self-loop")
            if a.capacity <= 0:
                raise StructuralError(f"arc {i}: capacity must be positive")
            if a.fixed_cost < 0 or a.cost < 0:
                raise StructuralError(f"arc {i}: negative cost")
        for k, c in enumerate(self.commodities):
            if not (0 <= c.origin < self.node_count and 0 <= c.destination < self.node_count):
                raise StructuralError(f"commodity {k}: node index out of range")
            if c.origin == c.destination:
                raise StructuralError(f"commodity {k}: origin equals destination")
            if c.demand <= 0:
                raise StructuralError(f"commodity {k}: demand must be positive")

    @property
    def n_arcs(self) -> int:
        return len(self.arcs)

    @property
    def n_commodities(self) -> int:
        return len(self.commodities)

    def arc_cost(self, k: int) -> np.ndarray:
        """Variable cost vector for commodity k (length A)."""
        if self.commodity_costs is not None:
            return self.commodity_costs[k]
        return self.base_cost

    def cost_matrix(self) -> np.ndarray:
        """(K, A) variable cost matrix, broadcasting the shared per-arc cost."""
        if self.commodity_costs is not None:
            return self.commodity_costs
        return np.broadcast_to(self.base_cost, (self.n_commodities, self.n_arcs))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Instance):
            return NotImplemented
        same_table = (
            (self.commodity_costs is None and other.commodity_costs is None)
            or (
                self.commodity_costs is not None
                and other.commodity_costs is not None
                and np.array_equal(self.commodity_costs, other.commodity_costs)
            )
        )
        return (
            self.node_count == other.node_count
            and self.arcs == other.arcs
            and self.commodities == other.commodities
            and self.name == other.name
            and same_table
        )

    def __repr__(self) -> str:
        return (
            f"Instance({self.name!r}, nodes={self.node_count}, "
            f"arcs={self.n_arcs}, commodities={self.n_commodities})"
        )


def as_design(bits, n_arcs: Optional[int] = None) -> np.ndarray:
    """Validate and normalize a 0/1 design vector to an int8 array."""
    arr = np.asarray(bits)
    if arr.ndim != 1:
        raise StructuralError("design must be one-dimensional")
    if n_arcs is not None and arr.shape[0] != n_arcs:
        raise StructuralError(f"design length {arr.shape[0]} != arc count {n_arcs}")
    out = arr.astype(np.int8)
    if not np.all((out == 0) | (out == 1)):
        raise StructuralError("design entries must be 0 or 1")
    return out


def design_distance(a, b) -> int:
    """Hamming distance between two designs: sum of a(1-b) + (1-a)b."""
    va = np.asarray(a)
    vb = np.asarray(b)
    if va.shape != vb.shape:
        raise StructuralError("design length mismatch")
    return int(np.sum(va != vb))


@dataclass
class FlowSolution:
    """Per-commodity sparse flows plus the (possibly fractional) design readout.

    `objective` is the routing cost of the flows alone; fixed costs are added
    on top by `evaluate_objective`.
    """

    flows: dict[int, list[tuple[int, float]]]
    design: np.ndarray
    objective: float

    def arc_totals(self, n_arcs: int) -> np.ndarray:
        total = np.zeros(n_arcs)
        for entries in self.flows.values():
            for arc, amount in entries:
                total[arc] += amount
        return total

    def flow_matrix(self, n_commodities: int, n_arcs: int) -> np.ndarray:
        mat = np.zeros((n_commodities, n_arcs))
        for k, entries in self.flows.items():
            for arc, amount in entries:
                mat[k, arc] += amount
        return mat


def evaluate_objective(instance: Instance, design, flows: FlowSolution) -> float:
    """Routing cost plus fixed cost of open arcs."""
    y = as_design(design, instance.n_arcs)
    total = float(np.dot(instance.fixed_cost, y))
    for k, entries in flows.flows.items():
        if not (0 <= k < instance.n_commodities):
            raise StructuralError(f"flow references unknown commodity {k}")
        cost_k = instance.arc_cost(k)
        for arc, amount in entries:
            if not (0 <= arc < instance.n_arcs):
                raise StructuralError(f"flow references unknown arc {arc}")
            total += cost_k[arc] * amount
    return float(total)


@dataclass(frozen=True)
class Violation:
    kind: str  # capacity | closed_arc | conservation | negative_flow
    where: tuple
    residual: float

    def __str__(self) -> str:
        return f"{self.kind}{self.where}: residual {self.residual:.3e}"


@dataclass
class FeasibilityReport:
    ok: bool
    violations: list[Violation] = field(default_factory=list)


def check_feasibility(
    instance: Instance, design, flows: FlowSolution, tol: float = 1e-6
) -> FeasibilityReport:
    """Check capacity, forcing, conservation and nonnegativity of a solution.

    Violations are returned as data, not raised.
    """
    y = as_design(design, instance.n_arcs)
    violations: list[Violation] = []
    xs = flows.flow_matrix(instance.n_commodities, instance.n_arcs)

    neg = np.argwhere(xs < -tol)
    for k, a in neg:
        violations.append(Violation("negative_flow", (int(k), int(a)), float(-xs[k, a])))

    totals = xs.sum(axis=0)
    for a in range(instance.n_arcs):
        cap = instance.capacity[a] * y[a]
        if totals[a] > cap + tol:
            kind = "closed_arc" if y[a] == 0 else "capacity"
            violations.append(Violation(kind, (int(a),), float(totals[a] - cap)))

    for k, com in enumerate(instance.commodities):
        for node in range(instance.node_count):
            balance = xs[k, list(instance.out_arcs[node])].sum() - xs[
                k, list(instance.in_arcs[node])
            ].sum()
            if node == com.origin:
                target = com.demand
            elif node == com.destination:
                target = -com.demand
            else:
                target = 0.0
            if abs(balance - target) > tol:
                violations.append(
                    Violation("conservation", (int(k), int(node)), float(abs(balance - target)))
                )

    return FeasibilityReport(ok=not violations, violations=violations)


@dataclass
class Solution:
    """A feasible design with its flows and bookkeeping."""

    design: np.ndarray
    flows: FlowSolution
    objective: float
    wall_time: float
    provenance: str

    def key(self) -> bytes:
        return self.design.astype(np.int8).tobytes()


def new_solution(
    instance: Instance,
    design,
    flows: FlowSolution,
    wall_time: float,
    provenance: str,
) -> Solution:
    """Build a Solution with the objective recomputed from its parts."""
    y = as_design(design, instance.n_arcs)
    obj = evaluate_objective(instance, y, flows)
    return Solution(design=y, flows=flows, objective=obj, wall_time=wall_time, provenance=provenance)


@dataclass(frozen=True)
class LinearRow:
    """A linear constraint over design variables: sum(coef * y_arc) sense rhs."""

    coeffs: tuple[tuple[int, float], ...]
    sense: str  # '<', '>', '='
    rhs: float

    def __post_init__(self):
        if self.sense not in ("<", ">", "="):
            raise StructuralError(f"bad row sense {self.sense!r}")

    def satisfied_by(self, design, tol: float = 1e-9) -> bool:
        lhs = 0.0
        y = np.asarray(design)
        for arc, coef in self.coeffs:
            lhs += coef * float(y[arc])
        if self.sense == "<":
            return lhs <= self.rhs + tol
        if self.sense == ">":
            return lhs >= self.rhs - tol
        return abs(lhs - self.rhs) <= tol

    def restricted(self, keep_mapping: dict[int, int]) -> "LinearRow":
        """Project onto a reduced arc space where removed arcs are fixed to 0."""
        coeffs = tuple(
            (keep_mapping[a], c) for a, c in self.coeffs if a in keep_mapping
        )
        return LinearRow(coeffs=coeffs, sense=self.sense, rhs=self.rhs)


class SampleSet:
    """Accumulated fractional design vectors and feasible solutions.

    Feasible entries are deduplicated by design and kept sorted by
    (objective, provenance, design bits) so downstream feature extraction is
    independent of accumulation order.
    """

    def __init__(self) -> None:
        self.fractional: list[np.ndarray] = []
        self._feasible: dict[bytes, Solution] = {}

    def add_fractional(self, design_values: np.ndarray) -> None:
        arr = np.asarray(design_values, dtype=float)
        if np.any(arr < -1e-9) or np.any(arr > 1 + 1e-9):
            raise StructuralError("fractional design outside [0, 1]")
        self.fractional.append(np.clip(arr, 0.0, 1.0))

    def add_feasible(self, solution: Solution) -> bool:
        """Insert, deduplicating by design. Returns True when newly added."""
        key = solution.key()
        old = self._feasible.get(key)
        if old is None or solution.objective < old.objective:
            self._feasible[key] = solution
            return old is None
        return False

    def has_design(self, design) -> bool:
        return np.asarray(design, dtype=np.int8).tobytes() in self._feasible

    @property
    def feasible(self) -> list[Solution]:
        return sorted(
            self._feasible.values(),
            key=lambda s: (s.objective, s.provenance, s.key()),
        )

    def best(self) -> Optional[Solution]:
        entries = self.feasible
        return entries[0] if entries else None

    def merge(self, other: "SampleSet") -> "SampleSet":
        merged = SampleSet()
        for frac in self.fractional + other.fractional:
            merged.add_fractional(frac)
        for sol in self.feasible + other.feasible:
            merged.add_feasible(sol)
        return merged

    def __len__(self) -> int:
        return len(self._feasible) + len(self.fractional)
