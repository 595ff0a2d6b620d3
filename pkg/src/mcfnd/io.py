"""Plain-text file formats: instances, solution archives, feature tables, labels.

All writers are deterministic (fixed ordering, repr-based float formatting),
so identical inputs produce byte-identical files.

Instance format (1-based node indices, '#' lines are comments):

    nodes arcs commodities [pc]
    tail head variable_cost capacity fixed_cost [cost_k1 ... cost_kK]
    ...
    origin destination demand
    ...

The trailing `pc` header token flags the per-commodity cost extension, in
which every arc line carries K extra cost fields.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import (
    Arc,
    Commodity,
    DataFormatError,
    Instance,
    Solution,
    as_design,
)


def _fmt(v: float) -> str:
    """Exact, deterministic float formatting (shortest round-trip repr)."""
    return repr(float(v))


def _bits(design: np.ndarray) -> str:
    return "".join("1" if b else "0" for b in design)


def _parse_bits(text: str, lineno: int) -> np.ndarray:
    if not text or any(c not in "01" for c in text):
        raise DataFormatError(f"line {lineno}: malformed design bits")
    return np.frombuffer(text.encode("ascii"), dtype=np.uint8).astype(np.int8) - ord("0")


def write_instance(instance: Instance, path: str) -> None:
    lines = [f"# mcfnd instance {instance.name}"]
    header = f"{instance.node_count} {instance.n_arcs} {instance.n_commodities}"
    per_commodity = instance.commodity_costs is not None
    if per_commodity:
        header += " pc"
    lines.append(header)
    for idx, a in enumerate(instance.arcs):
        parts = [
            str(a.tail + 1),
            str(a.head + 1),
            _fmt(a.cost),
            _fmt(a.capacity),
            _fmt(a.fixed_cost),
        ]
        if per_commodity:
            parts.extend(_fmt(c) for c in instance.commodity_costs[:, idx])
        lines.append(" ".join(parts))
    for c in instance.commodities:
        lines.append(f"{c.origin + 1} {c.destination + 1} {_fmt(c.demand)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_instance(path: str) -> Instance:
    name = os.path.splitext(os.path.basename(path))[0]
    rows: list[tuple[int, list[str]]] = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if line.startswith("#"):
                if line.startswith("# mcfnd instance "):
                    name = line[len("# mcfnd instance "):].strip()
                continue
            if line:
                rows.append((lineno, line.split()))

    if not rows:
        raise DataFormatError("line 1: empty instance file")

    lineno, header = rows[0]
    per_commodity = False
    if header and header[-1] == "pc":
        per_commodity = True
        header = header[:-1]
    if len(header) != 3:
        raise DataFormatError(f"line {lineno}: header must be 'nodes arcs commodities [pc]'")
    try:
        n_nodes, n_arcs, n_comm = (int(tok) for tok in header)
    except ValueError:
        raise DataFormatError(f"line {lineno}: non-integer header field") from None

    if len(rows) != 1 + n_arcs + n_comm:
        raise DataFormatError(
            f"line {lineno}: expected {n_arcs} arc lines and {n_comm} commodity lines, "
            f"found {len(rows) - 1} data lines"
        )

    arcs: list[Arc] = []
    cost_table = np.zeros((n_comm, n_arcs)) if per_commodity else None
    for idx in range(n_arcs):
        lineno, toks = rows[1 + idx]
        expected = 5 + (n_comm if per_commodity else 0)
        if len(toks) != expected:
            raise DataFormatError(f"line {lineno}: expected {expected} fields on arc line")
        try:
            tail, head = int(toks[0]) - 1, int(toks[1]) - 1
            cost, cap, fixed = (float(t) for t in toks[2:5])
        except ValueError:
            raise DataFormatError(f"line {lineno}: malformed arc fields") from None
        if not (0 <= tail < n_nodes and 0 <= head < n_nodes):
            raise DataFormatError(f"line {lineno}: arc node index out of range")
        if tail == head:
            raise DataFormatError(f"line {lineno}: self-loop arc")
        if cap <= 0:
            raise DataFormatError(f"line {lineno}: capacity must be positive")
        if cost < 0 or fixed < 0:
            raise DataFormatError(f"line {lineno}: negative cost")
        arcs.append(Arc(tail, head, cost, cap, fixed))
        if per_commodity:
            try:
                cost_table[:, idx] = [float(t) for t in toks[5:]]
            except ValueError:
                raise DataFormatError(f"line {lineno}: malformed per-commodity cost") from None

    commodities: list[Commodity] = []
    for idx in range(n_comm):
        lineno, toks = rows[1 + n_arcs + idx]
        if len(toks) != 3:
            raise DataFormatError(f"line {lineno}: expected 3 fields on commodity line")
        try:
            origin, dest = int(toks[0]) - 1, int(toks[1]) - 1
            demand = float(toks[2])
        except ValueError:
            raise DataFormatError(f"line {lineno}: malformed commodity fields") from None
        if not (0 <= origin < n_nodes and 0 <= dest < n_nodes):
            raise DataFormatError(f"line {lineno}: commodity node index out of range")
        if origin == dest:
            raise DataFormatError(f"line {lineno}: origin equals destination")
        if demand <= 0:
            raise DataFormatError(f"line {lineno}: demand must be positive")
        commodities.append(Commodity(origin, dest, demand))

    return Instance(n_nodes, arcs, commodities, name=name, commodity_costs=cost_table)


@dataclass
class ArchiveEntry:
    design: np.ndarray
    objective: float
    provenance: str
    wall_time: float


@dataclass
class SolutionArchive:
    """Best-known solution store for one instance, sorted by objective."""

    instance_name: str
    entries: list[ArchiveEntry]

    def best(self) -> Optional[ArchiveEntry]:
        return self.entries[0] if self.entries else None

    def best_objective(self) -> float:
        if not self.entries:
            raise DataFormatError("empty archive has no best objective")
        return self.entries[0].objective


def _sort_entries(entries: list[ArchiveEntry]) -> list[ArchiveEntry]:
    return sorted(entries, key=lambda e: (e.objective, _bits(e.design)))


def write_archive(archive: SolutionArchive, path: str) -> None:
    lines = [f"# mcfnd archive {archive.instance_name}"]
    for e in _sort_entries(archive.entries):
        lines.append(
            f"{_fmt(e.objective)} {e.provenance} {_fmt(e.wall_time)} {_bits(e.design)}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_archive(path: str, instance: Optional[Instance] = None) -> SolutionArchive:
    """Read an archive; with the paired instance, recheck stored objectives.

    The integrity check re-solves the minimum-cost flows of each stored
    design and requires agreement within 1e-6 relative.
    """
    name = os.path.splitext(os.path.basename(path))[0]
    entries: list[ArchiveEntry] = []
    seen: set[bytes] = set()
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if line.startswith("#"):
                if line.startswith("# mcfnd archive "):
                    name = line[len("# mcfnd archive "):].strip()
                continue
            if not line:
                continue
            toks = line.split()
            if len(toks) != 4:
                raise DataFormatError(f"line {lineno}: expected 4 archive fields")
            try:
                objective = float(toks[0])
                wall = float(toks[2])
            except ValueError:
                raise DataFormatError(f"line {lineno}: malformed archive number") from None
            design = _parse_bits(toks[3], lineno)
            key = design.tobytes()
            if key in seen:
                continue
            seen.add(key)
            entries.append(ArchiveEntry(design, objective, toks[1], wall))

    archive = SolutionArchive(name, _sort_entries(entries))
    if instance is not None:
        from .relaxation import solve_flow_lp  # local import keeps io below relaxation

        for e in archive.entries:
            if e.design.shape[0] != instance.n_arcs:
                raise DataFormatError("archive design length does not match instance")
            flows = solve_flow_lp(instance, e.design)
            if flows is None:
                raise DataFormatError(
                    f"archive entry with objective {e.objective} is infeasible for the instance"
                )
            recomputed = flows.objective + float(
                np.dot(instance.fixed_cost, e.design)
            )
            if abs(recomputed - e.objective) > 1e-6 * max(1.0, abs(e.objective)):
                raise DataFormatError(
                    f"archive objective {e.objective} does not match recomputation {recomputed}"
                )
    return archive


def append_archive(path: str, solution: Solution, instance_name: str = "") -> SolutionArchive:
    """Insert a solution (dedup by design), keep sort order, rewrite the file."""
    if os.path.exists(path):
        archive = read_archive(path)
    else:
        archive = SolutionArchive(instance_name or "unnamed", [])
    if instance_name:
        archive.instance_name = instance_name
    key = solution.key()
    replaced = False
    for i, e in enumerate(archive.entries):
        if e.design.tobytes() == key:
            if solution.objective < e.objective:
                archive.entries[i] = ArchiveEntry(
                    solution.design, solution.objective, solution.provenance, solution.wall_time
                )
            replaced = True
            break
    if not replaced:
        archive.entries.append(
            ArchiveEntry(solution.design, solution.objective, solution.provenance, solution.wall_time)
        )
    archive.entries = _sort_entries(archive.entries)
    write_archive(archive, path)
    return archive


FEATURE_COLUMNS = 30


def _fmt9(v: float) -> str:
    return f"{float(v):.9g}"


def write_feature_table(rows: np.ndarray, labels, path: str) -> None:
    """Write a feature matrix plus label column; 9 significant digits."""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[1] != FEATURE_COLUMNS:
        raise DataFormatError(f"feature rows must have {FEATURE_COLUMNS} columns")
    labels = np.asarray(labels)
    if labels.shape[0] != rows.shape[0]:
        raise DataFormatError("label count does not match row count")
    header = " ".join(f"f{i:02d}" for i in range(FEATURE_COLUMNS)) + " label"
    lines = [header]
    for r, lab in zip(rows, labels):
        lines.append(" ".join(_fmt9(v) for v in r) + f" {int(lab)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_feature_table(path: str) -> tuple[np.ndarray, np.ndarray]:
    rows: list[list[float]] = []
    labels: list[int] = []
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise DataFormatError("line 1: empty feature table")
    for lineno, line in enumerate(lines[1:], start=2):
        toks = line.split()
        if len(toks) != FEATURE_COLUMNS + 1:
            raise DataFormatError(f"line {lineno}: expected {FEATURE_COLUMNS + 1} columns")
        try:
            rows.append([float(t) for t in toks[:-1]])
            labels.append(int(toks[-1]))
        except ValueError:
            raise DataFormatError(f"line {lineno}: malformed value") from None
    if rows:
        return np.array(rows), np.array(labels, dtype=np.int8)
    return np.zeros((0, FEATURE_COLUMNS)), np.zeros(0, dtype=np.int8)


def write_labels(labels, instance_name: str, path: str) -> None:
    bits = as_design(labels)
    with open(path, "w") as fh:
        fh.write(f"# mcfnd labels {instance_name}\n{_bits(bits)}\n")


def read_labels(path: str) -> np.ndarray:
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if line and not line.startswith("#"):
                return _parse_bits(line, lineno)
    raise DataFormatError("line 1: no label line found")


def write_samples(samples, path: str) -> None:
    """Persist a SampleSet: fractional design rows and feasible entries."""
    lines = ["# mcfnd samples"]
    for frac in samples.fractional:
        lines.append("F " + " ".join(_fmt9(v) for v in frac))
    for sol in samples.feasible:
        lines.append(
            f"S {_fmt(sol.objective)} {sol.provenance} {_fmt(sol.wall_time)} {_bits(sol.design)}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_samples(path: str, instance: Instance):
    """Read a SampleSet file. Feasible entries are rescored minimum-cost flows."""
    from .model import FlowSolution, SampleSet
    from .relaxation import solve_flow_lp

    samples = SampleSet()
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            toks = line.split()
            if toks[0] == "F":
                if len(toks) != instance.n_arcs + 1:
                    raise DataFormatError(f"line {lineno}: fractional row length mismatch")
                samples.add_fractional(np.array([float(t) for t in toks[1:]]))
            elif toks[0] == "S":
                if len(toks) != 5:
                    raise DataFormatError(f"line {lineno}: expected 5 fields")
                design = _parse_bits(toks[4], lineno)
                flows = solve_flow_lp(instance, design)
                if flows is None:
                    raise DataFormatError(f"line {lineno}: infeasible archived sample")
                obj = flows.objective + float(np.dot(instance.fixed_cost, design))
                samples.add_feasible(
                    Solution(design, flows, obj, float(toks[3]), toks[2])
                )
            else:
                raise DataFormatError(f"line {lineno}: unknown record tag {toks[0]!r}")
    return samples


def write_prediction(probabilities: np.ndarray, decisions, path: str) -> None:
    bits = as_design(decisions)
    lines = ["# mcfnd prediction", _bits(bits), " ".join(_fmt9(p) for p in probabilities)]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_prediction(path: str) -> tuple[np.ndarray, np.ndarray]:
    """Returns (decisions, probabilities)."""
    body: list[str] = []
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if line and not line.startswith("#"):
                body.append(line)
    if not body:
        raise DataFormatError("line 1: empty prediction file")
    decisions = _parse_bits(body[0], 2)
    probs = (
        np.array([float(t) for t in body[1].split()]) if len(body) > 1 else decisions.astype(float)
    )
    return decisions, probs
