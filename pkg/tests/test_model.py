import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcfnd.model import (
    Arc,
    Commodity,
    FlowSolution,
    Instance,
    SampleSet,
    StructuralError,
    check_feasibility,
    design_distance,
    evaluate_objective,
    new_solution,
)
from mcfnd.rng import Rng

from conftest import path_instance, tiny_instance


def test_objective_single_arc():
    inst = path_instance()
    flows = FlowSolution({0: [(0, 3.0)]}, np.array([1.0]), 6.0)
    assert evaluate_objective(inst, [1], flows) == pytest.approx(11.0)


def test_objective_zero_case():
    inst = path_instance()
    flows = FlowSolution({}, np.array([0.0]), 0.0)
    assert evaluate_objective(inst, [0], flows) == 0.0


def test_objective_matches_double_entry_oracle():
    rng = Rng(3)
    arcs = [
        Arc(i % 4, (i + 1) % 4 if (i + 1) % 4 != i % 4 else (i + 2) % 4,
            rng.uniform(1, 5), rng.uniform(5, 20), rng.uniform(0, 30))
        for i in range(10)
    ]
    inst = Instance(4, arcs, [Commodity(0, 2, 5.0), Commodity(1, 3, 2.0)])
    design = np.array([rng.randint(0, 1) for _ in range(10)], dtype=np.int8)
    flows = {0: [(0, 1.5), (3, 2.0)], 1: [(2, 0.5)]}
    fs = FlowSolution(flows, design.astype(float), 0.0)

    # Independent re-summation, loop coded separately from evaluate_objective.
    total = 0.0
    for a in range(10):
        total += arcs[a].fixed_cost * design[a]
    for k, entries in flows.items():
        for a, amt in entries:
            total += arcs[a].cost * amt
    assert evaluate_objective(inst, design, fs) == pytest.approx(total, rel=1e-12)


def test_objective_invariant_to_commodity_order(diamond):
    flows_a = FlowSolution({0: [(0, 6.0), (2, 6.0)], 1: [(1, 4.0), (3, 4.0)]}, np.ones(5), 0.0)
    flows_b = FlowSolution({1: [(1, 4.0), (3, 4.0)], 0: [(0, 6.0), (2, 6.0)]}, np.ones(5), 0.0)
    y = np.ones(5, dtype=np.int8)
    assert evaluate_objective(diamond, y, flows_a) == pytest.approx(
        evaluate_objective(diamond, y, flows_b)
    )


def test_feasibility_ok_single_commodity():
    inst = path_instance()
    flows = FlowSolution({0: [(0, 3.0)]}, np.array([1.0]), 6.0)
    assert check_feasibility(inst, [1], flows).ok


def test_feasibility_closed_arc_flagged():
    inst = path_instance()
    flows = FlowSolution({0: [(0, 3.0)]}, np.array([0.0]), 6.0)
    report = check_feasibility(inst, [0], flows)
    assert not report.ok
    assert any(v.kind == "closed_arc" for v in report.violations)


def test_feasibility_conservation_violation(diamond):
    flows = FlowSolution({0: [(0, 6.0)]}, np.ones(5), 0.0)  # stops at node 1
    report = check_feasibility(diamond, np.ones(5, dtype=np.int8), flows)
    kinds = {v.kind for v in report.violations}
    assert "conservation" in kinds


def test_design_distance_examples():
    assert design_distance([1, 0, 1], [1, 0, 1]) == 0
    assert design_distance([1, 0, 1], [0, 0, 1]) == 1
    with pytest.raises(StructuralError):
        design_distance([1, 0], [1, 0, 1])


def test_design_distance_matches_naive_loop():
    rng = Rng(11)
    a = np.array([rng.randint(0, 1) for _ in range(100)], dtype=np.int8)
    b = np.array([rng.randint(0, 1) for _ in range(100)], dtype=np.int8)
    naive = sum(1 for i in range(100) if a[i] != b[i])
    assert design_distance(a, b) == naive


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=40))
def test_design_distance_is_a_metric(triples):
    a = np.array([t[0] for t in triples], dtype=np.int8)
    b = np.array([t[1] for t in triples], dtype=np.int8)
    c = np.array([t[2] for t in triples], dtype=np.int8)
    assert design_distance(a, b) == design_distance(b, a)
    assert design_distance(a, a) == 0
    assert design_distance(a, c) <= design_distance(a, b) + design_distance(b, c)


def test_instance_invariants_enforced():
    with pytest.raises(StructuralError):
        Instance(2, [Arc(0, 0, 1, 1, 1)], [Commodity(0, 1, 1)])
    with pytest.raises(StructuralError):
        Instance(2, [Arc(0, 1, 1, 0.0, 1)], [Commodity(0, 1, 1)])
    with pytest.raises(StructuralError):
        Instance(2, [Arc(0, 1, 1, 1, 1)], [Commodity(1, 1, 1)])
    with pytest.raises(StructuralError):
        Instance(2, [Arc(0, 1, 1, 1, 1)], [Commodity(0, 1, 0.0)])


def test_sample_set_ordering_and_dedup():
    inst = tiny_instance()
    samples = SampleSet()
    design_a = np.array([1, 0, 1, 0, 0], dtype=np.int8)
    design_b = np.array([0, 1, 0, 1, 0], dtype=np.int8)
    fa = FlowSolution({0: [(0, 6.0), (2, 6.0)], 1: [(0, 4.0), (2, 4.0)]}, design_a.astype(float), 0.0)
    fb = FlowSolution({0: [(1, 6.0), (3, 6.0)], 1: [(1, 4.0), (3, 4.0)]}, design_b.astype(float), 0.0)
    sol_a = new_solution(inst, design_a, fa, 1.0, "x")
    sol_b = new_solution(inst, design_b, fb, 2.0, "y")
    samples.add_feasible(sol_b)
    samples.add_feasible(sol_a)
    assert not samples.add_feasible(sol_a)  # dedup
    ordered = samples.feasible
    assert len(ordered) == 2
    assert ordered[0].objective <= ordered[1].objective
    assert samples.best() is ordered[0]
