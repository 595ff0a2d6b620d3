import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcfnd.rng import Rng
from mcfnd.simplex import (
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    LinearProgram,
    solve_lp,
    verify_optimal,
)

from conftest import max_flow_augmenting


def test_single_variable_lower_bound_dual():
    # min x st x >= 1, x in [0, 10] -> x = 1, row dual 1
    lp = LinearProgram()
    row = lp.add_row(">", 1.0)
    lp.add_column(1.0, [(row, 1.0)], 0.0, 10.0)
    res = solve_lp(lp)
    assert res.status == OPTIMAL
    assert res.x[0] == pytest.approx(1.0, abs=1e-9)
    assert res.duals[row] == pytest.approx(1.0, abs=1e-9)
    certs = verify_optimal(lp, res)
    assert certs["primal"] <= 1e-7
    assert certs["duality_gap"] <= 1e-6
    assert certs["complementarity"] <= 1e-6


def test_infeasible_system():
    # x <= 0 and x >= 1
    lp = LinearProgram()
    r1 = lp.add_row("<", 0.0)
    r2 = lp.add_row(">", 1.0)
    lp.add_column(0.0, [(r1, 1.0), (r2, 1.0)], 0.0, 10.0)
    assert solve_lp(lp).status == INFEASIBLE


def test_unbounded():
    lp = LinearProgram()
    row = lp.add_row(">", 1.0)
    lp.add_column(-1.0, [(row, 1.0)], 0.0, np.inf)
    assert solve_lp(lp).status == UNBOUNDED


def test_equality_and_upper_bounds():
    # min -x - 2y st x + y = 3, x <= 2, y <= 2
    lp = LinearProgram()
    row = lp.add_row("=", 3.0)
    lp.add_column(-1.0, [(row, 1.0)], 0.0, 2.0)
    lp.add_column(-2.0, [(row, 1.0)], 0.0, 2.0)
    res = solve_lp(lp)
    assert res.status == OPTIMAL
    assert res.objective == pytest.approx(-5.0, abs=1e-8)
    assert res.x[0] == pytest.approx(1.0, abs=1e-8)
    assert res.x[1] == pytest.approx(2.0, abs=1e-8)


def test_max_flow_as_lp_matches_augmenting_paths():
    # 4-node diamond: 0->1 (3), 0->2 (2), 1->3 (2), 2->3 (3), 1->2 (1)
    caps = {(0, 1): 3.0, (0, 2): 2.0, (1, 3): 2.0, (2, 3): 3.0, (1, 2): 1.0}
    oracle = max_flow_augmenting(dict(caps), 0, 3, 4)

    edges = sorted(caps)
    lp = LinearProgram()
    node_rows = {node: lp.add_row("=", 0.0) for node in (1, 2)}
    # Maximize flow out of source: min -sum(x_e for e leaving 0).
    for e in edges:
        obj = -1.0 if e[0] == 0 else 0.0
        entries = []
        if e[0] in node_rows:
            entries.append((node_rows[e[0]], 1.0))
        if e[1] in node_rows:
            entries.append((node_rows[e[1]], -1.0))
        lp.add_column(obj, entries, 0.0, caps[e])
    res = solve_lp(lp)
    assert res.status == OPTIMAL
    assert -res.objective == pytest.approx(oracle, abs=1e-8)


def _random_lp(rng: Rng, m: int, n: int) -> LinearProgram:
    lp = LinearProgram()
    for _ in range(m):
        sense = ("<", "=", ">")[rng.randint(0, 2)]
        lp.add_row(sense, rng.uniform(-5, 5))
    for _ in range(n):
        entries = []
        for row in range(m):
            if rng.uniform() < 0.5:
                entries.append((row, rng.uniform(-3, 3)))
        lo = 0.0 if rng.uniform() < 0.8 else -rng.uniform(0, 4)
        hi = lo + rng.uniform(0.5, 8)
        lp.add_column(rng.uniform(-4, 4), entries, lo, hi)
    return lp


def test_random_lps_certified():
    optimal = 0
    for seed in range(40):
        rng = Rng(seed)
        lp = _random_lp(rng, rng.randint(2, 6), rng.randint(3, 10))
        res = solve_lp(lp)
        assert res.status in (OPTIMAL, INFEASIBLE)
        if res.status == OPTIMAL:
            optimal += 1
            certs = verify_optimal(lp, res)
            assert certs["primal"] <= 1e-6
            assert certs["duality_gap"] <= 1e-6
            assert certs["complementarity"] <= 1e-6
    assert optimal >= 10  # the generator must exercise the optimal path


def test_add_column_warm_equals_cold():
    rng = Rng(7)
    lp = _random_lp(rng, 4, 6)
    res = solve_lp(lp)
    if res.status != OPTIMAL:
        pytest.skip("random LP infeasible for this seed")
    # Add a column, warm resolve, compare against from-scratch solve.
    lp.add_column(-1.0, [(0, 1.0), (2, -0.5)], 0.0, 2.0)
    warm = solve_lp(lp, warm_basis=res.basis)
    cold = solve_lp(lp)
    assert warm.status == cold.status == OPTIMAL
    assert warm.objective == pytest.approx(cold.objective, rel=1e-6, abs=1e-8)


def test_duplicate_column_keeps_optimum():
    lp = LinearProgram()
    row = lp.add_row(">", 2.0)
    lp.add_column(3.0, [(row, 1.0)], 0.0, 5.0)
    base = solve_lp(lp)
    lp.add_column(3.0, [(row, 1.0)], 0.0, 5.0)
    again = solve_lp(lp, warm_basis=base.basis)
    assert again.objective == pytest.approx(base.objective, abs=1e-9)


def test_nonnegative_reduced_cost_column_keeps_optimum():
    lp = LinearProgram()
    row = lp.add_row(">", 4.0)
    lp.add_column(1.0, [(row, 1.0)], 0.0, 10.0)
    base = solve_lp(lp)
    assert base.status == OPTIMAL
    # Reduced cost of the new column = 5 - dual * 1 = 5 - 1 = 4 >= 0.
    lp.add_column(5.0, [(row, 1.0)], 0.0, 10.0)
    res = solve_lp(lp, warm_basis=base.basis)
    assert res.objective == pytest.approx(base.objective, abs=1e-9)


def test_determinism():
    rng = Rng(99)
    lp = _random_lp(rng, 5, 9)
    a = solve_lp(lp)
    b = solve_lp(lp)
    assert a.status == b.status
    assert a.iterations == b.iterations
    if a.status == OPTIMAL:
        assert np.array_equal(a.x, b.x)
        assert np.array_equal(a.duals, b.duals)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_warm_resolve_matches_cold_property(seed):
    rng = Rng(seed)
    lp = _random_lp(rng, rng.randint(2, 5), rng.randint(3, 8))
    res = solve_lp(lp)
    if res.status != OPTIMAL or res.basis is None:
        return
    lp.add_column(rng.uniform(-3, 3), [(0, rng.uniform(-2, 2))], 0.0, rng.uniform(1, 5))
    warm = solve_lp(lp, warm_basis=res.basis)
    cold = solve_lp(lp)
    assert warm.status == cold.status
    if warm.status == OPTIMAL:
        assert warm.objective == pytest.approx(cold.objective, rel=1e-6, abs=1e-7)
