import numpy as np
import pytest

from mcfnd.bnb import (
    INFEASIBLE,
    NO_BETTER,
    OPTIMAL,
    MipLimits,
    MipProblem,
    add_local_branching_row,
    add_neighbourhood_rows,
    add_pseudo_cut,
    solve_mip,
)
from mcfnd.generator import GenSpec, generate
from mcfnd.model import StructuralError, check_feasibility, design_distance

from conftest import brute_force_optimum, tiny_instance


def test_matches_brute_force(diamond):
    oracle_obj, _ = brute_force_optimum(diamond)
    res = solve_mip(MipProblem(diamond))
    assert res.status == OPTIMAL
    assert res.best is not None
    assert res.best.objective == pytest.approx(oracle_obj, rel=1e-6)
    assert check_feasibility(diamond, res.best.design, res.best.flows).ok


def test_matches_brute_force_on_generated():
    for seed in (0, 1, 2):
        inst = generate(
            GenSpec(topology="circular", ring_size=5, chords=1, commodity_count=3,
                    seed=seed, capacity_ratio_range=(1.3, 2.0))
        )
        oracle_obj, _ = brute_force_optimum(inst)
        res = solve_mip(MipProblem(inst))
        assert res.status == OPTIMAL
        assert res.best.objective == pytest.approx(oracle_obj, rel=1e-6)


def test_cutoff_below_optimum(diamond):
    oracle_obj, _ = brute_force_optimum(diamond)
    res = solve_mip(MipProblem(diamond, cutoff=oracle_obj * 0.9))
    assert res.status == NO_BETTER
    assert res.best is None


def test_cutoff_above_optimum_still_finds_it(diamond):
    oracle_obj, _ = brute_force_optimum(diamond)
    res = solve_mip(MipProblem(diamond, cutoff=oracle_obj * 1.5))
    assert res.status == OPTIMAL
    assert res.best.objective == pytest.approx(oracle_obj, rel=1e-6)
    assert res.best.objective < oracle_obj * 1.5


def test_kata_m_zero_infeasible(diamond):
    res_free = solve_mip(MipProblem(diamond))
    incumbent = res_free.best.design
    p = add_neighbourhood_rows(MipProblem(diamond), incumbent, 0)
    res = solve_mip(p)
    assert res.status == INFEASIBLE  # close >= 1 arc but close <= 0 arcs


def test_neighbourhood_rows_semantics(diamond):
    incumbent = np.array([1, 1, 1, 1, 1], dtype=np.int8)
    p = add_neighbourhood_rows(MipProblem(diamond), incumbent, 2)
    kata1, kata2 = p.extra_rows[-2:]
    # Incumbent itself violates kata1 (5 <= 4 fails).
    assert not kata1.satisfied_by(incumbent)
    # Designs keeping 3 or 4 of the incumbent's open arcs satisfy both rows.
    keep3 = np.array([1, 1, 1, 0, 0], dtype=np.int8)
    assert kata1.satisfied_by(keep3) and kata2.satisfied_by(keep3)
    keep2 = np.array([1, 1, 0, 0, 0], dtype=np.int8)
    assert not kata2.satisfied_by(keep2)


def test_neighbourhood_vacuous_when_m_large(diamond):
    incumbent = np.array([1, 0, 0, 1, 0], dtype=np.int8)
    p = add_neighbourhood_rows(MipProblem(diamond), incumbent, 10)
    kata2 = p.extra_rows[-1]
    assert kata2.satisfied_by(np.zeros(5, dtype=np.int8))  # lower row vacuous


def test_local_branching_ball(diamond):
    res = solve_mip(MipProblem(diamond))
    ref = res.best.design
    for beta in (0, 1, 3):
        p = add_local_branching_row(MipProblem(diamond), ref, beta)
        out = solve_mip(p)
        assert out.status == OPTIMAL
        assert design_distance(out.best.design, ref) <= beta


def test_local_branching_beta_zero_only_reference(diamond):
    res = solve_mip(MipProblem(diamond))
    ref = res.best.design
    p = add_local_branching_row(MipProblem(diamond), ref, 0)
    out = solve_mip(p)
    assert np.array_equal(out.best.design, ref)


def test_local_branching_vacuous_at_full_radius(diamond):
    res = solve_mip(MipProblem(diamond))
    p = add_local_branching_row(MipProblem(diamond), res.best.design, diamond.n_arcs)
    out = solve_mip(p)
    assert out.best.objective == pytest.approx(res.best.objective, rel=1e-9)


def test_pseudo_cut_semantics(diamond):
    # A0={4}: y_4 >= 1 excludes designs with arc 4 closed.
    p = add_pseudo_cut(MipProblem(diamond), [4], [])
    out = solve_mip(p)
    assert out.best.design[4] == 1
    # A1={4}: 1 - y_4 >= 1 excludes designs with arc 4 open.
    p = add_pseudo_cut(MipProblem(diamond), [], [4])
    out = solve_mip(p)
    assert out.best.design[4] == 0


def test_pseudo_cut_validation(diamond):
    with pytest.raises(StructuralError):
        add_pseudo_cut(MipProblem(diamond), [1], [1])
    with pytest.raises(StructuralError):
        add_pseudo_cut(MipProblem(diamond), [], [])


def test_warm_start_bounds_first_incumbent(diamond):
    warm = np.ones(5, dtype=np.int8)
    res = solve_mip(MipProblem(diamond, warm=warm))
    assert res.incumbents
    from mcfnd.relaxation import solve_flow_lp

    flows = solve_flow_lp(diamond, warm)
    warm_obj = flows.objective + float(np.dot(diamond.fixed_cost, warm))
    assert res.incumbents[0].objective <= warm_obj + 1e-9


def test_determinism_and_trajectory(diamond):
    p = MipProblem(diamond, seed=5, dive_bias=0.7)
    a = solve_mip(p)
    b = solve_mip(MipProblem(diamond, seed=5, dive_bias=0.7))
    assert a.nodes == b.nodes
    assert a.trajectory == b.trajectory
    times = [t for t, _ in a.trajectory]
    objs = [o for _, o in a.trajectory]
    assert times == sorted(times)
    assert all(objs[i] > objs[i + 1] for i in range(len(objs) - 1))


def test_dive_bias_does_not_change_answer(diamond):
    lo = solve_mip(MipProblem(diamond, seed=1, dive_bias=0.0))
    hi = solve_mip(MipProblem(diamond, seed=1, dive_bias=1.0))
    assert lo.status == hi.status == OPTIMAL
    assert lo.best.objective == pytest.approx(hi.best.objective, rel=1e-9)


def test_node_limit_is_anytime(diamond):
    res = solve_mip(MipProblem(diamond, limits=MipLimits(nodes=0)))
    assert res.nodes == 0
    assert res.status == "feasible_limit"
    assert res.best is None
    # With one node allowed the solver may already prove optimality (integral
    # root) or stop at the limit; both are sound anytime outcomes.
    res1 = solve_mip(MipProblem(diamond, limits=MipLimits(nodes=1)))
    assert res1.nodes <= 1
    assert res1.status in ("feasible_limit", "optimal")


def test_bound_soundness_spot_check(diamond):
    """Root relaxation bound must not exceed the integer optimum."""
    from mcfnd.relaxation import Master, PathPool

    oracle_obj, _ = brute_force_optimum(diamond)
    master = Master(
        diamond, PathPool(), mode="design", allowed=np.ones(5, dtype=bool)
    )
    res = master.solve()
    assert res.converged
    assert res.bound <= oracle_obj + 1e-6
