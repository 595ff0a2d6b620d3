import numpy as np
import pytest

from mcfnd.clock import WorkClock
from mcfnd.generator import GenSpec, generate
from mcfnd.heuristics import (
    LsConfig,
    lbh,
    local_branching_radius,
    lsfs_sample,
    lsr,
    ls_star,
    lswsh,
    rss_sample,
)
from mcfnd.model import StructuralError, check_feasibility

from conftest import brute_force_optimum, tiny_instance


def small_instance(seed=0):
    return generate(
        GenSpec(topology="grid", rows=3, cols=3, commodity_count=5, seed=seed,
                capacity_ratio_range=(1.3, 2.5))
    )


def cfg(**kw):
    defaults = dict(m0=5, per_mip_s=5.0, budget_s=30.0, seed=1)
    defaults.update(kw)
    return LsConfig(**defaults)


def test_ls_star_reaches_brute_force_optimum(diamond):
    oracle, _ = brute_force_optimum(diamond)
    res = ls_star(diamond, cfg(budget_s=60.0))
    assert res.best is not None
    assert res.best.objective >= oracle - 1e-9
    assert res.best.objective == pytest.approx(oracle, rel=1e-6)
    assert check_feasibility(diamond, res.best.design, res.best.flows).ok


def test_ls_star_m0_zero_returns_initial(diamond):
    base = ls_star(diamond, cfg())
    res = ls_star(diamond, cfg(m0=0), initial=base.best, reduction_override=[])
    assert res.best is base.best


def test_ls_star_trajectory_strictly_decreasing():
    inst = small_instance(3)
    res = ls_star(inst, cfg())
    objs = [o for _, o in res.trajectory]
    assert all(objs[i] > objs[i + 1] for i in range(len(objs) - 1))
    times = [t for t, _ in res.trajectory]
    assert times == sorted(times)


def test_ls_star_never_worse_than_initial(diamond):
    weak = ls_star(diamond, cfg(budget_s=5.0))
    res = ls_star(diamond, cfg(), initial=weak.best)
    assert res.best.objective <= weak.best.objective + 1e-9


def test_ls_star_solutions_feasible_on_full_instance():
    inst = small_instance(5)
    res = ls_star(inst, cfg())
    for sol in res.samples.feasible:
        assert check_feasibility(inst, sol.design, sol.flows).ok


def test_rss_determinism():
    inst = small_instance(1)
    a = rss_sample(inst, budget_s=10.0, per_iter_s=2.0, seed=7)
    b = rss_sample(inst, budget_s=10.0, per_iter_s=2.0, seed=7)
    assert len(a.samples.feasible) == len(b.samples.feasible)
    for sa, sb in zip(a.samples.feasible, b.samples.feasible):
        assert np.array_equal(sa.design, sb.design)
        assert sa.objective == sb.objective
        assert sa.wall_time == sb.wall_time


def test_rss_collects_fractional_and_feasible():
    inst = small_instance(2)
    run = rss_sample(inst, budget_s=10.0, per_iter_s=2.0, seed=3)
    assert len(run.samples.fractional) >= 1
    assert len(run.samples.feasible) >= 1
    for sol in run.samples.feasible:
        assert check_feasibility(inst, sol.design, sol.flows).ok
    for frac in run.samples.fractional:
        assert np.all(frac >= 0) and np.all(frac <= 1)


def test_lsfs_sample_history_nonempty():
    inst = small_instance(4)
    run = lsfs_sample(inst, budget_s=10.0, per_iter_s=2.0, columns=3, seed=2)
    assert len(run.samples.fractional) >= 1


def test_rss_mip_call_cap():
    inst = small_instance(6)
    run = rss_sample(inst, budget_s=10.0, per_iter_s=2.0, seed=1)
    import math

    assert run.mip_calls <= math.ceil(10.0 / 2.0)


def test_lsr_removal_set_disjoint_from_sample_support(diamond):
    from mcfnd.heuristics import lsr_removal_set
    from mcfnd.rng import Rng

    base = ls_star(diamond, cfg())
    rng = Rng(17)
    for _ in range(20):
        prediction = np.array([rng.randint(0, 1) for _ in range(5)], dtype=np.int8)
        removal = lsr_removal_set(prediction, base.best)
        open_arcs = set(int(a) for a in np.nonzero(base.best.design == 1)[0])
        assert not (set(removal) & open_arcs)


def test_lsr_repair_keeps_best_sample_arcs(diamond):
    base = ls_star(diamond, cfg())
    best = base.best
    prediction = np.ones(5, dtype=np.int8)  # remove everything
    res = lsr(diamond, prediction, best, cfg())
    assert res.best is not None
    # Repair guarantee: removal set avoided every arc open in the sample.
    assert res.best.objective <= best.objective + 1e-9


def test_lsr_keep_all_prediction_equals_plain_search(diamond):
    base = ls_star(diamond, cfg())
    res = lsr(diamond, np.zeros(5, dtype=np.int8), base.best, cfg())
    assert res.best is not None
    assert res.best.objective <= base.best.objective + 1e-9


def test_local_branching_radius_examples():
    assert local_branching_radius(100, 0.8) == 20
    assert local_branching_radius(10, 1.0) == 0
    with pytest.raises(StructuralError):
        local_branching_radius(10, 0.0)


def test_lbh_improves_or_equals_warm(diamond):
    base = ls_star(diamond, cfg())
    oracle, oracle_design = brute_force_optimum(diamond)
    res = lbh(diamond, oracle_design, base.best, 0.8, cfg())
    assert res.best is not None
    assert res.best.objective <= base.best.objective + 1e-9


def test_lbh_respect_one_with_infeasible_prediction(diamond):
    # All-closed prediction cannot route anything; beta=0 pins the search to it.
    res = lbh(diamond, np.zeros(5, dtype=np.int8), None, 1.0, cfg())
    assert res.best is None
    assert res.status == "infeasible"


def test_lswsh_full_radius_behaves_like_ls_star(diamond):
    base = ls_star(diamond, cfg())
    res = lswsh(diamond, base.best.design, base.best, 1e-9, cfg())
    # respect_fraction -> 0 gives beta = |A|: the ball is vacuous.
    assert res.best.objective == pytest.approx(base.best.objective, rel=1e-6)


def test_lswsh_determinism(diamond):
    pred = np.array([1, 1, 1, 1, 0], dtype=np.int8)
    base = ls_star(diamond, cfg())
    a = lswsh(diamond, pred, base.best, 0.8, cfg())
    b = lswsh(diamond, pred, base.best, 0.8, cfg())
    assert a.best.objective == b.best.objective
    assert a.trajectory == b.trajectory
