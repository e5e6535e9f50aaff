import numpy as np
import pytest

from stochknap import ProblemInstance, compare_policies, simulate, solve_dp, solve_unit
from stochknap.model import BatchDistribution, discretize
from stochknap.poisson import make_rng
from stochknap.sim import DPTable, EqualSpaced, FCFS, SwitchOver, draw_events, run_policy

from conftest import PRICES4, RATES4
from oracles import shortfall_sum


def test_fcfs_single_class_analytic():
    inst = ProblemInstance.build([2.0], [0.9], 10, 12.0)
    est = simulate(inst, "fcfs", replications=50_000, seed=1)
    exact = 2.0 * (10 - shortfall_sum(10, 10.8))
    assert abs(est.mean - exact) <= est.half_width


def test_no_inventory_no_revenue():
    inst = ProblemInstance.build(PRICES4, RATES4, 0, 20.0)
    est = simulate(inst, FCFS(), replications=1000)
    assert est.mean == 0.0 and est.half_width == 0.0


def test_revenue_never_exceeds_full_price_inventory(four_class):
    ev = draw_events(four_class, 2000, make_rng(0))
    rev, sup, req = run_policy(four_class, FCFS(), ev)
    assert np.all(rev <= 1.0 * 12 + 1e-12)
    assert np.all(sup <= req)


def test_events_are_sorted_poisson_streams(four_class):
    ev = draw_events(four_class, 20_000, make_rng(3))
    assert ev.count.mean() == pytest.approx(20.0, rel=0.01)
    real = np.isfinite(ev.time)
    assert np.all(ev.time[:, 1:] >= ev.time[:, :-1])
    share = np.bincount(ev.cls[real], minlength=4) / real.sum()
    assert share == pytest.approx(np.array(RATES4), abs=0.01)


def test_batch_sizes_follow_law():
    b = BatchDistribution([0.2, 0.5, 0.3])
    inst = ProblemInstance.build([1.0], [5.0], 10, 10.0, batch=b)
    ev = draw_events(inst, 5000, make_rng(1))
    sizes = ev.size[np.isfinite(ev.time)]
    assert np.bincount(sizes, minlength=3)[:3] / sizes.size == pytest.approx(b.pmf, abs=0.01)


def test_common_random_numbers_give_zero_difference(four_class):
    sol = solve_unit(four_class)
    a = SwitchOver.from_solution(sol, name="a")
    b = SwitchOver.from_solution(sol, name="b")
    cmp = compare_policies(four_class, [a, b], replications=5000, seed=9)
    assert cmp.differences[("a", "b")] == (0.0, 0.0)


def test_seed_determinism_and_jobs_invariance(four_class):
    pol = SwitchOver.from_solution(solve_unit(four_class))
    one = simulate(four_class, pol, replications=10_000, seed=5, jobs=1)
    many = simulate(four_class, pol, replications=10_000, seed=5, jobs=4)
    assert one.mean == many.mean and one.half_width == many.half_width
    other = simulate(four_class, pol, replications=10_000, seed=6)
    assert other.mean != one.mean


def test_ci_shrinks_with_replications(four_class):
    pol = SwitchOver.from_solution(solve_unit(four_class))
    small = simulate(four_class, pol, replications=4_000, seed=2)
    large = simulate(four_class, pol, replications=64_000, seed=2)
    assert large.half_width == pytest.approx(small.half_width / 4, rel=0.1)


def test_dp_policy_beats_heuristics(four_class):
    delta = 0.05
    table = solve_dp(discretize(four_class, delta))
    sol = solve_unit(four_class)
    pols = [DPTable(table, delta), SwitchOver.from_solution(sol), EqualSpaced(4, 20.0), FCFS()]
    cmp = compare_policies(four_class, pols, replications=40_000, seed=11)
    diff, half = cmp.differences[("dp", "switch")]
    assert diff + half > 0
    for name in ("equal", "fcfs"):
        diff, half = cmp.differences[("switch", name)]
        assert diff - half > 0
    rows = cmp.rows(12, 20.0)
    assert min(r["pct_off_best"] for r in rows) == 0.0


def test_switch_simulation_matches_analytic(four_class):
    sol = solve_unit(four_class)
    est = simulate(four_class, SwitchOver.from_solution(sol), replications=100_000, seed=0)
    assert abs(est.mean - sol.objective_revenue) <= est.half_width


def test_policy_validation():
    with pytest.raises(ValueError):
        SwitchOver((3.0, 1.0))
    inst = ProblemInstance.build([1.0], [1.0], 2, 1.0)
    with pytest.raises(ValueError):
        simulate(inst, "nope")
    with pytest.raises(ValueError):
        simulate(inst, "fcfs", replications=1)
    with pytest.raises(ValueError):
        compare_policies(inst, [FCFS(), FCFS()], replications=10)
