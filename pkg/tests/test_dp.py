import itertools
from fractions import Fraction

import numpy as np
import pytest

from stochknap.dp import (
    accept,
    extract_thresholds,
    solve_continuous,
    solve_dp,
    structure_report,
    write_value_csv,
)
from stochknap.model import DiscretizedInstance, ProblemInstance, discretize

from conftest import random_unit_instance
from oracles import enumerate_policies, expectimax


def _rational_instance(rng, m, W, periods, unit):
    """Random exact-rational period model plus its float twin."""
    width = W + 2                      # sizes 0..W and one oversize bucket
    if unit:
        sizes = [1]
    else:
        sizes = list(range(width))
    weights = [[Fraction(int(rng.integers(0, 6)), 1) if j in sizes else Fraction(0)
                for j in range(width)] for _ in range(m)]
    total = sum(sum(row) for row in weights) + Fraction(int(rng.integers(0, 6)))
    if total == 0:
        total = Fraction(1)
        weights[0][sizes[0]] = Fraction(1)
    theta = [[w / total for w in row] for row in weights]
    theta0 = 1 - sum(sum(row) for row in theta)
    prices = sorted((Fraction(int(rng.integers(1, 20)), 4) for _ in range(m)), reverse=True)
    disc = DiscretizedInstance(np.array([[float(x) for x in row] for row in theta]),
                               float(theta0), periods, W, [float(p) for p in prices])
    return theta, theta0, prices, disc


def test_one_period_boundary():
    d = DiscretizedInstance.from_theta([[0.5]], [1.0], periods=1, W=1)
    assert solve_dp(d).V(1, 1) == pytest.approx(0.5)


def test_two_period_hand_recursion():
    d = DiscretizedInstance.from_theta([[0.5]], [1.0], periods=2, W=1)
    table = solve_dp(d)
    assert table.V(1, 1) == pytest.approx(0.75)
    assert accept(table, 1, 1, 0, 1)


def test_two_class_example_against_policy_enumeration():
    theta = [[Fraction(0), Fraction(1, 2), Fraction(0), Fraction(0)],
             [Fraction(0), Fraction(1, 2), Fraction(0), Fraction(0)]]
    prices = [Fraction(1), Fraction(1, 2)]
    best = enumerate_policies(theta, Fraction(0), prices, 2, 2)
    d = DiscretizedInstance.from_theta([[0.5], [0.5]], [1.0, 0.5], periods=2, W=2)
    assert solve_dp(d).optimal_value == pytest.approx(float(best), abs=1e-15)


@pytest.mark.parametrize("periods, W, m", list(itertools.product(range(1, 4), range(0, 3), (1, 2))))
def test_matches_brute_force_policy_search(periods, W, m):
    rng = np.random.default_rng(100 * periods + 10 * W + m)
    for unit in (True, False):
        if not unit and periods * W > 4:
            continue                      # too many batch policies to enumerate
        theta, theta0, prices, disc = _rational_instance(rng, m, W, periods, unit)
        best = enumerate_policies(theta, theta0, prices, periods, W)
        assert best == expectimax(theta, theta0, prices, periods, W)
        assert solve_dp(disc).optimal_value == pytest.approx(float(best), abs=1e-12)


def test_value_table_matches_expectimax_everywhere():
    rng = np.random.default_rng(5)
    theta, theta0, prices, disc = _rational_instance(rng, 2, 3, 4, unit=False)
    table = solve_dp(disc)
    for n in range(1, 5):
        for d in range(4):
            exact = expectimax(theta, theta0, prices, 4 - n + 1, d)
            assert table.V(n, d) == pytest.approx(float(exact), abs=1e-12)


def test_accept_rule_rejects_what_does_not_fit():
    d = DiscretizedInstance.from_theta([[0.2, 0.2]], [1.0], periods=3, W=2)
    table = solve_dp(d)
    assert not accept(table, 1, 1, 0, 2)
    assert not accept(table, 1, 0, 0, 1)
    with pytest.raises(ValueError):
        accept(table, 4, 1, 0, 1)


@pytest.mark.parametrize("seed", range(10))
def test_structure_on_random_unit_instances(seed):
    rng = np.random.default_rng(seed)
    inst = random_unit_instance(rng, W_max=20, T_max=10.0)
    table = solve_dp(discretize(inst))
    prof = extract_thresholds(table)
    assert prof.violations == ()
    rep = structure_report(table)
    assert rep["concavity"] <= 1e-9
    assert rep["submodularity"] <= 1e-9
    assert rep["decreasing_in_d"] <= 1e-12
    assert rep["increasing_in_n"] <= 1e-12


def test_thresholds_checked_independently():
    inst = ProblemInstance.build([1.0, 0.7, 0.4], [0.3, 0.5, 0.6], 8, 12.0)
    table = solve_dp(discretize(inst, 0.25))
    t = extract_thresholds(table).t
    T_d = table.periods
    for k in range(3):
        for d in range(1, 9):
            acc = [accept(table, n, d, k, 1) for n in range(1, T_d + 1)]
            first = acc.index(True) + 1 if True in acc else T_d + 1
            assert t[k, d] == first
    assert np.all(np.diff(t[:, 1:], axis=0) >= 0)          # cheaper classes open later
    assert np.all(np.diff(t[:, 1:], axis=1) <= 0)          # more stock opens earlier
    assert np.all(t[0, 1:] == 1)                            # top class always accepted


def test_thresholds_need_unit_orders():
    d = DiscretizedInstance.from_theta([[0.1, 0.1]], [1.0], periods=2, W=2)
    with pytest.raises(ValueError):
        extract_thresholds(solve_dp(d))


def test_fine_dp_converges_to_continuous_value():
    inst = ProblemInstance.build([1.0, 0.6], [0.5, 1.0], 6, 8.0)
    cont = solve_continuous(inst).optimal_value
    errs = [abs(solve_dp(discretize(inst, 8.0 / n)).optimal_value - cont) for n in (40, 80, 160, 320)]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-2
    # first order in delta
    assert errs[-2] / errs[-1] == pytest.approx(2.0, rel=0.05)


def test_batch_dp_matches_continuous_limit():
    from stochknap.model import BatchDistribution
    inst = ProblemInstance.build([1.0, 0.5], [0.3, 0.6], 5, 6.0,
                                 batch=BatchDistribution([0.1, 0.5, 0.3, 0.1]))
    cont = solve_continuous(inst).optimal_value
    coarse, fine = (solve_dp(discretize(inst, 6.0 / n)).optimal_value for n in (300, 600))
    assert fine == pytest.approx(cont, abs=3e-3)
    assert 2 * fine - coarse == pytest.approx(cont, abs=1e-4)


def test_value_csv(tmp_path):
    d = DiscretizedInstance.from_theta([[0.5]], [1.0], periods=2, W=1)
    path = tmp_path / "v.csv"
    write_value_csv(solve_dp(d), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "n,d,value"
    assert "1,1,0.75" in lines
    assert len(lines) == 1 + 3 * 2
