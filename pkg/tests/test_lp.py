import numpy as np
import pytest
from scipy.optimize import linprog as highs

from dvpp.errors import InfeasibleLP, UnboundedLP
from dvpp.lp import linprog


def test_small_textbook_problem():
    # max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18
    res = linprog([-3, -5], [[1, 0], [0, 2], [3, 2]], [4, 12, 18])
    assert res.fun == pytest.approx(-36.0)
    assert res.x == pytest.approx([2.0, 6.0])


def test_equality_and_bounds():
    res = linprog([1, 2], A_eq=[[1, 1]], b_eq=[10], bounds=[(0, 8), (1, None)])
    assert res.x == pytest.approx([8.0, 2.0])


def test_infeasible_and_unbounded():
    with pytest.raises(InfeasibleLP):
        linprog([1], A_eq=[[1]], b_eq=[5], bounds=[(0, 3)])
    with pytest.raises(UnboundedLP):
        linprog([-1, 0], [[0, 1]], [1])


def test_degenerate_problem_terminates():
    # Beale's cycling example
    c = [-0.75, 150, -0.02, 6]
    a = [[0.25, -60, -0.04, 9], [0.5, -90, -0.02, 3], [0, 0, 1, 0]]
    res = linprog(c, a, [0, 0, 1])
    assert res.fun == pytest.approx(-0.05)


def test_matches_highs_on_random_problems():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        n, m, me = rng.integers(2, 7), rng.integers(1, 6), rng.integers(0, 3)
        c = rng.normal(size=n)
        a_ub = rng.normal(size=(m, n))
        x0 = rng.uniform(0, 2, n)
        b_ub = a_ub @ x0 + rng.uniform(0, 1, m)
        a_eq = rng.normal(size=(me, n)) if me else None
        b_eq = a_eq @ x0 if me else None
        bounds = [(0.0, float(u)) for u in rng.uniform(2, 5, n)]
        ref = highs(c, a_ub, b_ub, a_eq, b_eq, bounds=bounds, method="highs")
        assert ref.status == 0
        got = linprog(c, a_ub, b_ub, a_eq, b_eq, bounds=bounds)
        assert got.fun == pytest.approx(ref.fun, abs=1e-7)
        assert np.all(a_ub @ got.x <= b_ub + 1e-7)
