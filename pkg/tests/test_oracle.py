import math

import numpy as np
import pytest

from dualmax.dual_domain import PolyhedralCone, build_dual_cone
from dualmax.errors import DimensionTooLarge, EmptyFeasibleGrid
from dualmax.instances import bin1_two_period_raw, random_tree_raw
from dualmax.market import build_market
from dualmax.oracle import GridSpec, brute_conjugate, brute_dual, brute_primal
from dualmax.utility import power_utility

BIN1_U = 0.5 * math.log(9 / 8)


def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec((0.0,), (1.0,), (2,))
    with pytest.raises(ValueError):
        GridSpec((0.0,), (math.inf,), (5,))
    with pytest.raises(ValueError):
        GridSpec((1.0,), (0.0,), (5,))
    g = GridSpec((-1.0, 0.0), (1.0, 2.0), (5, 3))
    assert g.dim == 2
    assert [len(a) for a in g.axes()] == [5, 3]


def test_bin1_primal_fine_grid(bin1_market, log_u):
    res = brute_primal(*bin1_market, log_u, np.zeros(2), 1.0, GridSpec((-1.0,), (2.0,), (100_001,)))
    assert abs(res.value - BIN1_U) <= 1e-5
    assert res.point[0, 0] == pytest.approx(0.5, abs=1e-4)


def test_bin2_primal(bin2_market, log_u):
    res = brute_primal(*bin2_market, log_u, np.zeros(2), 1.0)
    assert abs(res.value) <= 1e-6


def test_grid_outside_cone(bin2_market, log_u):
    with pytest.raises(EmptyFeasibleGrid):
        brute_primal(*bin2_market, log_u, np.zeros(2), 1.0, GridSpec((-2.0,), (-1.0,), (11,)))


def test_bin1_dual(bin1_market, bin1_dc, log_u):
    res = brute_dual(bin1_market[0], bin1_dc, log_u, np.zeros(2), 1.0)
    assert abs(res.value - BIN1_U) <= 1e-4
    assert res.value >= BIN1_U - 1e-12  # a grid can only overestimate the infimum


def test_bin3_dual(bin1_market, bin1_dc, log_u, bin3_endowment):
    res = brute_dual(bin1_market[0], bin1_dc, log_u, bin3_endowment, 1.0)
    assert abs(res.value + 0.5 * math.log(2)) <= 1e-4
    np.testing.assert_allclose(res.point / bin1_dc.probs, [1.0, 2.0], atol=1e-2)


def test_dual_grid_with_every_row_violated(log_u):
    dc = PolyhedralCone(np.array([[1.0, 1.0]]), np.array([0.5, 0.5]))
    with pytest.raises(EmptyFeasibleGrid):
        brute_dual(None, dc, log_u, np.zeros(2), 1.0, GridSpec((0.1, 0.1), (1.0, 1.0), (5, 5)))


def test_dimension_limits(rng, log_u):
    tree, cone = build_market(random_tree_raw(rng, max_periods=3, max_branches=3, max_d=2, d=2))
    while len(tree.nonterminal) * tree.d <= 4:
        tree, cone = build_market(random_tree_raw(rng, d=2))
    B = np.zeros(tree.n_leaves)
    with pytest.raises(DimensionTooLarge):
        brute_primal(tree, cone, log_u, B, 1.0)
    with pytest.raises(DimensionTooLarge):
        brute_dual(tree, build_dual_cone(tree, cone), log_u, B, 1.0)


def test_two_period_frozen(log_u):
    tree, cone = build_market(bin1_two_period_raw())
    p = brute_primal(tree, cone, log_u, np.zeros(4), 1.0)
    d = brute_dual(tree, build_dual_cone(tree, cone), log_u, np.zeros(4), 1.0)
    assert abs(p.value - math.log(9 / 8)) <= p.error + 1e-9
    assert abs(d.value - math.log(9 / 8)) <= d.error + 1e-9


def test_kink_and_power_frozen(bin1_market, bin2_market, kink, bin3_endowment):
    assert brute_primal(*bin1_market, kink, np.zeros(2), 1.0).value == pytest.approx(2.0, abs=1e-6)
    assert brute_primal(*bin2_market, power_utility(0.5), np.zeros(2), 1.0).value == pytest.approx(2.0, abs=1e-6)
    res = brute_primal(*bin1_market, kink, bin3_endowment, 2.0)
    assert res.value == pytest.approx((3 + math.sqrt(3)) / 2, abs=1e-6)


def test_conjugate_grid(log_u):
    est = brute_conjugate(log_u, 1.0)
    assert est.value == pytest.approx(-1.0, abs=1e-6)
    assert est.lo == pytest.approx(1.0, rel=1e-3) and est.hi == pytest.approx(1.0, rel=1e-3)
    with pytest.raises(ValueError):
        brute_conjugate(log_u, 0.0)


def test_kink_conjugate_grid(kink):
    est = brute_conjugate(kink, 0.75)
    assert est.value == pytest.approx(1.25, abs=1e-6)
    assert est.lo <= 1.0 <= est.hi
