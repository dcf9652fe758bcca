import copy

import numpy as np
import pytest

from dualmax.errors import DimensionMismatch, MissingNode, NonPositivePrice, ProbabilityNotNormalized, RaggedTree
from dualmax.instances import bin1_raw, bin1_two_period_raw, bin2_raw
from dualmax.market import (
    Strategy,
    TradingCone,
    build_market,
    cone_contains,
    gains_matrix,
    gains_process,
    is_admissible,
    terminal_gains,
)


def test_bin1_builds_three_nodes():
    tree, cone = build_market(bin1_raw())
    assert tree.n_nodes == 3
    assert list(tree.leaves) == [1, 2]
    assert tree.T == 1 and tree.d == 1
    np.testing.assert_allclose(tree.path_prob, [0.5, 0.5])
    assert cone.m == 2


def test_probabilities_must_sum_to_one():
    raw = bin1_raw()
    raw["nodes"][2]["prob"] = 0.6
    with pytest.raises(ProbabilityNotNormalized, match="0"):
        build_market(raw)


def test_zero_price_rejected_with_node():
    raw = bin1_raw()
    raw["nodes"][2]["prices"] = [0.0]
    with pytest.raises(NonPositivePrice, match="2"):
        build_market(raw)


def test_leaves_before_horizon_are_ragged():
    raw = bin1_two_period_raw()
    raw["nodes"] = [nd for nd in raw["nodes"] if nd["parent"] != 2]
    with pytest.raises(RaggedTree):
        build_market(raw)


def test_orthant_membership():
    orthant = TradingCone([[1.0, 0.0], [0.0, 1.0]])
    assert cone_contains(orthant, [2.0, 3.0])
    assert not cone_contains(orthant, [-1.0, 0.0])
    with pytest.raises(DimensionMismatch):
        cone_contains(orthant, [1.0])


def test_ray_membership():
    ray = TradingCone([[1.0, -1.0]])
    assert cone_contains(ray, [2.0, -2.0])
    assert not cone_contains(ray, [2.0, -1.0])
    assert cone_contains(ray, [0.0, 0.0])


def test_one_step_gains():
    tree, _ = build_market(bin1_raw())
    g = gains_process(tree, Strategy.constant(tree, 0.5))
    np.testing.assert_allclose(g, [0.0, 0.5, -0.25])
    assert not np.any(gains_process(tree, Strategy.constant(tree, 0.0)))


def test_two_period_telescoping():
    tree, _ = build_market(bin1_two_period_raw())
    g = gains_process(tree, Strategy.constant(tree, 1.0))
    up_up = [v for v in tree.leaves if np.isclose(tree.prices[v][0], 4.0)]
    assert g[up_up[0]] == pytest.approx(3.0)
    # H = 1 gains are S_T - S_0 on every path
    np.testing.assert_allclose(terminal_gains(tree, Strategy.constant(tree, 1.0)), tree.prices[tree.leaves, 0] - 1.0)


def test_undefined_holdings_raise():
    tree, _ = build_market(bin1_raw())
    with pytest.raises(MissingNode):
        gains_process(tree, Strategy.from_mapping(tree, {}))


@pytest.mark.parametrize("h, floor, ok", [(0.5, 1.0, True), (10.0, 1.0, False)])
def test_admissibility_floor(h, floor, ok):
    tree, cone = build_market(bin1_raw())
    passed, reasons = is_admissible(tree, cone, Strategy.constant(tree, h), floor)
    assert passed is ok
    assert bool(reasons) is not ok


def test_admissibility_cone():
    tree, cone = build_market(bin2_raw())
    passed, reasons = is_admissible(tree, cone, Strategy.constant(tree, -1.0))
    assert not passed
    assert "cone" in reasons[0]


def test_gains_matrix_columns():
    tree, cone = build_market(bin1_two_period_raw())
    A = gains_matrix(tree, cone)
    assert A.shape == (4, 3 * 2)
    mu = np.arange(6, dtype=float)
    H = Strategy.from_weights(tree, cone, mu)
    np.testing.assert_allclose(A @ mu, terminal_gains(tree, H))


def test_raw_model_not_mutated():
    raw = bin1_raw()
    before = copy.deepcopy(raw)
    build_market(raw)
    assert raw == before
