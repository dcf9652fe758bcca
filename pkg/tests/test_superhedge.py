import numpy as np
import pytest

from dualmax.dual_domain import build_dual_cone
from dualmax.errors import DimensionMismatch
from dualmax.instances import bin1_two_period_raw
from dualmax.market import Strategy, TradingCone, build_market, cone_contains, gains_process, terminal_gains
from dualmax.superhedge import decompose_claim, superrep_price, superreplicable_dual, superreplicable_primal


def test_call_needs_capital(bin1_market, bin1_dc):
    tree, cone = bin1_market
    R = np.array([1.0, 0.0])
    assert not superreplicable_primal(tree, cone, R).feasible
    assert not superreplicable_dual(bin1_dc, tree, R)
    assert superreplicable_dual(bin1_dc, tree, R - 1 / 3)
    assert superreplicable_primal(tree, cone, R - 1 / 3).feasible


def test_dominated_claim(bin1_market):
    tree, cone = bin1_market
    R = terminal_gains(tree, Strategy.constant(tree, 0.5)) - 0.1
    res = superreplicable_primal(tree, cone, R)
    assert res.feasible
    assert np.all(terminal_gains(tree, res.witness) >= R - 1e-9)


def test_negative_claims_free(bin2_market, bin2_dc):
    tree, cone = bin2_market
    res = superreplicable_primal(tree, cone, [-1.0, 0.0])
    assert res.feasible
    assert superreplicable_dual(bin2_dc, tree, np.zeros(2))


@pytest.mark.parametrize("fixture, claim, price, hedge", [
    ("bin1", (1.0, 0.0), 1 / 3, 2 / 3),
    ("bin2", (0.1, 0.0), 1 / 12, 1 / 6),
])
def test_prices_and_hedges(request, fixture, claim, price, hedge):
    tree, cone = request.getfixturevalue(f"{fixture}_market")
    dc = build_dual_cone(tree, cone)
    assert superrep_price(dc, tree, claim) == pytest.approx(price, abs=1e-12)
    dec = decompose_claim(dc, tree, cone, claim)
    assert dec.V0 == pytest.approx(price, abs=1e-12)
    assert dec.H[0][0] == pytest.approx(hedge, abs=1e-12)
    np.testing.assert_allclose(dec.C, 0.0, atol=1e-12)


def test_trivial_cone_price(bin1_market):
    tree, _ = bin1_market
    dc = build_dual_cone(tree, TradingCone([[0.0]]))
    assert superrep_price(dc, tree, [1.0, 0.0]) == pytest.approx(1.0)


def test_bin2_stock_attains_boundary(bin2_market, bin2_dc):
    tree, cone = bin2_market
    dec = decompose_claim(bin2_dc, tree, cone, tree.prices[tree.leaves, 0])
    assert dec.V0 == pytest.approx(1.0, abs=1e-12)
    assert dec.H[0][0] == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(dec.C, 0.0, atol=1e-12)


def test_two_period_decomposition_identity():
    tree, cone = build_market(bin1_two_period_raw())
    cone = TradingCone([[1.0]])  # long only: consumption can be forced
    dc = build_dual_cone(tree, cone)
    R = np.array([0.0, 2.0, 2.0, 0.0])
    dec = decompose_claim(dc, tree, cone, R)
    G = gains_process(tree, dec.H)
    np.testing.assert_allclose(dec.V, dec.V0 + G - dec.C, atol=1e-12)
    np.testing.assert_allclose(dec.V[tree.leaves], R)
    assert dec.V0 == pytest.approx(superrep_price(dc, tree, R), abs=1e-10)
    for node in tree.nonterminal:
        assert cone_contains(cone, dec.H[node])
        for child in tree.children[node]:
            assert dec.C[child] >= dec.C[node] - 1e-12


def test_shape_check(bin1_market):
    with pytest.raises(DimensionMismatch):
        superreplicable_primal(*bin1_market, [1.0, 2.0, 3.0])
