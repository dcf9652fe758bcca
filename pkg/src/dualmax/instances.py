"""Reference markets and a seeded generator of small random instances."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .dual_domain import build_dual_cone, endowment_bound
from .market import ScenarioTree, TradingCone, build_market, gains_matrix
from .utility import PiecewiseUtility, kink_utility, log_utility, power_utility

SEED_ENV = "DUALMAX_SEED"


def one_period(s0, ups, probs, generators, d=1) -> dict:
    """Raw description of a one-period tree with one child per ``ups`` entry."""
    nodes = [{"id": 0, "parent": None, "t": 0, "prob": 1.0, "prices": list(np.atleast_1d(s0))}]
    for i, (s, p) in enumerate(zip(ups, probs), start=1):
        nodes.append({"id": i, "parent": 0, "t": 1, "prob": p, "prices": list(np.atleast_1d(s))})
    return {"d": d, "T": 1, "nodes": nodes, "cone": {"generators": generators}}


def bin1_raw() -> dict:
    return one_period(1.0, [2.0, 0.5], [0.5, 0.5], [[1.0], [-1.0]])


def bin2_raw() -> dict:
    return one_period(1.0, [1.1, 0.5], [0.5, 0.5], [[1.0]])


def arbitrage_raw() -> dict:
    return one_period(1.0, [2.0, 1.5], [0.5, 0.5], [[1.0], [-1.0]])


def bin1_two_period_raw() -> dict:
    """Recombining-factor binomial (x2 up, x0.5 down) over two periods."""
    nodes = [{"id": 0, "parent": None, "t": 0, "prob": 1.0, "prices": [1.0]}]
    nid = 1
    level = [(0, 1.0)]
    for t in (1, 2):
        nxt = []
        for parent, s in level:
            for f in (2.0, 0.5):
                nodes.append({"id": nid, "parent": parent, "t": t, "prob": 0.5, "prices": [s * f]})
                nxt.append((nid, s * f))
                nid += 1
        level = nxt
    return {"d": 1, "T": 2, "nodes": nodes, "cone": {"generators": [[1.0], [-1.0]]}}


def bin1():
    return build_market(bin1_raw())


def bin2():
    return build_market(bin2_raw())


def arbitrage():
    return build_market(arbitrage_raw())


BIN3_ENDOWMENT = (1.0, 0.0)


@dataclass(frozen=True, eq=False)
class Instance:
    tree: ScenarioTree
    cone: TradingCone
    utility: PiecewiseUtility
    endowment: np.ndarray
    wealth: float
    label: str = ""


def seed_from_env(default: int = 20240611) -> int:
    return int(os.environ.get(SEED_ENV, default))


def random_tree_raw(rng: np.random.Generator, max_periods=3, max_branches=3, max_d=2, d=None) -> dict:
    """Random tree whose prices are martingales under random branch weights.

    Each node's child prices are ``S * f / (q @ f)`` with positive factors
    ``f``, so the weights ``q`` form a martingale measure and no cone can
    create an arbitrage.
    """
    T = int(rng.integers(1, max_periods + 1))
    d = int(d if d is not None else rng.integers(1, max_d + 1))
    nodes = [{"id": 0, "parent": None, "t": 0, "prob": 1.0,
              "prices": list(rng.uniform(0.5, 2.0, size=d))}]
    level = [0]
    for t in range(1, T + 1):
        nxt = []
        for parent in level:
            r = int(rng.integers(2, max_branches + 1))
            p = rng.dirichlet(np.full(r, 2.0)) * 0.9 + 0.1 / r
            q = rng.dirichlet(np.full(r, 2.0)) * 0.9 + 0.1 / r
            s0 = np.asarray(nodes[parent]["prices"])
            f = rng.uniform(0.6, 1.6, size=(r, d))
            f = f / (q @ f)
            for c in range(r):
                nodes.append({"id": len(nodes), "parent": parent, "t": t,
                              "prob": float(p[c]), "prices": list(s0 * f[c])})
                nxt.append(len(nodes) - 1)
        level = nxt
    # renormalise so sibling probabilities sum to one in floating point
    by_parent = {}
    for nd in nodes[1:]:
        by_parent.setdefault(nd["parent"], []).append(nd)
    for kids in by_parent.values():
        total = sum(nd["prob"] for nd in kids)
        for nd in kids:
            nd["prob"] = nd["prob"] / total
        kids[-1]["prob"] = 1.0 - sum(nd["prob"] for nd in kids[:-1])
    return {"d": d, "T": T, "nodes": nodes, "cone": {"generators": random_generators(rng, d)}}


def random_small_tree_raw(rng: np.random.Generator, max_leaves=4, max_dim=4, min_spread=0.05) -> dict:
    """A random tree small enough for the brute-force oracles.

    Trees whose assets move almost collinearly are skipped: their optimal
    holdings are huge and no bounded holdings grid resolves them.
    """
    while True:
        raw = random_tree_raw(rng, max_periods=2, max_branches=3, max_d=2)
        tree, _ = build_market(raw)
        if tree.n_leaves > max_leaves or len(tree.nonterminal) * tree.d > max_dim:
            continue
        if all(_spread(tree, node) >= min_spread for node in tree.nonterminal):
            return raw


def _spread(tree: ScenarioTree, node: int) -> float:
    """Smallest relative singular value of the one-step price moves at ``node``."""
    steps = tree.prices[list(tree.children[node])] - tree.prices[node]
    sv = np.linalg.svd(steps, compute_uv=False)
    return float(sv[-1] / sv[0]) if sv.size and sv[0] > 0 else 0.0


def random_generators(rng: np.random.Generator, d: int) -> list[list[float]]:
    if d == 1:
        choices = [[[1.0], [-1.0]], [[1.0]], [[-1.0]], [[2.0], [-0.5]]]
        return choices[int(rng.integers(len(choices)))]
    kind = int(rng.integers(5))
    if kind == 0:  # unconstrained
        return [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]
    if kind == 1:  # no short selling
        return [[1.0, 0.0], [0.0, 1.0]]
    if kind == 2:  # short the second asset only, first free
        return [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]]
    m = int(rng.integers(1, 4))
    return [list(v) for v in rng.normal(size=(m, d))]


def random_utility(rng: np.random.Generator) -> PiecewiseUtility:
    kind = int(rng.integers(3))
    if kind == 0:
        return log_utility()
    if kind == 1:
        return power_utility(float(rng.uniform(0.2, 0.8)))
    return kink_utility()


def random_instance(rng: np.random.Generator, small: bool = False, label: str = "") -> Instance:
    """Random market, utility and bounded endowment, with wealth strictly
    above the endowment bound by ``uniform(0.1, 2)``."""
    raw = random_small_tree_raw(rng) if small else random_tree_raw(rng)
    tree, cone = build_market(raw)
    U = random_utility(rng)
    B = rng.uniform(-0.5, 0.5, size=tree.n_leaves)
    x = endowment_bound(build_dual_cone(tree, cone), tree, B) + rng.uniform(0.1, 2.0)
    return Instance(tree, cone, U, B, float(x), label)


def random_claim(rng: np.random.Generator, tree: ScenarioTree, cone: TradingCone) -> np.ndarray:
    """A claim that is super-replicable about half the time.

    Half of the draws sit just below the gains of a random cone strategy,
    the rest are shifted up by a random positive amount.
    """
    A = gains_matrix(tree, cone)
    R = A @ rng.exponential(size=A.shape[1]) - rng.uniform(0.0, 0.5, size=tree.n_leaves)
    if rng.random() < 0.5:
        R = R + rng.uniform(0.01, 1.0)
    return R
