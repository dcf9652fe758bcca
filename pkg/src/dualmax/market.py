"""Finite scenario-tree market: tree, trading cone, strategies and gains."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import nnls

from .errors import (
    DimensionMismatch,
    MissingNode,
    NonPositivePrice,
    ProbabilityNotNormalized,
    RaggedTree,
)

PROB_TOL = 1e-12
CONE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ScenarioTree:
    """Rooted tree with flat node arrays; node ids are dense ``0..N-1``.

    ``prob[n]`` is the conditional probability of reaching ``n`` from its
    parent (1.0 at the root). ``prices`` has shape ``(N, d)``.
    """

    parent: np.ndarray
    t: np.ndarray
    prob: np.ndarray
    prices: np.ndarray
    children: tuple = field(init=False)
    leaves: np.ndarray = field(init=False)
    nonterminal: np.ndarray = field(init=False)
    leaf_index: dict = field(init=False)
    path_prob: np.ndarray = field(init=False)

    def __post_init__(self):
        n = len(self.parent)
        kids = [[] for _ in range(n)]
        for node in range(n):
            p = self.parent[node]
            if p >= 0:
                kids[p].append(node)
        set_ = object.__setattr__
        set_(self, "children", tuple(tuple(k) for k in kids))
        leaves = np.array([v for v in range(n) if not kids[v]], dtype=int)
        set_(self, "leaves", leaves)
        set_(self, "nonterminal", np.array([v for v in range(n) if kids[v]], dtype=int))
        set_(self, "leaf_index", {int(v): i for i, v in enumerate(leaves)})
        # absolute node probabilities, parents always precede children in topo order
        absolute = np.ones(n)
        for node in self.topological_order():
            p = self.parent[node]
            if p >= 0:
                absolute[node] = absolute[p] * self.prob[node]
        set_(self, "path_prob", absolute[leaves])
        for arr in (self.parent, self.t, self.prob, self.prices):
            arr.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return len(self.parent)

    @property
    def d(self) -> int:
        return self.prices.shape[1]

    @property
    def root(self) -> int:
        return int(np.flatnonzero(self.parent < 0)[0])

    @property
    def T(self) -> int:
        return int(self.t.max())

    @property
    def n_leaves(self) -> int:
        return len(self.leaves)

    def topological_order(self) -> list[int]:
        return sorted(range(len(self.parent)), key=lambda v: (self.t[v], v))

    def leaves_under(self, node: int) -> list[int]:
        """Leaf ids in the subtree rooted at ``node``."""
        out, stack = [], [node]
        while stack:
            v = stack.pop()
            if self.children[v]:
                stack.extend(self.children[v])
            else:
                out.append(v)
        return sorted(out)

    def claim(self, values: Mapping[int, float] | Sequence[float]) -> np.ndarray:
        """Leaf-ordered claim vector from a ``{leaf_id: value}`` map or a sequence."""
        if isinstance(values, Mapping):
            out = np.empty(self.n_leaves)
            for leaf, i in self.leaf_index.items():
                if leaf not in values and str(leaf) not in values:
                    raise MissingNode(f"claim has no value for leaf {leaf}")
                out[i] = float(values[leaf] if leaf in values else values[str(leaf)])
            return out
        out = np.asarray(values, dtype=float)
        if out.shape != (self.n_leaves,):
            raise DimensionMismatch(
                f"claim has length {out.shape}, tree has {self.n_leaves} leaves"
            )
        return out


@dataclass(frozen=True, eq=False)
class TradingCone:
    """Polyhedral cone ``{sum_i mu_i k_i : mu >= 0}``; generators are rows."""

    generators: np.ndarray

    def __post_init__(self):
        g = np.atleast_2d(np.asarray(self.generators, dtype=float))
        if g.shape[0] < 1:
            raise ValueError("a trading cone needs at least one generator")
        g.setflags(write=False)
        object.__setattr__(self, "generators", g)

    @property
    def m(self) -> int:
        return self.generators.shape[0]

    @property
    def d(self) -> int:
        return self.generators.shape[1]

    def combine(self, mu: np.ndarray) -> np.ndarray:
        return np.asarray(mu) @ self.generators


@dataclass(frozen=True, eq=False)
class Strategy:
    """Holdings per node, shape ``(N, d)``; rows of terminal nodes are unused.

    ``H[n]`` is held over the step from ``n`` to its children. NaN marks an
    undefined node.
    """

    holdings: np.ndarray

    @classmethod
    def constant(cls, tree: ScenarioTree, h) -> "Strategy":
        h = np.broadcast_to(np.asarray(h, dtype=float), (tree.d,))
        return cls(np.tile(h, (tree.n_nodes, 1)))

    @classmethod
    def from_mapping(cls, tree: ScenarioTree, mapping: Mapping[int, Sequence[float]]) -> "Strategy":
        H = np.full((tree.n_nodes, tree.d), np.nan)
        for node, h in mapping.items():
            H[int(node)] = np.broadcast_to(np.asarray(h, dtype=float), (tree.d,))
        return cls(H)

    @classmethod
    def from_weights(cls, tree: ScenarioTree, cone: TradingCone, mu: np.ndarray) -> "Strategy":
        """Strategy from generator weights laid out as ``mu[a*m + i]``."""
        mu = np.asarray(mu, dtype=float).reshape(len(tree.nonterminal), cone.m)
        H = np.zeros((tree.n_nodes, tree.d))
        H[tree.nonterminal] = mu @ cone.generators
        return cls(H)

    def __getitem__(self, node):
        return self.holdings[node]


def build_market(raw: Mapping) -> tuple[ScenarioTree, TradingCone | None]:
    """Validate a raw model description (parsed JSON) into a tree and cone."""
    d = int(raw["d"])
    nodes = sorted(raw["nodes"], key=lambda nd: int(nd["id"]))
    n = len(nodes)
    ids = [int(nd["id"]) for nd in nodes]
    if ids != list(range(n)):
        raise RaggedTree(f"node ids must be dense 0..{n - 1}, got {ids}")
    parent = np.full(n, -1, dtype=int)
    t = np.zeros(n, dtype=int)
    prob = np.ones(n)
    prices = np.zeros((n, d))
    roots = []
    for nd in nodes:
        i = int(nd["id"])
        if nd.get("parent") is None:
            roots.append(i)
        else:
            parent[i] = int(nd["parent"])
            if not 0 <= parent[i] < n or parent[i] == i:
                raise RaggedTree(f"node {i} has invalid parent {parent[i]}", node=i)
            prob[i] = float(nd["prob"])
        t[i] = int(nd["t"])
        px = np.asarray(nd["prices"], dtype=float).reshape(-1)
        if px.shape != (d,):
            raise RaggedTree(f"node {i} has {px.size} prices, expected {d}", node=i)
        if not np.all(px > 0) or not np.all(np.isfinite(px)):
            raise NonPositivePrice(f"node {i} has a non-positive price {px.tolist()}", node=i)
        prices[i] = px
    if len(roots) != 1:
        raise RaggedTree(f"expected exactly one root, found {roots}")
    root = roots[0]
    if t[root] != 0:
        raise RaggedTree(f"root {root} must sit at t=0", node=root)
    T = int(raw.get("T", t.max()))
    kids = [[] for _ in range(n)]
    for i in range(n):
        if parent[i] >= 0:
            if t[i] != t[parent[i]] + 1:
                raise RaggedTree(f"node {i} is not one step after its parent", node=i)
            kids[parent[i]].append(i)
    # reachability (rules out parent cycles)
    seen, stack = {root}, [root]
    while stack:
        for c in kids[stack.pop()]:
            seen.add(c)
            stack.append(c)
    if len(seen) != n:
        raise RaggedTree(f"nodes {sorted(set(range(n)) - seen)} are unreachable from the root")
    for i in range(n):
        if kids[i]:
            ps = prob[kids[i]]
            bad = [c for c in kids[i] if not prob[c] > 0]
            if bad:
                raise ProbabilityNotNormalized(
                    f"branch into node {bad[0]} has non-positive probability", node=bad[0]
                )
            if abs(ps.sum() - 1.0) > PROB_TOL:
                raise ProbabilityNotNormalized(
                    f"children of node {i} have probabilities summing to {ps.sum()!r}", node=i
                )
        elif t[i] != T:
            raise RaggedTree(f"terminal node {i} sits at t={t[i]}, expected T={T}", node=i)
    tree = ScenarioTree(parent=parent, t=t, prob=prob, prices=prices)
    cone = None
    if raw.get("cone") is not None:
        cone = TradingCone(np.asarray(raw["cone"]["generators"], dtype=float).reshape(-1, d))
    return tree, cone


def cone_contains(cone: TradingCone, v, tol: float = CONE_TOL) -> bool:
    """Whether ``v`` is a nonnegative combination of the cone generators.

    Decided by nonnegative least squares: ``v`` is in the cone iff the residual
    of ``min ||G^T mu - v||`` over ``mu >= 0`` vanishes.
    """
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape != (cone.d,):
        raise DimensionMismatch(f"vector of dimension {v.size} tested against a cone in R^{cone.d}")
    if not np.any(v):
        return True
    _, resid = nnls(cone.generators.T, v)
    return bool(resid <= tol * max(1.0, float(np.abs(v).max())))


def gains_process(tree: ScenarioTree, H: Strategy) -> np.ndarray:
    """Gains ``(H.S)`` at every node, accumulated from the root."""
    hold = np.asarray(H.holdings, dtype=float)
    if hold.shape != (tree.n_nodes, tree.d):
        raise DimensionMismatch(f"strategy shape {hold.shape} != {(tree.n_nodes, tree.d)}")
    out = np.zeros(tree.n_nodes)
    for node in tree.topological_order():
        p = tree.parent[node]
        if p < 0:
            continue
        if np.any(np.isnan(hold[p])):
            raise MissingNode(f"strategy undefined at nonterminal node {p}")
        out[node] = out[p] + hold[p] @ (tree.prices[node] - tree.prices[p])
    return out


def terminal_gains(tree: ScenarioTree, H: Strategy) -> np.ndarray:
    return gains_process(tree, H)[tree.leaves]


def is_admissible(tree: ScenarioTree, cone: TradingCone, H: Strategy, floor: float = math.inf):
    """Return ``(ok, reasons)``: cone membership everywhere and gains >= -floor."""
    reasons = []
    for node in tree.nonterminal:
        if not cone_contains(cone, H[node]):
            reasons.append(f"H at node {node} is outside the trading cone")
    gains = gains_process(tree, H)
    if math.isfinite(floor):
        worst = int(np.argmin(gains))
        if gains[worst] < -floor:
            reasons.append(f"gain {gains[worst]:.6g} at node {worst} is below -{floor}")
    return not reasons, reasons


def gains_matrix(tree: ScenarioTree, cone: TradingCone) -> np.ndarray:
    """Terminal gains of the elementary strategies ``k_i`` held at one node.

    Column ``a*m + i`` is the gains of holding generator ``i`` at the ``a``-th
    nonterminal node only, so ``X = x + A @ mu`` for generator weights ``mu``.
    """
    cols = []
    for node in tree.nonterminal:
        for k in cone.generators:
            H = np.zeros((tree.n_nodes, tree.d))
            H[node] = k
            cols.append(terminal_gains(tree, Strategy(H)))
    return np.column_stack(cols) if cols else np.zeros((tree.n_leaves, 0))
