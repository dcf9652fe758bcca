"""Super-replication under cone constraints and the optional decomposition."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._lp import solve_lp
from .dual_domain import PolyhedralCone, max_pairing
from .errors import DimensionMismatch, InfeasibleDualDomain, NodeDecompositionFailure
from .market import ScenarioTree, Strategy, TradingCone, gains_matrix

API_TOL = 1e-8
NODE_TOL = 1e-9


@dataclass(frozen=True)
class Superreplication:
    feasible: bool
    witness: Strategy | None
    shortfall: float  # min over strategies of max_leaf (R - gains)


@dataclass(frozen=True, eq=False)
class DecompositionResult:
    V: np.ndarray
    H: Strategy
    C: np.ndarray
    root: int = 0

    @property
    def V0(self) -> float:
        return float(self.V[self.root])


def _claim(tree: ScenarioTree, R) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if R.shape != (tree.n_leaves,):
        raise DimensionMismatch(f"claim of shape {R.shape} for {tree.n_leaves} leaves")
    return R


def superreplicable_primal(tree: ScenarioTree, cone: TradingCone, R, tol: float = API_TOL) -> Superreplication:
    """Is ``R <= (H.S)_T`` for some cone-valued ``H``?

    Solves ``min s`` subject to ``R - A mu <= s``, ``mu >= 0``, ``s >= -1``,
    whose value is the zero-capital shortfall of ``R``.
    """
    R = _claim(tree, R)
    A = gains_matrix(tree, cone)
    L, n = A.shape
    c = np.zeros(n + 1)
    c[-1] = 1.0
    A_ub = np.hstack([-A, -np.ones((L, 1))])
    res = solve_lp(c, A_ub=A_ub, b_ub=-R, bounds=[(0, None)] * n + [(-1.0, None)])
    if not res.ok:
        raise RuntimeError(f"super-replication LP failed: {res.message}")
    s = res.x[-1]
    feasible = s <= tol
    witness = Strategy.from_weights(tree, cone, np.clip(res.x[:n], 0, None)) if feasible else None
    return Superreplication(bool(feasible), witness, float(s))


def superrep_price(dc: PolyhedralCone, tree: ScenarioTree | None, R) -> float:
    return max_pairing(dc, R)[0]


def superreplicable_dual(dc: PolyhedralCone, tree: ScenarioTree | None, R, tol: float = API_TOL) -> bool:
    return superrep_price(dc, tree, R) <= tol


def _local_price(steps: np.ndarray, values: np.ndarray) -> float:
    """``max q @ values`` over one-step weights with ``q @ (k_i . dS) <= 0``."""
    r = len(values)
    res = solve_lp(
        -values,
        A_ub=steps if steps.size else None,
        b_ub=np.zeros(steps.shape[0]) if steps.size else None,
        A_eq=np.ones((1, r)), b_eq=[1.0], bounds=[(0, None)] * r,
    )
    if not res.ok:
        raise InfeasibleDualDomain("a node admits no one-step supermartingale weights")
    return -res.value


def _local_hedge(steps: np.ndarray, v0: float, values: np.ndarray, node: int) -> np.ndarray:
    """Smallest generator weights with ``v0 + mu @ steps[:, c] >= values[c]``."""
    m, r = steps.shape
    if m == 0:
        if np.max(values) > v0 + NODE_TOL:
            raise NodeDecompositionFailure(f"node {node}: no hedge in the trivial cone")
        return np.zeros(0)
    # phase 1: the smallest uniform shortfall
    c = np.zeros(m + 1)
    c[-1] = 1.0
    A_ub = np.hstack([-steps.T, -np.ones((r, 1))])
    b_ub = v0 - values
    res = solve_lp(c, A_ub=A_ub, b_ub=b_ub, bounds=[(0, None)] * m + [(None, None)])
    if not res.ok or res.x[-1] > NODE_TOL * max(1.0, abs(v0)):
        raise NodeDecompositionFailure(f"node {node}: value {v0} cannot be hedged")
    slack = max(res.x[-1], 0.0)
    # phase 2: least total weight among hedges
    res2 = solve_lp(np.ones(m), A_ub=-steps.T, b_ub=b_ub + slack, bounds=[(0, None)] * m)
    return res2.x if res2.ok else res.x[:m]


def decompose_claim(dc: PolyhedralCone, tree: ScenarioTree, cone: TradingCone, R) -> DecompositionResult:
    """``V = V0 + H.S - C`` with ``V_T = R`` and ``V`` the super-replication value.

    Backward recursion over one-step supermartingale weights, then a per-node
    hedge; the consumption increment on each branch is the hedge's slack.
    """
    R = _claim(tree, R)
    max_pairing(dc, np.zeros(tree.n_leaves))  # raises on an empty dual domain
    V = np.zeros(tree.n_nodes)
    V[tree.leaves] = R
    H = np.zeros((tree.n_nodes, tree.d))
    for node in sorted(tree.nonterminal, key=lambda v: -tree.t[v]):
        kids = list(tree.children[node])
        dS = tree.prices[kids] - tree.prices[node]
        steps = cone.generators @ dS.T  # (m, r)
        if not np.any(steps):
            steps = np.zeros((0, len(kids)))
        V[node] = _local_price(steps, V[kids])
        mu = _local_hedge(steps, V[node], V[kids], node)
        H[node] = mu @ cone.generators if mu.size else 0.0
    C = np.zeros(tree.n_nodes)
    for node in tree.topological_order():
        p = tree.parent[node]
        if p >= 0:
            C[node] = C[p] + V[p] + H[p] @ (tree.prices[node] - tree.prices[p]) - V[node]
    return DecompositionResult(V, Strategy(H), C, tree.root)
