"""Polyhedral description of the polar cone of super-replicable claims.

On a finite tree every admissible gains process is a conic combination of
elementary strategies (one generator held at one node), so a nonnegative
leaf measure ``nu`` lies in the polar cone iff it pairs nonpositively with
each elementary terminal gain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._lp import solve_lp
from .errors import DimensionMismatch, InfeasibleDualDomain
from .market import ScenarioTree, TradingCone

MEMBERSHIP_TOL = 1e-9
POSITIVITY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class DualMeasure:
    """Nonnegative weights on the leaves, with the leaf probabilities."""

    weights: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        if w.shape != p.shape:
            raise DimensionMismatch(f"{w.shape} weights for {p.shape} leaves")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_density(cls, density, probs) -> "DualMeasure":
        probs = np.asarray(probs, dtype=float)
        return cls(np.asarray(density, dtype=float) * probs, probs)

    @property
    def density(self) -> np.ndarray:
        return self.weights / self.probs

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    # The purely finitely additive part of a measure on a finite space is zero.
    singular_mass = 0.0


@dataclass(frozen=True, eq=False)
class PolyhedralCone:
    """Rows ``r`` with ``nu in M  <=>  nu >= 0 and rows @ nu <= 0``.

    Row ``a*m + i`` belongs to the ``a``-th nonterminal node and generator ``i``.
    """

    rows: np.ndarray
    probs: np.ndarray

    @property
    def n_leaves(self) -> int:
        return len(self.probs)


def build_dual_cone(tree: ScenarioTree, cone: TradingCone) -> PolyhedralCone:
    rows = []
    for node in tree.nonterminal:
        s0 = tree.prices[node]
        for k in cone.generators:
            row = np.zeros(tree.n_leaves)
            for child in tree.children[node]:
                step = float(k @ (tree.prices[child] - s0))
                for leaf in tree.leaves_under(child):
                    row[tree.leaf_index[leaf]] = step
            rows.append(row)
    R = np.array(rows).reshape(-1, tree.n_leaves)
    # the trivial cone {0} contributes only zero rows; drop them entirely
    if not np.any(R):
        R = np.zeros((0, tree.n_leaves))
    R.setflags(write=False)
    return PolyhedralCone(R, tree.path_prob.copy())


def _weights(dc: PolyhedralCone, nu) -> np.ndarray:
    w = nu.weights if isinstance(nu, DualMeasure) else np.asarray(nu, dtype=float)
    if w.shape != (dc.n_leaves,):
        raise DimensionMismatch(f"measure of shape {w.shape} for {dc.n_leaves} leaves")
    return w


def dual_contains(dc: PolyhedralCone, nu, tol: float = MEMBERSHIP_TOL) -> bool:
    return bool(dual_contains_many(dc, _weights(dc, nu)[None, :], tol)[0])


def dual_contains_many(dc: PolyhedralCone, nus: np.ndarray, tol: float = MEMBERSHIP_TOL) -> np.ndarray:
    """Row-wise membership test for a stack of measures, shape ``(n, leaves)``."""
    nus = np.asarray(nus, dtype=float)
    if nus.ndim != 2 or nus.shape[1] != dc.n_leaves:
        raise DimensionMismatch(f"measures of shape {nus.shape} for {dc.n_leaves} leaves")
    ok = np.all(nus >= 0, axis=1)
    if dc.rows.shape[0]:
        ok &= np.all(nus @ dc.rows.T <= tol, axis=1)
    return ok


def find_msup_element(dc: PolyhedralCone, tree: ScenarioTree | None = None) -> DualMeasure | None:
    """A strictly positive probability in the polar cone, or ``None``.

    Maximises the smallest leaf weight; ``None`` signals that the best
    achievable minimum weight is at most ``1e-10``.
    """
    L = dc.n_leaves
    # variables: nu (L), delta
    c = np.zeros(L + 1)
    c[-1] = -1.0
    A_ub = [np.hstack([dc.rows, np.zeros((dc.rows.shape[0], 1))])]
    A_ub.append(np.hstack([-np.eye(L), np.ones((L, 1))]))
    A_eq = np.hstack([np.ones((1, L)), np.zeros((1, 1))])
    res = solve_lp(
        c, A_ub=np.vstack(A_ub), b_ub=np.zeros(dc.rows.shape[0] + L),
        A_eq=A_eq, b_eq=[1.0], bounds=[(0, None)] * L + [(None, 1.0)],
    )
    if not res.ok or res.x[-1] <= POSITIVITY_TOL:
        return None
    w = np.clip(res.x[:L], 0.0, None)
    return DualMeasure(w / w.sum(), dc.probs)


def max_pairing(dc: PolyhedralCone, claim) -> tuple[float, np.ndarray]:
    """``max psi_nu(claim)`` over probability measures in the polar cone."""
    claim = np.asarray(claim, dtype=float)
    if claim.shape != (dc.n_leaves,):
        raise DimensionMismatch(f"claim of shape {claim.shape} for {dc.n_leaves} leaves")
    L = dc.n_leaves
    res = solve_lp(
        -claim,
        A_ub=dc.rows if dc.rows.shape[0] else None,
        b_ub=np.zeros(dc.rows.shape[0]) if dc.rows.shape[0] else None,
        A_eq=np.ones((1, L)), b_eq=[1.0], bounds=[(0, None)] * L,
    )
    if not res.ok:
        raise InfeasibleDualDomain("no probability measure lies in the polar cone")
    return -res.value, np.clip(res.x, 0.0, None)


def endowment_bound(dc: PolyhedralCone, tree: ScenarioTree | None, B) -> float:
    """Supremum of ``psi_nu(B)`` over normalised supermartingale measures.

    Taken over the closed slice ``{nu in M, nu(Omega) = 1}``; a linear
    objective has the same supremum over its relatively open part.
    """
    return max_pairing(dc, B)[0] + 0.0  # no negative zero in reports
