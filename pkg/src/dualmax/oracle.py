"""Brute-force reference values on tiny instances.

Everything here is deliberately naive: exhaustive grids, rejection of
infeasible points, two local refinement passes. Nothing is shared with the
solvers except evaluation of gains on the tree, cone and polar-cone
membership, and the utility itself.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .dual_domain import PolyhedralCone, dual_contains, dual_contains_many
from .errors import DimensionTooLarge, EmptyFeasibleGrid
from .market import ScenarioTree, Strategy, TradingCone, cone_contains, terminal_gains
from .utility import PiecewiseUtility

MAX_DIM = 4
PLATEAU_TOL = 1e-9
_DEFAULT_COUNTS = {1: 2001, 2: 81, 3: 25, 4: 13}


@dataclass(frozen=True)
class GridSpec:
    """Box ``[lo_i, hi_i]`` with ``counts[i]`` points per axis."""

    lo: tuple
    hi: tuple
    counts: tuple
    refine: float = 8.0  # largest half-width of a refinement box, in grid steps
    floor: float | None = None  # hard lower bound on every axis (conic coordinates)

    def __post_init__(self):
        if not len(self.lo) == len(self.hi) == len(self.counts):
            raise ValueError("lo, hi and counts must have one entry per axis")
        if any(c < 3 for c in self.counts):
            raise ValueError(f"each axis needs at least 3 points, got {self.counts}")
        if not all(map(math.isfinite, (*self.lo, *self.hi))):
            raise ValueError("grid bounds must be finite")
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise ValueError("grid bounds must satisfy lo < hi")
        if self.floor is not None and min(self.lo) < self.floor:
            raise ValueError(f"grid reaches below its floor {self.floor}")

    @classmethod
    def box(cls, dim: int, lo: float, hi: float, count: int | None = None) -> "GridSpec":
        count = count or _DEFAULT_COUNTS.get(dim, 9)
        return cls((lo,) * dim, (hi,) * dim, (count,) * dim)

    @property
    def dim(self) -> int:
        return len(self.counts)

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(l, h, c) for l, h, c in zip(self.lo, self.hi, self.counts)]

    def _boxed(self, mid, half) -> "GridSpec":
        lo = [float(m - w) for m, w in zip(mid, half)]
        hi = [float(m + w) for m, w in zip(mid, half)]
        if self.floor is not None:
            lo = [max(v, self.floor) for v in lo]
            hi = [max(v, self.floor + 2 * w) for v, w in zip(hi, half)]
        return GridSpec(tuple(lo), tuple(hi), self.counts, self.refine, self.floor)

    def around(self, center: np.ndarray) -> "GridSpec":
        # at least a fourfold shrink per pass, whatever the point count
        half = [(h - l) / (c - 1) * min(self.refine, (c - 1) / 8)
                for l, h, c in zip(self.lo, self.hi, self.counts)]
        return self._boxed(center, half)

    def step(self) -> float:
        return max((h - l) / (c - 1) for l, h, c in zip(self.lo, self.hi, self.counts))

    def shifted(self, center: np.ndarray) -> "GridSpec":
        return self._boxed(center, [(h - l) / 2 for l, h in zip(self.lo, self.hi)])

    def widened(self, factor: float = 4.0) -> "GridSpec":
        mid = [(l + h) / 2 for l, h in zip(self.lo, self.hi)]
        return self._boxed(mid, [(h - l) / 2 * factor for l, h in zip(self.lo, self.hi)])

    def open_edge(self, index) -> bool:
        """Whether a grid index touches a box face that is not the floor."""
        for i, c, l in zip(index, self.counts, self.lo):
            if i == c - 1 or (i == 0 and (self.floor is None or l > self.floor)):
                return True
        return False


@dataclass(frozen=True)
class OracleResult:
    value: float
    error: float  # largest objective change to a neighbouring grid point
    point: np.ndarray  # holdings (primal) or leaf weights (dual)
    evaluations: int


@dataclass(frozen=True)
class ConjugateEstimate:
    value: float
    lo: float
    hi: float


def _search(f, grid: GridSpec, maximize: bool, passes: int = 2, widen: int = 6, walks: int = 40,
            explore: bool = False):
    """Grid search with refinement; ``f`` maps an ``(n, dim)`` array to values.

    Infeasible points must come back as NaN. With ``explore`` an empty first
    sweep widens the box instead of failing. Widening coarsens the grid, so
    refinement runs ``passes`` times and then continues until the step is as
    fine as ``passes`` refinements of the original box would make it.
    Returns the incumbent, its value, the neighbour-variation error and the
    number of evaluations.
    """
    sign = 1.0 if maximize else -1.0
    evals = 0
    target = grid.step() * 4.0**-passes  # every pass shrinks the box at least fourfold

    def sweep(g):
        nonlocal evals
        axes = g.axes()
        pts = np.stack([m.reshape(-1) for m in np.meshgrid(*axes, indexing="ij")], axis=1)
        vals = sign * np.asarray(f(pts), dtype=float)
        evals += len(pts)
        ok = ~np.isnan(vals)
        if not ok.any() or np.all(vals[ok] == -np.inf):
            return None
        best = int(np.argmax(np.where(ok, vals, -np.inf)))  # first index wins ties
        return g, pts, vals.reshape(g.counts), np.unravel_index(best, g.counts)

    def top(found):
        return found[2][found[3]]

    def incumbent(found):
        g, pts, _, idx = found
        return pts[np.ravel_multi_index(idx, g.counts)]

    def walk(found):
        # follow the incumbent while it sits on the edge of the box
        for _ in range(walks):
            if not found[0].open_edge(found[3]):
                break
            moved = sweep(found[0].shifted(incumbent(found)))
            if moved is None or top(moved) <= top(found):
                break
            found = moved
        return found

    found = sweep(grid)
    for _ in range(widen if explore else 0):
        if found is not None:
            break
        grid = grid.widened()
        found = sweep(grid)
    for _ in range(widen):
        if found is None or not found[0].open_edge(found[3]):
            break
        wider = sweep(found[0].widened())
        if wider is None:
            break
        found = wider
    if found is None:
        raise EmptyFeasibleGrid("no feasible point with a finite objective on the grid")
    found = walk(found)
    k = 0
    while k < passes or found[0].step() > target * (1 + 1e-9):
        refined = sweep(found[0].around(incumbent(found)))
        if refined is None or top(refined) < top(found):
            break
        found = walk(refined)
        k += 1

    g, _, vals, idx = found
    err = 0.0
    for axis in range(g.dim):
        for step in (-1, 1):
            nb = list(idx)
            nb[axis] += step
            if 0 <= nb[axis] < g.counts[axis] and np.isfinite(vals[tuple(nb)]):
                err = max(err, abs(vals[tuple(nb)] - vals[idx]))
    return incumbent(found), sign * float(top(found)), float(err), evals


# -- primal ----------------------------------------------------------------


def _unit_gains(tree: ScenarioTree) -> np.ndarray:
    """Terminal gains of one unit of asset ``j`` held at one nonterminal node."""
    cols = []
    for node in tree.nonterminal:
        for j in range(tree.d):
            H = np.zeros((tree.n_nodes, tree.d))
            H[node, j] = 1.0
            cols.append(terminal_gains(tree, Strategy(H)))
    return np.column_stack(cols)


def _extreme_generators(cone: TradingCone) -> np.ndarray:
    """Drop zero generators and those that are combinations of the others."""
    g = [k for k in cone.generators if np.any(k)]
    i = 0
    while i < len(g):
        others = g[:i] + g[i + 1:]
        if others and cone_contains(TradingCone(np.array(others)), g[i]):
            g.pop(i)
        else:
            i += 1
    return np.array(g).reshape(-1, cone.d)


def _chart(cone: TradingCone) -> tuple[np.ndarray, bool]:
    """Coordinates for the holdings at one node: ``(basis, conic)``.

    When the extreme generators are independent, ``h = basis @ c`` with
    ``c >= 0`` covers the cone exactly with its faces on coordinate planes.
    Otherwise the grid uses an orthonormal basis of the span of the generators.
    """
    g = _extreme_generators(cone)
    if len(g) and np.linalg.matrix_rank(g) == len(g):
        return g.T, True
    u, sv, _ = np.linalg.svd(cone.generators.T, full_matrices=False)
    return u[:, sv > 1e-10 * sv[0]], False


def brute_primal(tree: ScenarioTree, cone: TradingCone, U: PiecewiseUtility, B, x: float,
                 grid: GridSpec | None = None) -> OracleResult:
    """Grid maximum of ``E[U(x + (H.S)_T - B)]`` over holdings in the cone.

    A given ``grid`` is read in raw holdings coordinates (one axis per node
    and asset). Without one, the grid uses coordinates adapted to the cone.
    """
    B = np.asarray(B, dtype=float)
    nodes, d = len(tree.nonterminal), tree.d
    if nodes * d > MAX_DIM:
        raise DimensionTooLarge(f"{nodes * d} strategy coordinates; the oracle handles at most {MAX_DIM}")
    explore = grid is None
    if grid is None:
        basis, conic = _chart(cone)
        dim = nodes * basis.shape[1]
        grid = (GridSpec((0.0,) * dim, (2.0,) * dim, (_DEFAULT_COUNTS[dim],) * dim, floor=0.0)
                if conic else GridSpec.box(dim, -2.0, 2.0))
    else:
        basis, conic = np.eye(d), False
    k = basis.shape[1]
    if grid.dim != nodes * k:
        raise ValueError(f"grid has {grid.dim} axes, the strategy has {nodes * k} coordinates")
    G = _unit_gains(tree)
    P = tree.path_prob
    cache: dict = {}

    def admissible(h) -> bool:
        # membership is scale invariant, so cache by direction
        top = np.abs(h).max()
        if top == 0:
            return True
        key = tuple(np.round(h / top, 12))
        if key not in cache:
            cache[key] = cone_contains(cone, np.asarray(key))
        return cache[key]

    def holdings(pts):
        blocks = pts.reshape(len(pts), nodes, k)
        return (blocks @ basis.T).reshape(len(pts), nodes * d)

    def objective(pts):
        H = holdings(pts)
        keep = np.ones(len(pts), dtype=bool)
        for a in range(nodes if not conic else 0):  # a conic chart never leaves the cone
            keep &= np.array([admissible(h) for h in H[:, a * d:(a + 1) * d]])
        out = np.full(len(pts), np.nan)
        if keep.any():
            z = x + H[keep] @ G.T - B
            with np.errstate(invalid="ignore"):
                out[keep] = U.value(z) @ P
        return out

    point, value, err, evals = _search(objective, grid, maximize=True, explore=explore)
    return OracleResult(value, err, holdings(point[None, :]).reshape(nodes, d), evals)


# -- dual ------------------------------------------------------------------


def _extreme_rays(dc: PolyhedralCone) -> np.ndarray:
    """Extreme rays of ``{nu >= 0, rows @ nu <= 0}`` by enumerating active sets."""
    L = dc.n_leaves
    cons = np.vstack([dc.rows, -np.eye(L)]) if dc.rows.size else -np.eye(L)
    rays = []
    for subset in itertools.combinations(range(len(cons)), L - 1):
        sub = cons[list(subset)]
        _, sv, vt = np.linalg.svd(sub) if L > 1 else (None, np.zeros(0), np.eye(1))
        if np.sum(sv > 1e-10 * max(1.0, sv.max(initial=0.0))) != L - 1:
            continue
        r = vt[-1]
        for cand in (r, -r):
            cand = np.where(np.abs(cand) < 1e-14, 0.0, cand)
            if cand.max() > 0 and dual_contains(dc, cand, tol=1e-12):
                cand = cand / cand.sum()
                if not any(np.allclose(cand, q, atol=1e-10) for q in rays):
                    rays.append(cand)
    return np.array(rays).reshape(-1, L)


def brute_dual(tree: ScenarioTree | None, dc: PolyhedralCone, U: PiecewiseUtility, B, x: float,
               grid: GridSpec | None = None) -> OracleResult:
    """Grid minimum of ``E[Ut(nu/P)] - nu(B) + x nu(Omega)`` over the polar cone.

    The grid lives on conic coefficients of the extreme rays of the cone, or
    on orthonormal coordinates of its span when there are too many rays;
    points outside the cone are rejected either way.
    """
    B = np.asarray(B, dtype=float)
    L = dc.n_leaves
    if L > MAX_DIM:
        raise DimensionTooLarge(f"{L} leaves; the oracle handles at most {MAX_DIM}")
    rays = _extreme_rays(dc)
    if rays.shape[0] == 0:
        raise EmptyFeasibleGrid("the polar cone is {0}")
    P = dc.probs
    if rays.shape[0] <= MAX_DIM:
        # conic coefficients on the rays: faces of M are coordinate planes
        basis = rays.T
        k = basis.shape[1]
        default = GridSpec((0.0,) * k, (4.0,) * k, (_DEFAULT_COUNTS[k],) * k, floor=0.0)
    else:
        u, sv, _ = np.linalg.svd(rays.T, full_matrices=False)
        basis = u[:, sv > 1e-10 * sv[0]]
        k = basis.shape[1]
        centre = basis.T @ rays.mean(axis=0)
        half = 2.0 * max(1.0, float(np.abs(centre).max()))
        default = GridSpec(tuple(centre - half), tuple(centre + half), (_DEFAULT_COUNTS[k],) * k)
    explore = grid is None
    grid = grid or default
    if grid.dim != k:
        raise ValueError(f"grid has {grid.dim} axes, the dual chart has {k}")

    def weights(pts):
        nus = pts @ basis.T
        nus[np.abs(nus) < 1e-13] = 0.0
        return nus

    def objective(pts):
        out = np.full(len(pts), np.nan)
        nus = weights(pts)
        keep = dual_contains_many(dc, nus)
        nus = nus[keep]
        conj = _conjugate_values(U, nus / P)
        out[keep] = conj @ P - nus @ B + x * nus.sum(axis=1)
        return out

    point, value, err, evals = _search(objective, grid, maximize=False, explore=explore)
    return OracleResult(value, err, weights(point[None, :])[0], evals)


# -- conjugate -------------------------------------------------------------


def _conjugate_values(U: PiecewiseUtility, ys: np.ndarray) -> np.ndarray:
    """``sup_x U(x) - x y`` elementwise, from piece endpoints and critical points.

    On each piece a concave function minus a line peaks at an endpoint or
    where the slope equals ``y``; ``y = 0`` gives ``sup U``.
    """
    ys = np.asarray(ys, dtype=float)
    best = np.full(ys.shape, -np.inf)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for j, p in enumerate(U.pieces):
            a, b = U.interval(j)
            cands = [np.full(ys.shape, a)]
            if math.isfinite(b):
                cands.append(np.full(ys.shape, b))
            if p.kind != "linear":
                cands.append(np.clip(p.inverse_deriv(np.where(ys > 0, ys, np.nan)), a, b))
            elif not math.isfinite(b):
                best = np.where(ys < p.slope, np.inf, best)
            for xc in cands:
                ok = np.isfinite(xc)
                val = np.full(ys.shape, -np.inf)
                val[ok] = U.value(xc[ok]) - xc[ok] * ys[ok]
                best = np.maximum(best, np.nan_to_num(val, nan=-np.inf))
        best = np.where(ys == 0, U.sup_value, best)
    return best


def brute_conjugate(U: PiecewiseUtility, y: float, count: int = 20001,
                    lo: float = 1e-9, hi: float = 1e9) -> ConjugateEstimate:
    """``sup_x U(x) - x y`` on a log-spaced grid, plus the argmax plateau."""
    if not y > 0:
        raise ValueError(f"the conjugate oracle needs y > 0, got {y}")
    xs = np.geomspace(lo, hi, count)
    for _ in range(3):
        vals = U.value(xs) - xs * y
        top = float(np.max(vals))
        plateau = np.flatnonzero(vals >= top - PLATEAU_TOL)
        i, j = int(plateau[0]), int(plateau[-1])
        # refine both plateau edges on the neighbouring cells
        left = xs[max(i - 1, 0)], xs[min(i + 1, len(xs) - 1)]
        right = xs[max(j - 1, 0)], xs[min(j + 1, len(xs) - 1)]
        xs = np.unique(np.concatenate([
            xs[i:j + 1:max(1, (j - i) // 1000)],
            np.linspace(*left, 2001),
            np.linspace(*right, 2001),
        ]))
    vals = U.value(xs) - xs * y
    top = float(np.max(vals))
    plateau = xs[vals >= top - PLATEAU_TOL]
    return ConjugateEstimate(top, float(plateau[0]), float(plateau[-1]))
