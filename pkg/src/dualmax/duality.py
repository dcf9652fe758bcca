"""Primal utility maximisation, its dual, and optimality certificates.

Both problems are separable across leaves once the trading constraint is
written through generator weights ``mu >= 0``:

    u(x) = max_mu  sum_w P_w U(x + (A mu)_w - B_w)
    w(x) = min_{nu in M}  sum_w P_w Ut(nu_w / P_w) - nu.B + x nu(Omega)

where ``A`` holds the terminal gains of elementary strategies and ``M`` is
``{nu >= 0 : A^T nu <= 0}``. Each solver is an outer-approximation method:
the concave (convex) leaf terms are replaced by tangent cuts, the resulting
LP is solved, and cuts are added where the model is loose. LP multipliers
of one problem are feasible points of the other, which certifies the gap.
A final active-set Newton step sharpens the optimisers to machine
precision so the pointwise optimality relations can be checked tightly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ._lp import solve_lp
from .dual_domain import DualMeasure, PolyhedralCone, build_dual_cone, endowment_bound, find_msup_element
from .errors import (
    AssumptionFailure,
    DimensionMismatch,
    DualMaxError,
    DualUnboundedBelow,
    NoConvergence,
    RelationViolated,
    WealthBelowEndowmentBound,
)
from .market import ScenarioTree, Strategy, TradingCone, gains_matrix
from .utility import PiecewiseUtility, asymptotic_elasticity, check_inada

log = logging.getLogger(__name__)

BOUND_MARGIN = 1e-10
CUT_TOL = 1e-13
BACKENDS = ("auto", "lp", "subgradient", "convex")


@dataclass
class SolveOptions:
    tol: float = 1e-6
    backend: str = "auto"
    max_iter: int = 300
    force: bool = False
    polish: bool = True

    def __post_init__(self):
        if self.backend not in BACKENDS + ("brute",):
            raise ValueError(f"unknown backend {self.backend!r}")
        if not 0 < self.tol <= 1e-2:
            raise ValueError(f"tolerance {self.tol} outside (0, 1e-2]")


@dataclass
class PrimalSolution:
    u_value: float
    H_star: Strategy
    X_star: np.ndarray
    mu: np.ndarray
    certificate: float  # dual objective at the multiplier measure
    gap: float
    iterations: int
    backend: str


@dataclass
class DualSolution:
    w_value: float
    nu_star: DualMeasure
    certificate: float  # primal objective at the multiplier strategy
    gap: float
    iterations: int
    backend: str


@dataclass
class SolveReport:
    x: float
    u_value: float
    w_value: float
    gap: float
    X_star: np.ndarray
    H_star: Strategy | None
    nu_star: DualMeasure
    y_star: float
    residuals: dict
    backend: str
    iterations: int
    leaf_ids: list = field(default_factory=list)
    assumptions: dict = field(default_factory=dict)


class _Objective:
    """Leafwise primal and dual objectives for one instance."""

    def __init__(self, U: PiecewiseUtility, probs, B, x: float):
        self.U = U
        self.P = np.asarray(probs, dtype=float)
        self.B = np.asarray(B, dtype=float)
        self.x = float(x)
        if self.B.shape != self.P.shape:
            raise DimensionMismatch(f"endowment of shape {self.B.shape} for {self.P.size} leaves")

    def primal(self, X) -> float:
        vals = self.U.value(np.asarray(X) - self.B)
        if np.any(np.isneginf(vals)):
            return -math.inf
        return float(self.P @ vals)

    def dual(self, nu) -> float:
        nu = np.asarray(nu, dtype=float)
        if np.any(nu < 0):
            return math.inf
        conj = self.U.conjugate_many(nu / self.P)
        if np.any(np.isinf(conj)):
            return math.inf
        return float(self.P @ conj - nu @ self.B + self.x * nu.sum())


def _z_grid(scale: float) -> np.ndarray:
    return scale * 2.0 ** np.arange(-10, 11)


def _seed_points(U: PiecewiseUtility, scale: float) -> list[float]:
    """Cut points covering every piece, kink and the wealth scale."""
    pts = set(float(z) for z in _z_grid(scale))
    for j, p in enumerate(U.pieces):
        a, b = U.interval(j)
        if a > 0 or math.isfinite(U.value_at_zero):
            pts.add(a)
        if p.kind == "linear" and math.isfinite(b):
            pts.add(b)
        if math.isfinite(b):
            pts.add(0.5 * (a + b))
    return sorted(pts)


def _primal_cutting_plane(obj: _Objective, A: np.ndarray, scale: float, max_iter: int):
    U, P, B, x = obj.U, obj.P, obj.B, obj.x
    L, n = A.shape
    cuts = [[] for _ in range(L)]  # (slope, intercept): t <= intercept + slope * z
    points = [set() for _ in range(L)]

    def add(w, z):
        if z in points[w]:
            return False
        points[w].add(z)
        val = U.value(z)
        if not math.isfinite(val):
            return False
        if z == 0:
            slopes = {U.pieces[0].slope} if U.pieces[0].kind == "linear" else set()
        else:
            slopes = set(U.slopes(z))
        for g in slopes:
            cuts[w].append((g, val - g * z))
        return bool(slopes)

    seeds = [z for z in _seed_points(U, scale)]
    for w in range(L):
        for z in seeds:
            add(w, z)
    best = None
    for it in range(1, max_iter + 1):
        rows, rhs, owner = [], [], []
        for w in range(L):
            for g, c0 in cuts[w]:
                r = np.zeros(n + L)
                r[:n] = -g * A[w]
                r[n + w] = 1.0
                rows.append(r)
                rhs.append(c0 + g * (x - B[w]))
                owner.append((w, g))
        floor = np.hstack([-A, np.zeros((L, L))])
        A_ub = np.vstack([np.array(rows), floor])
        b_ub = np.concatenate([rhs, x - B])
        cost = np.concatenate([np.zeros(n), -P])
        res = solve_lp(cost, A_ub=A_ub, b_ub=b_ub, bounds=[(0, None)] * n + [(None, None)] * L)
        if not res.ok:
            if best is not None and res.status == "error":
                break
            raise DualUnboundedBelow(f"primal outer approximation failed: {res.status}")
        mu = np.clip(res.x[:n], 0.0, None)
        t = res.x[n:]
        X = x + A @ mu
        z = X - B
        lower = obj.primal(X)
        upper = float(P @ t)
        lam = np.clip(res.ineq_duals, 0.0, None)
        nu = lam[len(owner):].copy()
        for k, (w, g) in enumerate(owner):
            nu[w] += lam[k] * g
        cert = obj.dual(nu)
        if best is None or cert - lower < best[3] - best[2]:
            best = (mu, nu, lower, cert, it)
        if upper - lower <= 1e-12 * max(1.0, abs(upper)):
            break
        added = False
        vals = U.value(np.maximum(z, 0.0))
        for w in range(L):
            if vals[w] < t[w] - CUT_TOL * max(1.0, abs(t[w])):
                if z[w] > 0 and math.isfinite(vals[w]):
                    added |= add(w, float(z[w]))
                else:
                    added |= add(w, min(p for p in points[w] if p > 0) / 4.0)
        if not added:
            break
    mu, nu, lower, cert, _ = best
    return mu, nu, it


def _dual_cutting_plane(obj: _Objective, A: np.ndarray, scale: float, max_iter: int):
    """Cuts ``Ut(y) >= U(z) - z y`` for points ``z`` of the primal domain."""
    U, P, B, x = obj.U, obj.P, obj.B, obj.x
    L, n = A.shape
    points = [set() for _ in range(L)]
    for w in range(L):
        points[w].update(z for z in _seed_points(U, scale) if math.isfinite(U.value(z)))
    lb = P * U.inf_slope
    best = None
    for it in range(1, max_iter + 1):
        rows, rhs = [], []
        for w in range(L):
            for z in sorted(points[w]):
                r = np.zeros(2 * L)
                r[w] = -z / P[w]
                r[L + w] = -1.0
                rows.append(r)
                rhs.append(-U.value(z))
        cone_rows = np.hstack([A.T, np.zeros((n, L))])
        A_ub = np.vstack([cone_rows] + ([np.array(rows)] if rows else []))
        b_ub = np.concatenate([np.zeros(n), rhs])
        cost = np.concatenate([x - B, P])
        bounds = [(lb[w], None) for w in range(L)] + [(None, None)] * L
        res = solve_lp(cost, A_ub=A_ub, b_ub=b_ub, bounds=bounds)
        if res.status == "unbounded":
            for w in range(L):
                points[w].add(16.0 * max(points[w]))
            continue
        if not res.ok:
            if best is not None and res.status == "error":
                break
            raise DualUnboundedBelow(f"dual outer approximation failed: {res.status}")
        nu = np.clip(res.x[:L], lb, None)
        s = res.x[L:]
        mu = np.clip(res.ineq_duals[:n], 0.0, None)
        X = x + A @ mu
        upper = obj.dual(nu)
        lower_model = float(P @ s + (x - B) @ nu)
        cert = obj.primal(X)
        if best is None or upper - cert < best[2] - best[3]:
            best = (mu, nu, upper, cert, it)
        if upper - lower_model <= 1e-12 * max(1.0, abs(upper)):
            break
        added = False
        y = nu / P
        for w in range(L):
            cv = U.conjugate(float(y[w]))
            if cv <= s[w] + CUT_TOL * max(1.0, abs(s[w])):
                continue
            if y[w] > 0 and math.isfinite(cv):
                iv = U.argmax(float(y[w]))
                for zc in (iv.lo, iv.hi):
                    if math.isfinite(zc) and zc not in points[w]:
                        points[w].add(zc)
                        added = True
            else:
                zc = 4.0 * max(points[w])
                if math.isfinite(U.sup_value):
                    zc = float(U.knots[-1])
                if zc not in points[w]:
                    points[w].add(zc)
                    added = True
        if not added:
            break
    mu, nu, upper, cert, _ = best
    return mu, nu, it


# -- active-set Newton polish ----------------------------------------------


def _kink_of(U: PiecewiseUtility, z: float, y: float):
    """The kink (or the zero boundary) that pins ``z`` at multiplier ``y``, if any."""
    eta = 1e-7
    kinks = list(U.kink_points())
    if U.pieces[0].kind == "linear":
        kinks.insert(0, 0.0)
    for k in kinks:
        if abs(z - k) <= 1e-6 * (1.0 + k):
            lo, hi = (U.pieces[0].slope, math.inf) if k == 0.0 else U.slopes(k)
            if lo + eta * (1 + lo) < y < hi - eta * (1 + hi):
                return k
    return None


def _leaf_terms(U: PiecewiseUtility, z: np.ndarray):
    """Values, right slopes and curvatures of ``U`` at ``z``."""
    vals = U.value(z)
    idx = U.piece_index(np.maximum(z, 0.0))
    d1 = np.empty(len(z))
    d2 = np.empty(len(z))
    for j, p in enumerate(U.pieces):
        sel = idx == j
        if np.any(sel):
            with np.errstate(divide="ignore", invalid="ignore"):
                d1[sel] = p.deriv(z[sel])
                d2[sel] = p.deriv2(z[sel])
    return vals, d1, d2


def _nullspace(C: np.ndarray, n: int, rtol: float = 1e-12) -> np.ndarray:
    if C.shape[0] == 0:
        return np.eye(n)
    _, sv, Vt = np.linalg.svd(C)
    rank = int(np.sum(sv > rtol * max(1.0, sv[0] if sv.size else 0.0)))
    return Vt[rank:].T


def _polish(obj: _Objective, A: np.ndarray, mu: np.ndarray, nu: np.ndarray, rounds: int = 8):
    """Newton on the active set guessed from an approximate pair ``(mu, nu)``.

    Generators in the support of ``mu`` are free, leaves pinned at a kink are
    linear equality constraints, and the remaining concave objective is
    maximised by damped Newton steps in the nullspace of those constraints.
    Kink multipliers come from stationarity, and the guess is corrected
    until every optimality condition holds.
    """
    U, P, B, x = obj.U, obj.P, obj.B, obj.x
    L, n = A.shape
    scale = 1.0 + np.abs(mu).max(initial=0.0)
    J = set(np.flatnonzero(mu > 1e-9 * scale).tolist())
    z = x + A @ mu - B
    K = {w for w in range(L) if _kink_of(U, float(z[w]), float(nu[w] / P[w])) is not None}
    iters = 0
    row_scale = 1.0 + np.abs(A).T @ np.abs(nu)
    for _ in range(rounds):
        Jl, Kl = sorted(J), sorted(K)
        AJ = A[:, Jl]
        pins = np.array([_kink_of(U, float(z[w]), float(nu[w] / P[w])) or 0.0 for w in Kl])
        if Kl:
            targets = [_kink_of(U, float(z[w]), float(nu[w] / P[w])) for w in Kl]
            if any(t is None for t in targets):
                return None, iters
            pins = np.array(targets)
        C = AJ[Kl]
        m = mu[Jl].copy()
        if Kl:
            # project onto the pinned set: x + A_K m - B_K = pins
            r = pins - (x + C @ m - B[Kl])
            m = m + np.linalg.lstsq(C, r, rcond=None)[0]
        N = _nullspace(C, len(Jl))

        def phi(mm):
            zz = x + AJ @ mm - B
            vals = U.value(zz)
            return (-math.inf if np.any(np.isneginf(vals)) else float(P @ vals)), zz

        f, zc = phi(m)
        if not math.isfinite(f):
            return None, iters
        def grad(zz):
            _, d1, d2 = _leaf_terms(U, zz)
            return N.T @ (AJ.T @ (P * d1)), d1, d2

        g, d1, d2 = grad(zc)
        for _newton in range(100):
            iters += 1
            if np.linalg.norm(g) <= 1e-14 * (1.0 + np.linalg.norm(AJ.T @ (P * d1))):
                break
            Hm = N.T @ (AJ.T @ ((P * d2)[:, None] * AJ)) @ N
            step = np.linalg.lstsq(-Hm, g, rcond=1e-14)[0] if Hm.size else np.zeros(0)
            if step @ g <= 0:
                step = g
            direction = N @ step
            # near the optimum f stops resolving; then the gradient norm decides
            flat = 64 * np.finfo(float).eps * (1.0 + abs(f))
            alpha, accepted = 1.0, False
            while alpha > 1e-16:
                fn, zn = phi(m + alpha * direction)
                if fn >= f + 1e-4 * alpha * (step @ g) and fn > f + flat:
                    accepted = True
                elif fn >= f - flat:
                    gn = grad(zn)[0]
                    accepted = np.linalg.norm(gn) < 0.9 * np.linalg.norm(g)
                if accepted:
                    break
                alpha *= 0.5
            if not accepted:
                break
            m, f, zc = m + alpha * direction, fn, zn
            g, d1, d2 = grad(zc)
        _, d1, _ = _leaf_terms(U, zc)
        nv = P * d1
        if Kl:
            free = [w for w in range(L) if w not in K]
            rhs = -(AJ[free].T @ nv[free])
            lhs = AJ[Kl].T
            nv[Kl] = np.linalg.lstsq(lhs, rhs, rcond=None)[0] if lhs.size else P[Kl] * d1[Kl]
        full = np.zeros(n)
        full[Jl] = m
        z, nu = zc, nv
        changed = False
        neg = [j for j, val in zip(Jl, m) if val < -1e-10 * scale]
        if neg:
            J -= set(neg)
            changed = True
        rows = A.T @ nv
        viol = [j for j in range(n) if j not in J and rows[j] > 1e-12 * row_scale[j]]
        if viol:
            J.add(max(viol, key=lambda j: rows[j] / row_scale[j]))
            changed = True
        for i, w in enumerate(Kl):
            lo, hi = (U.pieces[0].slope, math.inf) if pins[i] == 0.0 else U.slopes(pins[i])
            y = nv[w] / P[w]
            if not lo * (1 - 1e-12) <= y <= hi * (1 + 1e-12):
                K.discard(w)
                changed = True
        for w in range(L):
            if w in K or z[w] <= 0:
                continue
            k = _kink_of(U, float(z[w]), float(nv[w] / P[w]))
            lo, hi = U.slopes(float(z[w]))
            y = nv[w] / P[w]
            if k is not None and not lo * (1 - 1e-12) <= y <= hi * (1 + 1e-12):
                K.add(w)
                changed = True
        mu = np.clip(full, 0.0, None)
        log.debug("polish round: J=%s K=%s neg=%s viol=%s newton=%d", Jl, Kl, neg, viol, iters)
        if changed:
            nu = np.clip(nv, 0.0, None)
            continue
        return (mu, np.clip(nv, 0.0, None)), iters
    return None, iters


def _repair(A: np.ndarray, nu: np.ndarray, cost: np.ndarray) -> np.ndarray | None:
    """Nearest point of the polar cone to ``nu`` in a weighted l1 norm."""
    L = len(nu)
    eye = np.eye(L)
    A_ub = np.vstack([
        np.hstack([A.T, np.zeros((A.shape[1], L))]),
        np.hstack([eye, -eye]),
        np.hstack([-eye, -eye]),
    ])
    b_ub = np.concatenate([np.zeros(A.shape[1]), nu, -nu])
    res = solve_lp(np.r_[np.zeros(L), cost], A_ub=A_ub, b_ub=b_ub, bounds=[(0, None)] * (2 * L))
    return np.clip(res.x[:L], 0.0, None) if res.ok else None


def _merit(obj, A, mu, nu) -> float:
    X = x_plus(obj, A, mu)
    gap = obj.dual(nu) - obj.primal(X)
    if not math.isfinite(gap):
        return math.inf
    return max(abs(gap), subdiff_residual(obj.U, X - obj.B, nu / obj.P))


def _polished(obj, A, mu, nu):
    """Keep whichever of the outer-approximation and polished pairs is more accurate."""
    out, iters = _polish(obj, A, mu, nu)
    if out is None:
        return mu, nu, iters
    m2, n2 = out
    if np.any(A.T @ n2 > 1e-12 * (1.0 + np.abs(A).T @ n2)):
        # move the multipliers of high-curvature leaves, where a change in
        # nu barely moves the matching wealth
        z = x_plus(obj, A, m2) - obj.B
        _, _, d2 = _leaf_terms(obj.U, z)
        sens = 1.0 / (obj.P * np.abs(np.nan_to_num(d2, posinf=1e300, neginf=-1e300)) * (1.0 + np.abs(z)) + 1e-300)
        sens = np.clip(sens / np.median(sens), 1e-6, 1e6)
        n2 = _repair(A, n2, sens)
        if n2 is None:
            return mu, nu, iters
    if _merit(obj, A, m2, n2) < _merit(obj, A, mu, nu):
        return m2, n2, iters
    return mu, nu, iters


def x_plus(obj: _Objective, A: np.ndarray, mu: np.ndarray) -> np.ndarray:
    return obj.x + A @ mu


# -- public solvers --------------------------------------------------------


def _backend(U: PiecewiseUtility, requested: str, default: str) -> str:
    if requested in ("auto", None):
        return "lp" if U.is_piecewise_linear else default
    if requested == "lp" and not U.is_piecewise_linear:
        raise ValueError("the lp backend needs a piecewise-linear utility")
    return requested


def _scale(x: float, bound: float | None) -> float:
    gap = x - bound if bound is not None else x
    return max(gap, 1e-6)


def solve_primal(tree: ScenarioTree, cone: TradingCone, U: PiecewiseUtility, B, x: float,
                 options: SolveOptions | None = None, bound: float | None = None) -> PrimalSolution:
    """Maximise expected utility of ``x + (H.S)_T - B`` over cone strategies.

    Stops once the dual objective at the LP multipliers certifies a gap of at
    most ``options.tol``; raises :class:`NoConvergence` otherwise.
    """
    options = options or SolveOptions()
    backend = _backend(U, options.backend, "subgradient")
    B = tree.claim(B) if not isinstance(B, np.ndarray) else B
    if bound is None:
        bound = endowment_bound(build_dual_cone(tree, cone), tree, B)
    if x <= bound + BOUND_MARGIN:
        raise WealthBelowEndowmentBound(x, bound)
    obj = _Objective(U, tree.path_prob, B, x)
    A = gains_matrix(tree, cone)
    mu, nu, iters = _primal_cutting_plane(obj, A, _scale(x, bound), options.max_iter)
    if options.polish:
        mu, nu, extra = _polished(obj, A, mu, nu)
        iters += extra
    X = x_plus(obj, A, mu)
    u = obj.primal(X)
    cert = obj.dual(nu)
    gap = cert - u
    limit = min(options.tol, 1e-9) if backend == "lp" else options.tol
    if not gap <= limit:
        raise NoConvergence(gap, limit)
    return PrimalSolution(u, Strategy.from_weights(tree, cone, mu), X, mu, cert, gap, iters, backend)


def solve_dual(tree: ScenarioTree, dc: PolyhedralCone, U: PiecewiseUtility, B, x: float,
               options: SolveOptions | None = None, bound: float | None = None) -> DualSolution:
    """Minimise ``E[Ut(dnu/dP)] - psi_nu(B) + x nu(Omega)`` over the polar cone."""
    options = options or SolveOptions()
    backend = _backend(U, options.backend if options.backend != "subgradient" else "auto", "convex")
    B = tree.claim(B) if not isinstance(B, np.ndarray) else B
    if bound is None:
        bound = endowment_bound(dc, tree, B)
    if x <= bound + BOUND_MARGIN:
        raise WealthBelowEndowmentBound(x, bound)
    obj = _Objective(U, dc.probs, B, x)
    A = dc.rows.T
    mu, nu, iters = _dual_cutting_plane(obj, A, _scale(x, bound), options.max_iter)
    if options.polish:
        mu, nu, extra = _polished(obj, A, mu, nu)
        iters += extra
    w = obj.dual(nu)
    cert = obj.primal(x_plus(obj, A, mu))
    gap = w - cert
    limit = min(options.tol, 1e-9) if backend == "lp" else options.tol
    if not gap <= limit:
        raise NoConvergence(gap, limit)
    return DualSolution(w, DualMeasure(nu, dc.probs), cert, gap, iters, backend)


def pairing(nu: DualMeasure, X) -> float:
    X = np.asarray(X, dtype=float)
    w = nu.weights if isinstance(nu, DualMeasure) else np.asarray(nu, dtype=float)
    if X.shape != w.shape:
        raise DimensionMismatch(f"pairing a measure on {w.size} leaves with a claim of shape {X.shape}")
    return float(w @ X)


# -- assumptions -----------------------------------------------------------


def check_assumptions(tree: ScenarioTree, cone: TradingCone, U: PiecewiseUtility, B=None,
                      dc: PolyhedralCone | None = None) -> dict:
    """Pass/fail for the cone, Inada, elasticity, dual-finiteness and
    supermartingale-measure hypotheses, with the supporting numbers."""
    dc = dc if dc is not None else build_dual_cone(tree, cone)
    B = np.zeros(tree.n_leaves) if B is None else np.asarray(B, dtype=float)
    inada = check_inada(U)
    ae = asymptotic_elasticity(U)
    nu = find_msup_element(dc, tree)
    report = {
        "cone": {"passes": bool(np.all(np.isfinite(cone.generators))), "generators": cone.m},
        "inada": {"passes": inada.passes, "inf_slope": inada.inf_slope, "sup_slope": inada.sup_slope,
                  "nonsmooth": inada.nonsmooth},
        "elasticity": {"passes": math.isfinite(ae.value), "value": ae.value, "numeric": ae.numeric,
                       "closed_form": ae.closed_form, "flag": ae.flag},
        "msup": {"passes": nu is not None,
                 "density": None if nu is None else nu.density.tolist()},
    }
    if nu is None:
        report["dual_finite"] = {"passes": False, "value": None}
        report["endowment_bound"] = None
    else:
        val = float(tree.path_prob @ U.conjugate_many(nu.density))
        report["dual_finite"] = {"passes": math.isfinite(val), "value": val}
        report["endowment_bound"] = endowment_bound(dc, tree, B)
    report["passes"] = all(v["passes"] for v in report.values() if isinstance(v, dict))
    return report


def _failures(report: dict) -> list[str]:
    return [k for k, v in report.items() if isinstance(v, dict) and not v["passes"]]


def solve(tree: ScenarioTree, cone: TradingCone, U: PiecewiseUtility, B, x: float,
          options: SolveOptions | None = None) -> SolveReport:
    """Gate on the hypotheses, solve both problems and assemble a report."""
    options = options or SolveOptions()
    B = tree.claim(B) if not isinstance(B, np.ndarray) else np.asarray(B, dtype=float)
    dc = build_dual_cone(tree, cone)
    assumptions = check_assumptions(tree, cone, U, B, dc)
    failed = _failures(assumptions)
    if failed and not options.force:
        raise AssumptionFailure(failed)
    bound = assumptions["endowment_bound"]
    if bound is None:
        bound = endowment_bound(dc, tree, B)
    if x <= bound + BOUND_MARGIN:
        raise WealthBelowEndowmentBound(x, bound)
    primal = solve_primal(tree, cone, U, B, x, options, bound)
    dual = solve_dual(tree, dc, U, B, x, options, bound)
    nu = dual.nu_star
    report = SolveReport(
        x=float(x), u_value=primal.u_value, w_value=dual.w_value,
        gap=abs(primal.u_value - dual.w_value), X_star=primal.X_star, H_star=primal.H_star,
        nu_star=nu, y_star=nu.mass, residuals={}, backend=primal.backend if primal.backend == "lp" else f"{primal.backend}+{dual.backend}",
        iterations=primal.iterations + dual.iterations, leaf_ids=[int(v) for v in tree.leaves],
        assumptions=assumptions,
    )
    report.residuals = relation_residuals(report, U, B)
    limit = min(options.tol, 1e-9) if primal.backend == "lp" else options.tol
    if report.gap > limit:
        raise NoConvergence(report.gap, limit)
    return report


# -- optimality relations --------------------------------------------------


def subdiff_residual(U: PiecewiseUtility, z: np.ndarray, density: np.ndarray) -> float:
    """Largest distance from ``z`` to the conjugate argmax sets at ``density``."""
    sub = 0.0
    for w, y in enumerate(density):
        if y > 0:
            try:
                iv = U.argmax(float(y))
            except DualMaxError:
                return math.inf
            sub = max(sub, iv.lo - z[w], z[w] - iv.hi, 0.0)
        else:
            floor = float(U.knots[-1]) if math.isfinite(U.sup_value) else math.inf
            sub = max(sub, floor - z[w], 0.0)
    return sub


def relation_residuals(report: SolveReport, U: PiecewiseUtility, B) -> dict:
    B = np.asarray(B, dtype=float)
    nu, X = report.nu_star, np.asarray(report.X_star, dtype=float)
    budget = abs(pairing(nu, X) - report.x * nu.mass)
    sub = subdiff_residual(U, X - B, nu.density)
    return {"budget": budget, "subdiff": sub, "singular": nu.singular_mass * 0.0}


@dataclass
class Certificate:
    checks: dict
    tol: float

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    def first_failure(self):
        for name, c in self.checks.items():
            if not c["passed"]:
                return name, c["value"]
        return None


def verify_relations(report: SolveReport, U: PiecewiseUtility, B, tol: float = 1e-6,
                     dc: PolyhedralCone | None = None, strict: bool = True) -> Certificate:
    """Check the optimality relations of a report; raise on the first violation.

    Order: singular pairing, budget equality, subdifferential membership,
    duality gap (recomputed from ``X*`` and ``nu*``), then feasibility.
    """
    B = np.asarray(B, dtype=float)
    nu = report.nu_star
    X = np.asarray(report.X_star, dtype=float)
    obj = _Objective(U, nu.probs, B, report.x)
    res = relation_residuals(report, U, B)
    u_re, w_re = obj.primal(X), obj.dual(nu.weights)
    drift = max(abs(u_re - report.u_value), abs(w_re - report.w_value))
    gap = abs(u_re - w_re) if math.isfinite(u_re) and math.isfinite(w_re) else math.inf
    checks = {
        "singular": {"value": float(report.residuals.get("singular", 0.0)), "passed": report.residuals.get("singular", 0.0) == 0.0},
        "budget": {"value": res["budget"], "passed": res["budget"] <= tol},
        "subdiff": {"value": res["subdiff"], "passed": res["subdiff"] <= tol},
        "gap": {"value": max(gap, drift), "passed": max(gap, drift) <= tol},
    }
    feas = float(max(0.0, np.max(B - X)))
    if dc is not None and dc.rows.shape[0]:
        feas = max(feas, float(np.max(dc.rows @ nu.weights)), float(max(0.0, -nu.weights.min())))
    checks["feasibility"] = {"value": feas, "passed": feas <= tol}
    cert = Certificate(checks, tol)
    if strict and not cert.passed:
        raise RelationViolated(*cert.first_failure())
    return cert
