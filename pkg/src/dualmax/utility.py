"""Nonsmooth concave utilities built from power, log and linear pieces.

A utility is a continuous concatenation of pieces on ``[0, x1), [x1, x2), ...,
[x_{k-1}, inf)``. Every piece has a closed-form value, slope and inverse
slope, so subdifferentials and the concave conjugate

    Ut(y) = sup_{x >= 0} U(x) - x*y

are computed without numerical root finding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ModelError, NegativeArgument, NonPositivePoint, OutsideDomain

SLOPE_TOL = 1e-12
CONTINUITY_TOL = 1e-9
KINDS = ("power", "log", "linear")


@dataclass(frozen=True)
class SubdiffInterval:
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    def contains(self, v: float, tol: float = 0.0) -> bool:
        return self.lo - tol <= v <= self.hi + tol

    @property
    def is_singleton(self) -> bool:
        return self.lo == self.hi


@dataclass(frozen=True)
class Piece:
    kind: str
    knot: float
    coef: float = 1.0
    exponent: float = 0.5
    slope: float = 0.0
    offset: float = 0.0

    def value(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.kind == "power":
                return self.coef * np.power(x, self.exponent) + self.offset
            if self.kind == "log":
                return self.coef * np.log(x) + self.offset
            return self.slope * x + self.offset

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.kind == "power":
                return self.coef * self.exponent * np.power(x, self.exponent - 1.0)
            if self.kind == "log":
                return self.coef / x
            return np.full_like(x, self.slope)

    def deriv2(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "power":
            p = self.exponent
            return self.coef * p * (p - 1.0) * np.power(x, p - 2.0)
        if self.kind == "log":
            return -self.coef / (x * x)
        return np.zeros_like(x)

    def inverse_deriv(self, y: float) -> float:
        """The point where a strictly concave piece has slope ``y``."""
        if self.kind == "power":
            p = self.exponent
            return (y / (self.coef * p)) ** (1.0 / (p - 1.0))
        if self.kind == "log":
            return self.coef / y
        raise ValueError("linear pieces have no inverse slope")

    @property
    def smooth(self) -> bool:
        return self.kind != "linear"


@dataclass(frozen=True, eq=False)
class PiecewiseUtility:
    """Concave nondecreasing utility on ``[0, inf)``; ``-inf`` below zero."""

    pieces: tuple
    name: str = ""
    knots: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pieces = tuple(self.pieces)
        object.__setattr__(self, "pieces", pieces)
        if not pieces:
            raise ModelError("utility needs at least one piece")
        knots = np.array([p.knot for p in pieces], dtype=float)
        if knots[0] != 0.0 or np.any(np.diff(knots) <= 0):
            raise ModelError(f"knots must start at 0 and increase strictly, got {knots.tolist()}")
        object.__setattr__(self, "knots", knots)
        for p in pieces:
            if p.kind not in KINDS:
                raise ModelError(f"unknown piece kind {p.kind!r}")
            if p.kind in ("power", "log") and not p.coef > 0:
                raise ModelError(f"{p.kind} piece at {p.knot} needs a positive coefficient")
            if p.kind == "power" and not 0 < p.exponent < 1:
                raise ModelError(f"power exponent {p.exponent} outside (0, 1)")
            if p.kind == "linear" and p.slope < 0:
                raise ModelError(f"linear piece at {p.knot} is decreasing")
        for left, right in zip(pieces, pieces[1:]):
            k = right.knot
            if abs(left.value(k) - right.value(k)) > CONTINUITY_TOL * max(1.0, abs(left.value(k))):
                raise ModelError(f"utility is discontinuous at knot {k}")
            if right.deriv(k) > left.deriv(k) * (1 + SLOPE_TOL) + SLOPE_TOL:
                raise ModelError(f"utility is not concave at knot {k}")

    @classmethod
    def from_pieces(cls, specs: Sequence[dict], name: str = "") -> "PiecewiseUtility":
        """Build from piece dicts, fixing offsets after the first for continuity.

        Each dict has ``kind``, ``knot`` and the parameters of that kind:
        ``coefficient``/``exponent`` (power), ``coefficient`` (log),
        ``slope``/``intercept`` (linear). An explicit ``offset`` or
        ``intercept`` on a later piece must agree with the continuous value.
        """
        pieces = []
        for j, s in enumerate(specs):
            kind = s["kind"]
            base = Piece(
                kind=kind,
                knot=float(s["knot"]),
                coef=float(s.get("coefficient", s.get("coef", 1.0))),
                exponent=float(s.get("exponent", 0.5)),
                slope=float(s.get("slope", 0.0)),
            )
            given = s.get("offset", s.get("intercept"))
            if j == 0:
                offset = float(given) if given is not None else 0.0
            else:
                k = base.knot
                offset = float(pieces[-1].value(k) - base.value(k))
                if given is not None and abs(float(given) - offset) > CONTINUITY_TOL * max(1.0, abs(offset)):
                    raise ModelError(f"piece at knot {k}: offset {given} breaks continuity (needs {offset})")
            pieces.append(Piece(kind, base.knot, base.coef, base.exponent, base.slope, offset))
        return cls(tuple(pieces), name=name)

    def to_specs(self) -> list[dict]:
        out = []
        for p in self.pieces:
            s = {"kind": p.kind, "knot": p.knot}
            if p.kind == "power":
                s.update(coefficient=p.coef, exponent=p.exponent)
            elif p.kind == "log":
                s["coefficient"] = p.coef
            else:
                s["slope"] = p.slope
            s["offset"] = p.offset
            out.append(s)
        return out

    # -- structure -------------------------------------------------------

    def piece_index(self, x):
        """Index of the piece whose half-open interval holds ``x`` (x >= 0)."""
        return np.clip(np.searchsorted(self.knots, x, side="right") - 1, 0, len(self.pieces) - 1)

    def interval(self, j: int) -> tuple[float, float]:
        hi = self.knots[j + 1] if j + 1 < len(self.knots) else math.inf
        return float(self.knots[j]), float(hi)

    @property
    def is_piecewise_linear(self) -> bool:
        return all(p.kind == "linear" for p in self.pieces)

    @property
    def value_at_zero(self) -> float:
        head = self.pieces[0]
        return -math.inf if head.kind == "log" else float(head.offset)

    @property
    def sup_slope(self) -> float:
        head = self.pieces[0]
        return math.inf if head.smooth else head.slope

    @property
    def inf_slope(self) -> float:
        tail = self.pieces[-1]
        return 0.0 if tail.smooth else tail.slope

    @property
    def sup_value(self) -> float:
        tail = self.pieces[-1]
        if tail.smooth or tail.slope > 0:
            return math.inf
        return float(tail.offset)

    def kink_points(self) -> list[float]:
        """Interior knots where the left slope exceeds the right slope."""
        out = []
        for j in range(1, len(self.pieces)):
            k = self.knots[j]
            if self.pieces[j - 1].deriv(k) > self.pieces[j].deriv(k):
                out.append(float(k))
        return out

    # -- evaluation ------------------------------------------------------

    def value(self, x):
        """Vectorised utility: ``-inf`` for negative arguments."""
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        out = np.full(x.shape, -math.inf)
        ok = x >= 0
        idx = self.piece_index(x[ok])
        vals = np.empty(idx.shape)
        for j, p in enumerate(self.pieces):
            sel = idx == j
            if np.any(sel):
                vals[sel] = p.value(x[ok][sel])
        zero = x[ok] == 0
        vals[zero] = self.value_at_zero
        out[ok] = vals
        return float(out[0]) if scalar else out

    def slopes(self, x: float) -> tuple[float, float]:
        """(right derivative, left derivative) at ``x > 0``."""
        j = int(self.piece_index(x))
        right = float(self.pieces[j].deriv(x))
        if j > 0 and x == self.knots[j]:
            return right, float(self.pieces[j - 1].deriv(x))
        return right, right

    def deriv(self, x):
        """Right derivative, vectorised over ``x > 0``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = self.piece_index(x)
        out = np.empty(x.shape)
        for j, p in enumerate(self.pieces):
            sel = idx == j
            if np.any(sel):
                out[sel] = p.deriv(x[sel])
        return out

    # -- conjugate -------------------------------------------------------

    def argmax(self, y: float) -> SubdiffInterval:
        """``{x >= 0 : y in dU(x)}`` for ``y > 0``, a closed interval."""
        if not y > 0:
            raise OutsideDomain(f"conjugate argmax needs y > 0, got {y}")
        if y < self.inf_slope * (1 - SLOPE_TOL):
            raise OutsideDomain(f"y={y} is below every slope of U; the conjugate is +inf")
        tail = self.pieces[-1]
        lo, hi = math.inf, -math.inf

        def take(a, b):
            nonlocal lo, hi
            lo, hi = min(lo, a), max(hi, b)

        if math.isfinite(self.value_at_zero) and y >= self.pieces[0].deriv(0.0):
            take(0.0, 0.0)
        for j, p in enumerate(self.pieces):
            a, b = self.interval(j)
            if j > 0:
                r, l = float(p.deriv(a)), float(self.pieces[j - 1].deriv(a))
                if r * (1 - SLOPE_TOL) <= y <= l * (1 + SLOPE_TOL):
                    take(a, a)
            if p.kind == "linear":
                if abs(p.slope - y) <= SLOPE_TOL * max(1.0, y):
                    take(a, b)
            else:
                top = float(p.deriv(a)) if a > 0 else math.inf
                bottom = float(p.deriv(b)) if math.isfinite(b) else 0.0
                if bottom < y < top:
                    xs = min(max(p.inverse_deriv(y), a), b)
                    take(xs, xs)
        if lo > hi:
            if tail.kind == "linear" and y <= tail.slope * (1 + SLOPE_TOL):
                take(self.knots[-1], math.inf)
            else:
                raise OutsideDomain(f"no maximiser of U(x) - {y}x")
        return SubdiffInterval(lo, hi)

    def conjugate(self, y: float) -> float:
        if y < 0:
            raise NegativeArgument(f"conjugate is +inf for negative y={y}")
        if y == 0:
            return self.sup_value
        if y < self.inf_slope * (1 - SLOPE_TOL):
            return math.inf
        x = self.argmax(y).lo
        return float(self.value(x) - x * y)

    def conjugate_many(self, ys) -> np.ndarray:
        return np.array([self.conjugate(float(v)) for v in np.atleast_1d(ys)])


# -- module-level operations ----------------------------------------------


def u_eval(U: PiecewiseUtility, x: float) -> float:
    return U.value(float(x))


def u_subdiff(U: PiecewiseUtility, x: float) -> SubdiffInterval:
    if not x > 0:
        raise NonPositivePoint(f"subdifferential requested at x={x} <= 0")
    return SubdiffInterval(*U.slopes(float(x)))


def conjugate_eval(U: PiecewiseUtility, y: float) -> float:
    return U.conjugate(float(y))


def conjugate_argmax(U: PiecewiseUtility, y: float) -> SubdiffInterval:
    return U.argmax(float(y))


def conjugate_subdiff(U: PiecewiseUtility, y: float) -> SubdiffInterval:
    """Subdifferential of the conjugate: the negated argmax interval."""
    a = U.argmax(float(y))
    return SubdiffInterval(-a.hi, -a.lo)


@dataclass(frozen=True)
class InadaReport:
    inf_slope: float
    sup_slope: float
    passes: bool
    nonsmooth: bool


def check_inada(U: PiecewiseUtility) -> InadaReport:
    inf_s, sup_s = U.inf_slope, U.sup_slope
    nonsmooth = bool(U.kink_points()) or any(p.kind == "linear" for p in U.pieces)
    return InadaReport(inf_s, sup_s, inf_s == 0.0 and math.isinf(sup_s), nonsmooth)


@dataclass(frozen=True)
class ElasticityEstimate:
    value: float
    numeric: float
    closed_form: float | None
    flag: str | None = None


def asymptotic_elasticity(U: PiecewiseUtility, y_floor: float = 2.0**-60) -> ElasticityEstimate:
    """Asymptotic elasticity of the conjugate near ``y = 0``.

    The numeric estimate is the largest ratio ``|q| y / Ut(y)`` over
    ``y_k = 2**-k`` (k = 1..60, ``y_k >= y_floor``) among points with a
    positive finite conjugate. A power or log tail has the closed forms
    ``p/(1-p)`` and ``0``, which are returned as ``value`` when available.
    """
    if not y_floor > 0:
        raise ValueError("y_floor must be positive")
    tail = U.pieces[-1]
    closed = None
    if tail.kind == "power":
        closed = tail.exponent / (1.0 - tail.exponent)
    elif tail.kind == "log":
        closed = 0.0
    ratios = []
    smallest = None
    for k in range(1, 61):
        y = 2.0**-k
        if y < y_floor:
            break
        try:
            cv = U.conjugate(y)
            q = U.argmax(y).hi
        except OutsideDomain:
            continue
        smallest = cv
        if math.isfinite(cv) and cv > 0 and math.isfinite(q):
            ratios.append(q * y / cv)
    if smallest is not None and not smallest > 0:
        return ElasticityEstimate(0.0, 0.0, closed, "ConjugateNotPositiveNearZero")
    numeric = max(ratios) if ratios else 0.0
    return ElasticityEstimate(closed if closed is not None else numeric, numeric, closed)


# -- common utilities -----------------------------------------------------


def log_utility(coef: float = 1.0) -> PiecewiseUtility:
    return PiecewiseUtility((Piece("log", 0.0, coef=coef),), name="log")


def power_utility(p: float, coef: float | None = None) -> PiecewiseUtility:
    """``coef * x**p``; the default coefficient ``1/p`` gives slope ``x**(p-1)``."""
    c = 1.0 / p if coef is None else coef
    return PiecewiseUtility((Piece("power", 0.0, coef=c, exponent=p),), name=f"power{p:g}")


def kink_utility() -> PiecewiseUtility:
    """``min(2 sqrt(x), 1 + sqrt(x))``: kinked at 1 with slopes 1 (left) and 1/2 (right)."""
    return PiecewiseUtility.from_pieces(
        [
            {"kind": "power", "knot": 0.0, "coefficient": 2.0, "exponent": 0.5},
            {"kind": "power", "knot": 1.0, "coefficient": 1.0, "exponent": 0.5},
        ],
        name="kink",
    )


def capped_linear_utility(cap: float = 1.0) -> PiecewiseUtility:
    """``min(x, cap)``."""
    return PiecewiseUtility.from_pieces(
        [{"kind": "linear", "knot": 0.0, "slope": 1.0}, {"kind": "linear", "knot": cap, "slope": 0.0}],
        name="capped",
    )
