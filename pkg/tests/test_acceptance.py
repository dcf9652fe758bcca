"""Acceptance criteria 1-8, one pass/fail line each.

Run with ``pytest tests/test_acceptance.py`` (lines appear in the terminal
summary) or directly as a script. ``DUALMAX_SEED`` fixes the random
populations.
"""

from __future__ import annotations

import dataclasses
import math
import time

import numpy as np
import pytest

from dualmax.dual_domain import DualMeasure, build_dual_cone
from dualmax.duality import SolveOptions, solve, verify_relations
from dualmax.errors import AssumptionFailure, WealthBelowEndowmentBound
from dualmax.instances import (
    BIN3_ENDOWMENT,
    Instance,
    arbitrage,
    bin1,
    bin2,
    random_claim,
    random_instance,
    random_tree_raw,
    seed_from_env,
)
from dualmax.market import build_market, cone_contains, gains_process
from dualmax.oracle import brute_conjugate, brute_dual, brute_primal
from dualmax.superhedge import decompose_claim, superrep_price, superreplicable_dual, superreplicable_primal
from dualmax.utility import (
    asymptotic_elasticity,
    capped_linear_utility,
    conjugate_argmax,
    conjugate_eval,
    kink_utility,
    log_utility,
    power_utility,
    u_eval,
)

LINES: list[str] = []
TIME_LIMIT = 60.0


def record(n: int, ok: bool, detail: str, started: float) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({time.perf_counter() - started:.1f}s) {detail}"
    LINES.append(line)
    print(line)


def fixtures() -> list[Instance]:
    (t1, c1), (t2, c2) = bin1(), bin2()
    U = log_utility()
    return [
        Instance(t1, c1, U, np.zeros(2), 1.0, "BIN1"),
        Instance(t2, c2, U, np.zeros(2), 1.0, "BIN2"),
        Instance(t1, c1, U, np.array(BIN3_ENDOWMENT), 1.0, "BIN3"),
    ]


def population(n: int, small: bool = False, offset: int = 0) -> list[Instance]:
    rng = np.random.default_rng(seed_from_env() + offset)
    return [random_instance(rng, small=small, label=f"random-{k}") for k in range(n)]


def claim_pairs(n: int):
    rng = np.random.default_rng(seed_from_env() + 3)
    for _ in range(n):
        tree, cone = build_market(random_tree_raw(rng))
        yield tree, cone, random_claim(rng, tree, cone)


@pytest.fixture(scope="module")
def solved():
    """Criterion 1 population with the solve outcome of each instance."""
    started = time.perf_counter()
    out = []
    for inst in fixtures() + population(50):
        try:
            rep = solve(inst.tree, inst.cone, inst.utility, inst.endowment, inst.wealth, SolveOptions(tol=1e-6))
            out.append((inst, rep, None))
        except Exception as exc:  # a failed solve is a criterion failure, not an error
            out.append((inst, None, exc))
    return out, time.perf_counter() - started


def test_criterion_1_strong_duality(solved):
    started = time.perf_counter()
    results, elapsed = solved
    bad = []
    for inst, rep, exc in results:
        if rep is None:
            bad.append(f"{inst.label}: {type(exc).__name__}")
            continue
        limit = 1e-9 if rep.backend == "lp" else 1e-6
        if not abs(rep.u_value - rep.w_value) <= limit:
            bad.append(f"{inst.label}: gap {abs(rep.u_value - rep.w_value):.2e}")
    worst = max((abs(r.u_value - r.w_value) for _, r, _ in results if r is not None), default=math.nan)
    ok = not bad and elapsed < TIME_LIMIT
    record(1, ok, f"{len(results)} instances, worst |u-w| {worst:.1e}, solve time {elapsed:.1f}s; {bad[:3]}",
           started - elapsed)
    assert ok, bad


def test_criterion_2_optimality_relations(solved):
    started = time.perf_counter()
    results, _ = solved
    bad = []
    checked = 0
    for inst, rep, _ in results:
        if rep is None:
            continue
        checked += 1
        dc = build_dual_cone(inst.tree, inst.cone)
        U, B = inst.utility, inst.endowment
        if not verify_relations(rep, U, B, 1e-6, dc, strict=False).passed:
            bad.append(f"{inst.label}: verify failed")
        nu = rep.nu_star
        bump = np.zeros_like(nu.weights)
        bump[int(np.argmax(nu.weights))] = 1e-3
        tampered = {
            "X": dataclasses.replace(rep, X_star=np.asarray(rep.X_star) + bump),
            "nu": dataclasses.replace(rep, nu_star=DualMeasure(nu.weights + bump, nu.probs)),
            "x": dataclasses.replace(rep, x=rep.x + 1e-3),
        }
        for name, r in tampered.items():
            if verify_relations(r, U, B, 1e-6, dc, strict=False).passed:
                bad.append(f"{inst.label}: {name} perturbation accepted")
    ok = not bad and checked > 0 and time.perf_counter() - started < TIME_LIMIT
    record(2, ok, f"{checked} reports verified, 3 perturbations each; {bad[:3]}", started)
    assert ok, bad


def test_criterion_3_superreplication_equivalence():
    started = time.perf_counter()
    bad = []
    agree = feasible = 0
    for k, (tree, cone, R) in enumerate(claim_pairs(200)):
        dc = build_dual_cone(tree, cone)
        primal = superreplicable_primal(tree, cone, R).feasible
        dual = superreplicable_dual(dc, tree, R)
        agree += primal == dual
        feasible += primal
        if primal != dual:
            bad.append(f"pair {k}: primal {primal} dual {dual}")
        price = superrep_price(dc, tree, R)
        if not superreplicable_primal(tree, cone, R - price - 1e-6).feasible:
            bad.append(f"pair {k}: R - price - 1e-6 not hedgeable")
        if superreplicable_primal(tree, cone, R - price + 1e-4).feasible:
            bad.append(f"pair {k}: R - price + 1e-4 hedgeable")
    ok = not bad and time.perf_counter() - started < TIME_LIMIT
    record(3, ok, f"{agree}/200 agree ({feasible} hedgeable), price brackets checked; {bad[:3]}", started)
    assert ok, bad


def test_criterion_4_optional_decomposition():
    started = time.perf_counter()
    bad = []
    for k, (tree, cone, R) in enumerate(claim_pairs(200)):
        dc = build_dual_cone(tree, cone)
        dec = decompose_claim(dc, tree, cone, R)
        resid = np.max(np.abs(dec.V - (dec.V0 + gains_process(tree, dec.H) - dec.C)))
        if resid > 1e-8:
            bad.append(f"pair {k}: identity residual {resid:.1e}")
        drops = [dec.C[c] - dec.C[n] for n in tree.nonterminal for c in tree.children[n]]
        if min(drops) < -1e-8 or dec.C[tree.root] != 0.0:
            bad.append(f"pair {k}: consumption decreases")
        if not all(cone_contains(cone, dec.H[n]) for n in tree.nonterminal):
            bad.append(f"pair {k}: hedge outside the cone")
        if abs(dec.V0 - superrep_price(dc, tree, R)) > 1e-8:
            bad.append(f"pair {k}: V0 differs from the price")
    ok = not bad and time.perf_counter() - started < TIME_LIMIT
    record(4, ok, f"200 decompositions; {bad[:3]}", started)
    assert ok, bad


def test_criterion_5_closed_form_anchors():
    started = time.perf_counter()
    U = log_utility()
    (t1, c1), (t2, c2) = bin1(), bin2()
    d1, d2 = build_dual_cone(t1, c1), build_dual_cone(t2, c2)
    B3 = np.array(BIN3_ENDOWMENT)
    z = np.zeros(2)
    r1, r2, r3 = solve(t1, c1, U, z, 1.0), solve(t2, c2, U, z, 1.0), solve(t1, c1, U, B3, 1.0)
    checks = {
        "BIN1 u": (r1.u_value, 0.5 * math.log(9 / 8)),
        "BIN2 u": (r2.u_value, 0.0),
        "BIN3 u": (r3.u_value, -0.5 * math.log(2)),
        "BIN3 density up": (r3.nu_star.density[0], 1.0),
        "BIN3 density down": (r3.nu_star.density[1], 2.0),
        "BIN3 budget": (float(r3.nu_star.weights @ r3.X_star), 1.5),
        "BIN3 mass": (r3.x * r3.nu_star.mass, 1.5),
        "BIN1 call": (superrep_price(d1, t1, [1.0, 0.0]), 1 / 3),
        "BIN2 call": (superrep_price(d2, t2, [0.1, 0.0]), 1 / 12),
    }
    bad = [f"{k}: {got!r} vs {want!r}" for k, (got, want) in checks.items() if not abs(got - want) <= 1e-6]
    # the same anchors, independently by grid search and the LP-free price recursion
    oracle = {
        "BIN1 u": brute_primal(t1, c1, U, z, 1.0),
        "BIN2 u": brute_primal(t2, c2, U, z, 1.0),
        "BIN3 u": brute_primal(t1, c1, U, B3, 1.0),
    }
    for k, res in oracle.items():
        if not abs(res.value - checks[k][1]) <= res.error + 1e-6:
            bad.append(f"oracle {k}: {res.value!r}")
    dual3 = brute_dual(t1, d1, U, B3, 1.0)
    if not np.allclose(dual3.point / d1.probs, [1.0, 2.0], atol=1e-2):
        bad.append(f"oracle BIN3 densities {dual3.point / d1.probs}")
    for (t, c, d, R, want) in ((t1, c1, d1, [1.0, 0.0], 1 / 3), (t2, c2, d2, [0.1, 0.0], 1 / 12)):
        if abs(decompose_claim(d, t, c, R).V0 - want) > 1e-6:
            bad.append(f"decomposition price for {R}")
    ok = not bad and time.perf_counter() - started < TIME_LIMIT
    record(5, ok, f"{len(checks)} anchors and oracle confirmations; {bad[:3]}", started)
    assert ok, bad


def test_criterion_6_utility_calculus():
    started = time.perf_counter()
    rng = np.random.default_rng(seed_from_env() + 6)
    bad = []
    utilities = [log_utility(), kink_utility()] + [power_utility(p) for p in (0.1, 0.3, 0.5, 0.7, 0.9)]
    for k in range(10_000):
        U = utilities[k % len(utilities)]
        x, y = np.exp(rng.uniform(-8, 8, size=2))
        lhs, rhs = u_eval(U, x), conjugate_eval(U, y) + x * y
        if lhs > rhs + 1e-10 * max(1.0, abs(rhs)):
            bad.append(f"Fenchel-Young fails at {U.name} x={x} y={y}")
        iv = conjugate_argmax(U, y)
        xs = iv.lo if iv.lo > 0 else iv.hi
        if math.isfinite(xs) and xs > 0:
            if abs(conjugate_eval(U, y) + xs * y - u_eval(U, xs)) > 1e-8 * max(1.0, xs * y):
                bad.append(f"equality fails at {U.name} y={y}")
        elif abs(lhs - rhs) <= 1e-12 * max(1.0, abs(rhs)) and not iv.contains(x, 1e-8 * x):
            bad.append(f"equality outside argmax at {U.name} x={x} y={y}")
    ae = []
    for p in np.round(np.arange(1, 10) / 10, 1):
        est = asymptotic_elasticity(power_utility(float(p)))
        ae.append(abs(est.numeric - p / (1 - p)))
        if abs(est.numeric - p / (1 - p)) > 1e-3:
            bad.append(f"AE power {p}: numeric {est.numeric} vs {p / (1 - p)}")
    est = asymptotic_elasticity(log_utility())
    if abs(est.numeric - 0.0) > 1e-3:
        bad.append(f"AE log: numeric {est.numeric:.4f} vs closed form 0")
    ok = not bad and time.perf_counter() - started < TIME_LIMIT
    record(6, ok, f"10^4 Fenchel-Young pairs, AE power worst {max(ae):.1e}; {bad[:3]}", started)
    assert ok, bad


def test_criterion_7_oracle_equivalence():
    started = time.perf_counter()
    bad = []
    cases = fixtures() + population(50, small=True, offset=7)
    for inst in cases:
        tree, cone, U, B, x = inst.tree, inst.cone, inst.utility, inst.endowment, inst.wealth
        dc = build_dual_cone(tree, cone)
        rep = solve(tree, cone, U, B, x)
        bp, bd = brute_primal(tree, cone, U, B, x), brute_dual(tree, dc, U, B, x)
        if abs(bp.value - rep.u_value) > bp.error + 1e-6:
            bad.append(f"{inst.label} primal {bp.value!r} vs {rep.u_value!r} (err {bp.error:.1e})")
        if abs(bd.value - rep.w_value) > bd.error + 1e-6:
            bad.append(f"{inst.label} dual {bd.value!r} vs {rep.w_value!r} (err {bd.error:.1e})")
        for y in rep.nu_star.density[:1]:
            if y > 0 and abs(brute_conjugate(U, float(y)).value - conjugate_eval(U, float(y))) > 1e-6:
                bad.append(f"{inst.label} conjugate at {y}")
    ok = not bad and time.perf_counter() - started < TIME_LIMIT
    record(7, ok, f"{len(cases)} instances against grid oracles; {bad[:3]}", started)
    assert ok, bad


def test_criterion_8_assumption_gating():
    started = time.perf_counter()
    bad = []
    U = log_utility()
    try:
        solve(*arbitrage(), U, np.zeros(2), 1.0)
        bad.append("arbitrage model accepted")
    except AssumptionFailure as exc:
        if "msup" not in exc.failures:
            bad.append(f"arbitrage refused for {exc.failures}")
    try:
        solve(*bin1(), capped_linear_utility(), np.zeros(2), 1.0)
        bad.append("capped utility accepted")
    except AssumptionFailure as exc:
        if "inada" not in exc.failures:
            bad.append(f"capped utility refused for {exc.failures}")
    try:
        solve(*bin1(), U, np.array(BIN3_ENDOWMENT), 0.2)
        bad.append("wealth below the bound accepted")
    except WealthBelowEndowmentBound as exc:
        if "0.333" not in str(exc) or abs(exc.bound - 1 / 3) > 1e-9:
            bad.append(f"bound not reported: {exc}")
    ok = not bad and time.perf_counter() - started < TIME_LIMIT
    record(8, ok, f"arbitrage, capped utility and low wealth refused; {bad[:3]}", started)
    assert ok, bad


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
