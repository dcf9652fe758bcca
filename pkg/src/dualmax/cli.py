"""Command-line interface: ``dualmax {check,solve,price,decompose,verify,oracle}``.

Exit codes: 0 success, 1 no convergence or a violated relation, 2 a failed
hypothesis (assumptions, arbitrage, wealth at or below the endowment bound),
3 unreadable or malformed input.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass

import numpy as np

from . import jsonio
from .dual_domain import DualMeasure, build_dual_cone, endowment_bound, max_pairing
from .duality import (
    BOUND_MARGIN,
    SolveOptions,
    SolveReport,
    check_assumptions,
    relation_residuals,
    solve,
    verify_relations,
)
from .errors import (
    AssumptionFailure,
    DimensionTooLarge,
    DualMaxError,
    EmptyFeasibleGrid,
    InfeasibleDualDomain,
    ModelError,
    NoConvergence,
    RelationViolated,
    WealthBelowEndowmentBound,
)
from .market import Strategy, terminal_gains
from .oracle import GridSpec, brute_dual, brute_primal
from .superhedge import decompose_claim, superreplicable_primal

EXIT_OK, EXIT_FAIL, EXIT_ASSUMPTION, EXIT_INPUT = 0, 1, 2, 3


@dataclass(frozen=True)
class RunConfig:
    """Validated options of one invocation."""

    command: str
    model: str | None = None
    report: str | None = None
    utility: str | None = None
    claim: str | None = None
    wealth: float | None = None
    tol: float = 1e-6
    backend: str = "auto"
    force: bool = False
    out: str | None = None
    grid: GridSpec | None = None

    def __post_init__(self):
        if not 0 < self.tol <= 1e-2:
            raise ValueError(f"tolerance {self.tol} outside (0, 1e-2]")
        if self.wealth is not None and not math.isfinite(self.wealth):
            raise ValueError(f"wealth must be finite, got {self.wealth}")

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        fields = {k: v for k, v in vars(args).items() if k in cls.__dataclass_fields__}
        return cls(**fields)


def parse_grid(text: str) -> GridSpec:
    """``lo:hi:count`` per axis, axes separated by commas."""
    try:
        axes = [tuple(part.split(":")) for part in text.split(",")]
        lo = tuple(float(a[0]) for a in axes)
        hi = tuple(float(a[1]) for a in axes)
        counts = tuple(int(a[2]) for a in axes)
    except (IndexError, ValueError) as exc:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}; expected lo:hi:count[,lo:hi:count...]") from exc
    try:
        return GridSpec(lo, hi, counts)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dualmax", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, utility=False, claim_flag="--endowment", wealth=False):
        p.add_argument("model", help="model JSON file")
        if utility:
            p.add_argument("--utility", required=True, help="utility JSON file")
        p.add_argument(claim_flag, dest="claim", help="claim JSON file ({'values': {leaf: value}})")
        if wealth:
            p.add_argument("--wealth", type=float, required=True, help="initial wealth x")
        p.add_argument("--out", help="write the JSON result here instead of stdout")

    p = sub.add_parser("check", help="report the solver hypotheses for a model and utility")
    common(p, utility=True)
    for name in ("solve", "oracle"):
        p = sub.add_parser(name, help="solve the primal and dual problems" if name == "solve"
                           else "brute-force the primal and dual values on a grid")
        common(p, utility=True, wealth=True)
        p.add_argument("--tol", type=float, default=1e-6)
        p.add_argument("--backend", default="auto", choices=["auto", "lp", "subgradient", "convex", "brute"])
        p.add_argument("--force", action="store_true", help="run even if a hypothesis fails")
        p.add_argument("--grid", type=parse_grid, help="holdings grid, lo:hi:count per axis")
    p = sub.add_parser("price", help="super-replication price of a claim")
    common(p, claim_flag="--claim")
    p = sub.add_parser("decompose", help="optional decomposition of a claim's value process")
    common(p, claim_flag="--claim")
    p = sub.add_parser("verify", help="re-check the optimality relations of a saved report")
    p.add_argument("report", help="report JSON written by solve or oracle")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--out")
    return parser


def _emit(result: dict, out: str | None, inputs=()) -> None:
    if out:
        jsonio.write_json(out, result, inputs)
    else:
        print(jsonio.dumps(result))


def _load(cfg, need_utility=True, need_cone=True):
    tree, cone = jsonio.load_model(cfg.model)
    if need_cone and cone is None:
        raise ModelError(f"{cfg.model}: the model has no trading cone")
    U = jsonio.load_utility(cfg.utility) if need_utility else None
    claim = jsonio.load_claim(cfg.claim, tree) if cfg.claim else np.zeros(tree.n_leaves)
    return tree, cone, U, claim


def _inputs(cfg, tree, cone, U, claim) -> dict:
    raw = {"model": jsonio.model_to_raw(tree, cone), "endowment": jsonio.claim_to_raw(tree, claim)}
    if U is not None:
        raw["utility"] = jsonio.utility_to_raw(U)
    if getattr(cfg, "wealth", None) is not None:
        raw["wealth"] = cfg.wealth
    return raw


def cmd_check(cfg) -> int:
    tree, cone, U, B = _load(cfg)
    report = check_assumptions(tree, cone, U, B)
    _emit(report, cfg.out, (cfg.model, cfg.utility, cfg.claim))
    return EXIT_OK if report["passes"] else EXIT_ASSUMPTION


def cmd_solve(cfg) -> int:
    if cfg.backend == "brute":
        return cmd_oracle(cfg)
    tree, cone, U, B = _load(cfg)
    options = SolveOptions(tol=cfg.tol, backend=cfg.backend, force=cfg.force)
    report = solve(tree, cone, U, B, cfg.wealth, options)
    raw = jsonio.report_to_raw(report, _inputs(cfg, tree, cone, U, B))
    _emit(raw, cfg.out, (cfg.model, cfg.utility, cfg.claim))
    return EXIT_OK


def cmd_oracle(cfg) -> int:
    tree, cone, U, B = _load(cfg)
    dc = build_dual_cone(tree, cone)
    bound = endowment_bound(dc, tree, B)
    if cfg.wealth <= bound + BOUND_MARGIN:
        raise WealthBelowEndowmentBound(cfg.wealth, bound)
    primal = brute_primal(tree, cone, U, B, cfg.wealth, cfg.grid)
    dual = brute_dual(tree, dc, U, B, cfg.wealth)
    H = np.zeros((tree.n_nodes, tree.d))
    H[tree.nonterminal] = primal.point
    X = cfg.wealth + terminal_gains(tree, Strategy(H))
    nu = DualMeasure(dual.point, dc.probs)
    report = SolveReport(
        x=cfg.wealth, u_value=primal.value, w_value=dual.value, gap=abs(primal.value - dual.value),
        X_star=X, H_star=Strategy(H), nu_star=nu, y_star=nu.mass, residuals={}, backend="brute",
        iterations=primal.evaluations + dual.evaluations, leaf_ids=[int(v) for v in tree.leaves],
        assumptions={"oracle_error": {"primal": primal.error, "dual": dual.error}},
    )
    report.residuals = relation_residuals(report, U, B)
    raw = jsonio.report_to_raw(report, _inputs(cfg, tree, cone, U, B))
    _emit(raw, cfg.out, (cfg.model, cfg.utility, cfg.claim))
    return EXIT_OK


def cmd_price(cfg) -> int:
    tree, cone, _, R = _load(cfg, need_utility=False)
    dc = build_dual_cone(tree, cone)
    price, nu = max_pairing(dc, R)
    primal = superreplicable_primal(tree, cone, R - price)
    result = {
        "price": price,
        "nu": {str(int(leaf)): float(v) for leaf, v in zip(tree.leaves, nu)},
        "hedged_at_price": primal.feasible,
        "shortfall_at_price": primal.shortfall,
        "inputs": _inputs(cfg, tree, cone, None, R),
    }
    _emit(result, cfg.out, (cfg.model, cfg.claim))
    return EXIT_OK


def cmd_decompose(cfg) -> int:
    tree, cone, _, R = _load(cfg, need_utility=False)
    dec = decompose_claim(build_dual_cone(tree, cone), tree, cone, R)
    result = jsonio.decomposition_to_raw(dec, tree)
    result["inputs"] = _inputs(cfg, tree, cone, None, R)
    _emit(result, cfg.out, (cfg.model, cfg.claim))
    return EXIT_OK


def cmd_verify(cfg) -> int:
    raw = jsonio.read_json(cfg.report)
    if "inputs" not in raw:
        raise ModelError(f"{cfg.report}: report carries no inputs to verify against")
    inputs = raw["inputs"]
    tree, cone = jsonio.parse_model(inputs["model"], cfg.report)
    U = jsonio.parse_utility(inputs["utility"], cfg.report)
    B = jsonio.parse_claim(inputs["endowment"], tree, cfg.report)
    report = jsonio.report_from_raw(raw, tree)
    dc = build_dual_cone(tree, cone) if cone is not None else None
    cert = verify_relations(report, U, B, tol=cfg.tol, dc=dc, strict=False)
    result = {"passed": cert.passed, "tol": cert.tol, "checks": cert.checks}
    _emit(result, cfg.out, (cfg.report,))
    if not cert.passed:
        raise RelationViolated(*cert.first_failure())
    return EXIT_OK


COMMANDS = {
    "check": cmd_check,
    "solve": cmd_solve,
    "oracle": cmd_oracle,
    "price": cmd_price,
    "decompose": cmd_decompose,
    "verify": cmd_verify,
}


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, (NoConvergence, RelationViolated, EmptyFeasibleGrid, DimensionTooLarge)):
        return EXIT_FAIL
    if isinstance(exc, (AssumptionFailure, WealthBelowEndowmentBound, InfeasibleDualDomain)):
        return EXIT_ASSUMPTION
    if isinstance(exc, (ModelError, OSError, ValueError, KeyError)):
        return EXIT_INPUT
    return EXIT_FAIL


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](RunConfig.from_args(args))
    except (DualMaxError, OSError, ValueError, KeyError) as exc:
        print(f"dualmax {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
