"""Utility maximization with a random endowment on finite scenario trees
under convex-cone trading constraints, solved in primal and dual form."""

from .dual_domain import (
    DualMeasure,
    PolyhedralCone,
    build_dual_cone,
    dual_contains,
    endowment_bound,
    find_msup_element,
    max_pairing,
)
from .duality import (
    SolveOptions,
    SolveReport,
    check_assumptions,
    pairing,
    solve,
    solve_dual,
    solve_primal,
    verify_relations,
)
from .errors import DualMaxError
from .market import (
    ScenarioTree,
    Strategy,
    TradingCone,
    build_market,
    cone_contains,
    gains_process,
    is_admissible,
    terminal_gains,
)
from .oracle import GridSpec, brute_conjugate, brute_dual, brute_primal
from .superhedge import decompose_claim, superrep_price, superreplicable_dual, superreplicable_primal
from .utility import (
    PiecewiseUtility,
    asymptotic_elasticity,
    check_inada,
    conjugate_argmax,
    conjugate_eval,
    conjugate_subdiff,
    log_utility,
    power_utility,
    u_eval,
    u_subdiff,
)

__version__ = "0.1.0"

__all__ = [
    "DualMaxError",
    "DualMeasure",
    "GridSpec",
    "PiecewiseUtility",
    "PolyhedralCone",
    "ScenarioTree",
    "SolveOptions",
    "SolveReport",
    "Strategy",
    "TradingCone",
    "asymptotic_elasticity",
    "brute_conjugate",
    "brute_dual",
    "brute_primal",
    "build_dual_cone",
    "build_market",
    "check_assumptions",
    "check_inada",
    "cone_contains",
    "conjugate_argmax",
    "conjugate_eval",
    "conjugate_subdiff",
    "decompose_claim",
    "dual_contains",
    "endowment_bound",
    "find_msup_element",
    "gains_process",
    "is_admissible",
    "log_utility",
    "max_pairing",
    "pairing",
    "power_utility",
    "solve",
    "solve_dual",
    "solve_primal",
    "superrep_price",
    "superreplicable_dual",
    "superreplicable_primal",
    "terminal_gains",
    "u_eval",
    "u_subdiff",
    "verify_relations",
]
