"""Thin wrapper over scipy's HiGHS interface with tight tolerances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

LP_TOL = 1e-9
_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


@dataclass
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded" | "error"
    x: np.ndarray | None
    value: float
    ineq_duals: np.ndarray | None
    eq_duals: np.ndarray | None
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


_STATUS = {0: "optimal", 2: "infeasible", 3: "unbounded"}


def solve_lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=(0, None)) -> LPResult:
    """Minimise ``c @ x``. Dual values are returned as nonnegative multipliers
    for ``<=`` rows (``lambda >= 0`` with ``c + A_ub^T lambda + ... = reduced costs``).
    """
    # HiGHS occasionally reports numerical trouble on badly scaled cut sets;
    # a second attempt without presolve usually clears it
    for options in (_OPTIONS, {**_OPTIONS, "presolve": False}):
        res = linprog(
            c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
            method="highs", options=options,
        )
        if res.status != 4:
            break
    status = _STATUS.get(res.status, "error")
    if status != "optimal":
        return LPResult(status, None, np.nan, None, None, res.message)
    ineq = -np.asarray(res.ineqlin.marginals) if A_ub is not None else None
    eq = -np.asarray(res.eqlin.marginals) if A_eq is not None else None
    return LPResult(status, np.asarray(res.x), float(res.fun), ineq, eq, res.message)
