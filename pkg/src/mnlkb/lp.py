"""Small dense linear programs.

Backed by the HiGHS dual simplex shipped with scipy; this module only fixes
the tolerances, the constraint representation and the dual sign convention
(every reported dual is d(optimal objective)/d(rhs) in the caller's sense).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy.optimize import linprog

Relation = Literal["<=", "==", ">="]

FEAS_TOL = 1e-9
OPT_TOL = 1e-8
MAX_NONZEROS = 10_000

_HIGHS_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


@dataclass
class LinearProgram:
    objective: np.ndarray
    constraints: list[tuple[np.ndarray, Relation, float]] = field(default_factory=list)
    sense: Literal["max", "min"] = "max"
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    @property
    def n_vars(self) -> int:
        return len(self.objective)

    def add(self, coeffs: Sequence[float], rel: Relation, rhs: float) -> None:
        self.constraints.append((np.asarray(coeffs, dtype=float), rel, float(rhs)))


@dataclass
class LpSolution:
    status: Literal["optimal", "infeasible", "unbounded"]
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    objective: float = float("nan")
    reduced_lower: np.ndarray | None = None
    reduced_upper: np.ndarray | None = None


def _validate(lp: LinearProgram, max_nonzeros: int) -> None:
    c = np.asarray(lp.objective, dtype=float)
    if c.ndim != 1 or not np.all(np.isfinite(c)):
        raise ValueError("objective must be a finite vector")
    if lp.sense not in ("max", "min"):
        raise ValueError(f"unknown sense {lp.sense!r}")
    nnz = int(np.count_nonzero(c))
    for coeffs, rel, rhs in lp.constraints:
        if len(coeffs) != len(c):
            raise ValueError("constraint width does not match the objective")
        if rel not in ("<=", "==", ">="):
            raise ValueError(f"unknown relation {rel!r}")
        if not (np.all(np.isfinite(coeffs)) and np.isfinite(rhs)):
            raise ValueError("constraint data must be finite")
        nnz += int(np.count_nonzero(coeffs))
    if nnz > max_nonzeros:
        raise ValueError(f"program has {nnz} nonzeros, above the cap of {max_nonzeros}")


def solve(lp: LinearProgram, max_nonzeros: int = MAX_NONZEROS) -> LpSolution:
    _validate(lp, max_nonzeros)
    n = lp.n_vars
    sign = -1.0 if lp.sense == "max" else 1.0
    c = sign * np.asarray(lp.objective, dtype=float)

    ub_rows, ub_rhs, ub_src, ub_flip = [], [], [], []
    eq_rows, eq_rhs, eq_src = [], [], []
    for k, (coeffs, rel, rhs) in enumerate(lp.constraints):
        if rel == "==":
            eq_rows.append(coeffs)
            eq_rhs.append(rhs)
            eq_src.append(k)
        else:
            flip = -1.0 if rel == ">=" else 1.0
            ub_rows.append(flip * coeffs)
            ub_rhs.append(flip * rhs)
            ub_src.append(k)
            ub_flip.append(flip)

    lower = np.zeros(n) if lp.lower is None else np.asarray(lp.lower, dtype=float)
    upper = np.full(n, np.inf) if lp.upper is None else np.asarray(lp.upper, dtype=float)
    bounds = [(None if not np.isfinite(lo) else lo, None if not np.isfinite(hi) else hi) for lo, hi in zip(lower, upper)]

    res = linprog(
        c,
        A_ub=np.array(ub_rows) if ub_rows else None,
        b_ub=np.array(ub_rhs) if ub_rows else None,
        A_eq=np.array(eq_rows) if eq_rows else None,
        b_eq=np.array(eq_rhs) if eq_rows else None,
        bounds=bounds,
        method="highs-ds",
        options=_HIGHS_OPTIONS,
    )
    if res.status == 2:
        return LpSolution("infeasible")
    if res.status == 3:
        return LpSolution("unbounded")
    if res.status != 0:
        raise RuntimeError(f"LP solver failed: {res.message}")

    duals = np.zeros(len(lp.constraints))
    if ub_rows:
        duals[ub_src] = sign * np.asarray(res.ineqlin.marginals) * np.asarray(ub_flip)
    if eq_rows:
        duals[eq_src] = sign * np.asarray(res.eqlin.marginals)
    x = np.asarray(res.x, dtype=float)
    return LpSolution(
        status="optimal",
        x=x,
        duals=duals,
        objective=float(np.asarray(lp.objective, dtype=float) @ x),
        reduced_lower=sign * np.asarray(res.lower.marginals),
        reduced_upper=sign * np.asarray(res.upper.marginals),
    )


def dual_objective(lp: LinearProgram, sol: LpSolution) -> float:
    """Objective of the dual certificate implied by ``sol`` (for gap checks)."""
    n = lp.n_vars
    lower = np.zeros(n) if lp.lower is None else np.asarray(lp.lower, dtype=float)
    upper = np.full(n, np.inf) if lp.upper is None else np.asarray(lp.upper, dtype=float)
    rhs = np.array([b for _, _, b in lp.constraints])
    total = float(sol.duals @ rhs) if len(rhs) else 0.0
    lo = np.where(np.isfinite(lower), lower, 0.0)
    hi = np.where(np.isfinite(upper), upper, 0.0)
    return total + float(sol.reduced_lower @ lo) + float(sol.reduced_upper @ hi)


def max_violation(lp: LinearProgram, x: np.ndarray) -> float:
    """Largest constraint or bound violation of ``x``."""
    worst = 0.0
    for coeffs, rel, rhs in lp.constraints:
        lhs = float(coeffs @ x)
        if rel == "<=":
            worst = max(worst, lhs - rhs)
        elif rel == ">=":
            worst = max(worst, rhs - lhs)
        else:
            worst = max(worst, abs(lhs - rhs))
    lower = np.zeros(lp.n_vars) if lp.lower is None else np.asarray(lp.lower, dtype=float)
    upper = np.full(lp.n_vars, np.inf) if lp.upper is None else np.asarray(lp.upper, dtype=float)
    worst = max(worst, float(np.max(lower - x, initial=0.0)), float(np.max(x - upper, initial=0.0)))
    return worst
