"""Per-epoch optimistic program, its reduced dual and the OPT-LP benchmark.

The optimistic program over distributions y on assortments |S| <= K is

    max  sum_S y_S sum_{i in S} r_i ucb_i / (1 + sum_S lcb)
    s.t. sum_S y_S lcb_i / (1 + sum_S ucb) <= (1 - omega) q_i / T   for all i
         sum_S y_S = 1,  y >= 0.

Dividing constraint i by lcb_i / ucb_i turns every row into the same shape,
    sum_S y_S pi_i(S) <= qt_i,  pi_i(S) = ucb_i / (1 + sum_S ucb),
so that a dual point (lambda, theta) is separated by one difference-of-MNL
maximization.  Products with lcb_i = 0 consume nothing and lose their row.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from . import diffassort as da
from .errors import CapabilityError, SolverStall
from .lp import LinearProgram, solve
from .mnl import Assortment, Instance, all_assortments, incidence

log = logging.getLogger(__name__)

DEFAULT_C = 288.0
TOL_CUT = 1e-7


@dataclass(frozen=True)
class OptimisticBounds:
    ucb: np.ndarray
    lcb: np.ndarray

    def __post_init__(self):
        u = np.array(self.ucb, dtype=float)
        l = np.array(self.lcb, dtype=float)
        if u.shape != l.shape:
            raise ValueError("ucb and lcb must have the same length")
        if np.any(l < 0) or np.any(l > u + 1e-15):
            raise ValueError("bounds must satisfy 0 <= lcb <= ucb")
        u.setflags(write=False)
        l.setflags(write=False)
        object.__setattr__(self, "ucb", u)
        object.__setattr__(self, "lcb", l)

    @classmethod
    def exact(cls, utilities) -> "OptimisticBounds":
        return cls(ucb=utilities, lcb=utilities)


@dataclass(frozen=True)
class ReducedProgram:
    """Data of the rewritten program.

    ``weights`` are the objective numerators r_i ucb_i (the reduced reward
    r_i ucb_i / lcb_i times lcb_i, kept as a product so lcb_i = 0 is fine).
    ``reduced_caps`` is +inf on the zero-lcb set, whose rows are dropped.
    """

    weights: np.ndarray
    reduced_caps: np.ndarray
    zero_lcb_set: tuple[int, ...]
    omega: float
    bounds: OptimisticBounds
    cap: int

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def reduced_rewards(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.bounds.lcb > 0, self.weights / self.bounds.lcb, np.inf)

    @property
    def active(self) -> np.ndarray:
        """0-based indices of products that keep a capacity row."""
        return np.flatnonzero(np.isfinite(self.reduced_caps))

    def objective(self, s: Sequence[int]) -> float:
        idx = np.asarray(s, dtype=np.int64) - 1
        return float(self.weights[idx].sum() / (1.0 + self.bounds.lcb[idx].sum())) if len(idx) else 0.0

    def consumption(self, s: Sequence[int]) -> np.ndarray:
        """pi_i(S) for every product (zero outside S)."""
        out = np.zeros(self.n)
        idx = np.asarray(s, dtype=np.int64) - 1
        if len(idx):
            out[idx] = self.bounds.ucb[idx] / (1.0 + self.bounds.ucb[idx].sum())
        return out

    def separation_instance(self, thetas) -> da.DiffAssortInstance:
        return da.DiffAssortInstance(self.weights, self.bounds.lcb, thetas, self.bounds.ucb, self.cap)


@dataclass(frozen=True)
class DualPoint:
    lam: float
    thetas: np.ndarray

    def value(self, reduced: ReducedProgram) -> float:
        caps = np.where(np.isfinite(reduced.reduced_caps), reduced.reduced_caps, 0.0)
        return float(self.lam + self.thetas @ caps)


@dataclass
class SparseDistribution:
    support: list[tuple[Assortment, float]]
    objective: float = float("nan")
    oracle_calls: int = 0
    dual_value: float = float("nan")
    columns: list[Assortment] = field(default_factory=list)

    def __post_init__(self):
        if not self.support:
            raise ValueError("empty support")
        if any(w <= 0 for _, w in self.support):
            raise ValueError("support weights must be positive")
        total = sum(w for _, w in self.support)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {total}, not 1")

    @classmethod
    def from_weights(cls, sets: Sequence[Assortment], y: np.ndarray, **kw) -> "SparseDistribution":
        y = np.where(y > 1e-12, y, 0.0)
        y = y / y.sum()
        return cls(support=[(s, float(w)) for s, w in zip(sets, y) if w > 0], **kw)

    @classmethod
    def point(cls, s: Assortment, **kw) -> "SparseDistribution":
        return cls(support=[(tuple(s), 1.0)], **kw)

    def as_dict(self) -> dict[Assortment, float]:
        return dict(self.support)


@dataclass
class PlannerConfig:
    oracle_mode: Literal["exact", "dp"] = "exact"
    eps_oracle: float = 0.05
    tol_cut: float = TOL_CUT
    max_cuts: int | None = None  # default 50 * N


# ---------------------------------------------------------------------------


def compute_omega(inst: Instance, c_const: float = DEFAULT_C) -> float:
    """Raw shrinkage factor; may exceed 1 at small inventories."""
    if c_const <= 0:
        raise ValueError("c_const must be positive")
    k, t, n, vmax = inst.cardinality_cap, float(inst.horizon), inst.n_products, inst.v_max
    lt = math.log(t)
    total = (
        (k + 1) * t ** 0.25
        + 8 * (k + 1) * math.sqrt((k + 1) * t ** 0.25) * lt
        + 5 * math.sqrt(vmax * t * lt)
        + 3 * lt
        + 2 * c_const * math.log(math.sqrt(n) * t ** 4 + 1) * (n + math.sqrt(k * n * t * vmax))
        + (k + 1) * math.sqrt(6 * (k + 1) * t) * lt
    )
    return total / inst.q_min


def reduce(inst: Instance, bounds: OptimisticBounds, omega: float) -> ReducedProgram:
    if not 0.0 <= omega < 1.0:
        raise ValueError(f"omega must lie in [0, 1), got {omega}")
    if len(bounds.ucb) != inst.n_products:
        raise ValueError("bounds do not match the instance")
    lcb, ucb = bounds.lcb, bounds.ucb
    zero = lcb <= 0
    q = inst.inventories.astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        caps = np.where(zero, np.inf, (1.0 - omega) * q * ucb / (inst.horizon * lcb))
    return ReducedProgram(
        weights=inst.revenues * ucb,
        reduced_caps=caps,
        zero_lcb_set=tuple(int(i) + 1 for i in np.flatnonzero(zero)),
        omega=float(omega),
        bounds=bounds,
        cap=inst.cardinality_cap,
    )


def separation(reduced: ReducedProgram, dual: DualPoint, mode: str = "exact", eps: float = 0.05) -> tuple[Assortment, float]:
    """Most violated dual constraint at ``dual``: (S, value - lambda)."""
    thetas = np.asarray(dual.thetas, dtype=float).copy()
    thetas[~np.isfinite(reduced.reduced_caps)] = 0.0
    inst = reduced.separation_instance(thetas)
    if not np.any(thetas > 0):
        s, val = da.mnl_ratio_max(reduced.weights, reduced.bounds.lcb, reduced.cap)
    elif mode == "exact":
        s, val = da.exact_solve(inst)
    elif mode == "dp":
        s, val = da.approx_solve(inst, eps)
    else:
        raise ValueError(f"unknown oracle mode {mode!r}")
    return s, val - dual.lam


def _restricted_primal(reduced: ReducedProgram, columns: list[Assortment]):
    active = reduced.active
    obj = np.array([reduced.objective(s) for s in columns])
    lp = LinearProgram(objective=obj, sense="max")
    lp.add(np.ones(len(columns)), "==", 1.0)
    if len(active):
        cons = np.array([reduced.consumption(s)[active] for s in columns])
        for j, i in enumerate(active):
            lp.add(cons[:, j], "<=", reduced.reduced_caps[i])
    sol = solve(lp, max_nonzeros=10 ** 7)
    if sol.status != "optimal":
        raise RuntimeError(f"restricted program is {sol.status}")
    thetas = np.zeros(reduced.n)
    thetas[active] = np.maximum(sol.duals[1:], 0.0)
    return sol, DualPoint(lam=float(sol.duals[0]), thetas=thetas)


def solve_optimistic(reduced: ReducedProgram, config: PlannerConfig | None = None,
                     warm_start: Sequence[Assortment] = ()) -> SparseDistribution:
    """Cutting-plane solve of the reduced dual with primal retrieval.

    Each round solves the restricted primal over the current columns (its
    duals are the restricted dual optimum), asks the oracle for a violated
    cut and adds it as a column.  Stops once the oracle certifies
    feasibility up to ``tol_cut``.
    """
    cfg = config or PlannerConfig()
    n = reduced.n
    best_set, best_val = da.mnl_ratio_max(reduced.weights, reduced.bounds.lcb, reduced.cap)
    calls = 1
    active = reduced.active
    if len(active) == 0 or np.all(reduced.consumption(best_set)[active] <= reduced.reduced_caps[active]):
        # no binding capacity: a point mass on the unconstrained best set is optimal
        return SparseDistribution.point(best_set, objective=best_val, oracle_calls=calls,
                                        dual_value=best_val, columns=[best_set])

    columns: list[Assortment] = [()]
    for s in list(warm_start) + [best_set]:
        if s not in columns:
            columns.append(tuple(s))
    max_cuts = cfg.max_cuts if cfg.max_cuts is not None else 50 * n
    sol = dual = None
    for _ in range(max_cuts):
        sol, dual = _restricted_primal(reduced, columns)
        s, violation = separation(reduced, dual, cfg.oracle_mode, cfg.eps_oracle)
        calls += 1
        if violation <= cfg.tol_cut or s in columns:
            return SparseDistribution.from_weights(
                columns, sol.x, objective=float(sol.objective), oracle_calls=calls,
                dual_value=dual.value(reduced), columns=columns)
        columns.append(s)
    sol, dual = _restricted_primal(reduced, columns)
    best = SparseDistribution.from_weights(columns, sol.x, objective=float(sol.objective), oracle_calls=calls,
                                           dual_value=dual.value(reduced), columns=columns)
    raise SolverStall(f"no certificate after {max_cuts} cuts", best=best)


def _enumeration_lp(sets, obj, cons, caps):
    lp = LinearProgram(objective=obj, sense="max")
    lp.add(np.ones(len(sets)), "==", 1.0)
    for i in range(cons.shape[1]):
        if np.any(cons[:, i] > 0):
            lp.add(cons[:, i], "<=", caps[i])
    sol = solve(lp, max_nonzeros=10 ** 8)
    if sol.status != "optimal":
        raise RuntimeError(f"enumeration LP is {sol.status}")
    return sol


def exact_solve_optimistic(inst: Instance, bounds: OptimisticBounds, omega: float,
                           max_n: int = da.ENUMERATION_CAP) -> tuple[float, SparseDistribution]:
    """The optimistic program written out over every assortment.

    Built from the original (unreduced) coefficients so it checks the
    reduction as well as the cut loop.  Accepts omega = 1.
    """
    n = inst.n_products
    if n > max_n:
        raise CapabilityError(f"enumeration is capped at N={max_n}, got N={n}")
    if not 0.0 <= omega <= 1.0:
        raise ValueError("omega must lie in [0, 1]")
    sets = all_assortments(n, inst.cardinality_cap)
    m = incidence(sets, n)
    obj = m @ (inst.revenues * bounds.ucb) / (1.0 + m @ bounds.lcb)
    cons = m * bounds.lcb / (1.0 + m @ bounds.ucb)[:, None]
    caps = (1.0 - omega) * inst.inventories / inst.horizon
    sol = _enumeration_lp(sets, obj, cons, caps)
    dist = SparseDistribution.from_weights(sets, sol.x, objective=float(sol.objective), columns=list(sets))
    return float(sol.objective), dist


def solve_opt_lp(inst: Instance, config: PlannerConfig | None = None,
                 method: Literal["auto", "enumerate", "columns"] = "auto") -> tuple[float, SparseDistribution]:
    """Fluid benchmark: max sum y_S R(S) s.t. sum y_S p_i(S) <= q_i / T.

    ``auto`` enumerates every assortment up to the enumeration cap and
    switches to column generation above it.
    """
    n, k, v = inst.n_products, inst.cardinality_cap, inst.true_utilities
    caps = inst.inventories / inst.horizon
    if method == "enumerate" or (method == "auto" and n <= da.ENUMERATION_CAP):
        sets = all_assortments(n, k)
        m = incidence(sets, n)
        obj = m @ (inst.revenues * v) / (1.0 + m @ v)
        cons = m * v / (1.0 + m @ v)[:, None]
        sol = _enumeration_lp(sets, obj, cons, caps)
        return float(sol.objective), SparseDistribution.from_weights(sets, sol.x, objective=float(sol.objective))

    # column generation; the pricing problem is a single MNL in r - theta
    cfg = config or PlannerConfig()
    bounds = OptimisticBounds.exact(v)
    reduced = ReducedProgram(
        weights=inst.revenues * v,
        reduced_caps=np.where(v > 0, caps, np.inf),
        zero_lcb_set=tuple(int(i) + 1 for i in np.flatnonzero(v <= 0)),
        omega=0.0, bounds=bounds, cap=k,
    )
    first, _ = da.mnl_ratio_max(reduced.weights, v, k)
    columns: list[Assortment] = [()] if not first else [(), first]
    max_cuts = cfg.max_cuts if cfg.max_cuts is not None else 50 * n
    for _ in range(max_cuts):
        sol, dual = _restricted_primal(reduced, columns)
        s, val = da.mnl_ratio_max((inst.revenues - dual.thetas) * v, v, k)
        if val - dual.lam <= cfg.tol_cut or s in columns:
            return float(sol.objective), SparseDistribution.from_weights(
                columns, sol.x, objective=float(sol.objective), columns=columns)
        columns.append(s)
    raise SolverStall(f"OPT-LP column generation did not converge in {max_cuts} rounds")
