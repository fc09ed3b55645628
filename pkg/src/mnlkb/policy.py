"""Epoch-based run loops: the knapsack UCB policy and two baselines.

Every run stops at the horizon or right after the sale that empties any
product's inventory, whichever comes first.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from . import diffassort as da
from .errors import ConfigurationError, SolverStall
from .estimation import EpochOutcome, EstimatorState, init_state, record_epoch
from .mnl import Assortment, Instance, incidence, revenue
from .planner import (DEFAULT_C, OptimisticBounds, PlannerConfig, SparseDistribution, compute_omega, reduce,
                      solve_opt_lp, solve_optimistic)

log = logging.getLogger(__name__)


@dataclass
class PolicyConfig:
    epsilon_target: float | None = None  # None means 1/T
    oracle_mode: Literal["exact", "dp"] = "exact"
    eps_oracle: float | None = None  # None means min(0.05, epsilon_target / (16 T))
    omega_mode: Literal["paper", "clamped", "manual"] = "clamped"
    omega_value: float | None = None
    omega_cap: float = 0.5
    c_const: float = DEFAULT_C
    seed: int = 0
    max_cuts: int | None = None
    tol_cut: float = 1e-7
    # test hooks
    fixed_bounds: bool = False
    vhat_multiplier: float = 1.0

    def __post_init__(self):
        if self.epsilon_target is not None and self.epsilon_target <= 0:
            raise ConfigurationError("epsilon_target must be positive")
        if self.omega_mode not in ("paper", "clamped", "manual"):
            raise ConfigurationError(f"unknown omega_mode {self.omega_mode!r}")
        if self.omega_mode == "manual" and (self.omega_value is None or not 0 <= self.omega_value < 1):
            raise ConfigurationError("manual omega needs omega_value in [0, 1)")
        if not 0 <= self.omega_cap < 1:
            raise ConfigurationError("omega_cap must lie in [0, 1)")
        if self.oracle_mode not in ("exact", "dp"):
            raise ConfigurationError(f"unknown oracle_mode {self.oracle_mode!r}")

    def planner_config(self, inst: Instance) -> PlannerConfig:
        eps_t = self.epsilon_target if self.epsilon_target is not None else 1.0 / inst.horizon
        eps_o = self.eps_oracle if self.eps_oracle is not None else min(0.05, eps_t / (16 * inst.horizon))
        return PlannerConfig(oracle_mode=self.oracle_mode, eps_oracle=eps_o, tol_cut=self.tol_cut,
                             max_cuts=self.max_cuts)


def resolve_omega(inst: Instance, cfg: PolicyConfig) -> float:
    if cfg.omega_mode == "manual":
        return float(cfg.omega_value)
    raw = compute_omega(inst, cfg.c_const)
    if cfg.omega_mode == "paper":
        if raw >= 1:
            raise ConfigurationError(
                f"shrinkage factor is {raw:.4g} >= 1 for q_min={inst.q_min}; "
                "use omega_mode 'clamped' or 'manual' at this scale")
        return raw
    if raw > cfg.omega_cap:
        log.warning("omega %.4g clamped to %.4g; the regret guarantee does not apply", raw, cfg.omega_cap)
    return min(raw, cfg.omega_cap)


@dataclass
class EpochRecord:
    index: int
    start: int
    assortment: Assortment
    length: int
    purchases: dict[int, int]
    complete: bool


@dataclass
class Trace:
    policy: str
    revenue: float = 0.0
    expected_revenue: float = 0.0
    stop_time: int = 0
    stop_cause: str = "horizon"
    consumption: np.ndarray | None = None
    epochs: list[EpochRecord] = field(default_factory=list)
    periods: list[tuple[int, int, Assortment, int, float]] | None = None
    coverage_hits: int = 0
    coverage_checks: int = 0
    omega: float = float("nan")

    @property
    def coverage(self) -> float:
        return self.coverage_hits / self.coverage_checks if self.coverage_checks else 1.0


class PolicyAbort(RuntimeError):
    def __init__(self, message, trace: Trace):
        super().__init__(message)
        self.trace = trace


def sample_assortment(dist, rng: np.random.Generator) -> Assortment:
    support = dist.support if isinstance(dist, SparseDistribution) else list(dist)
    w = np.array([p for _, p in support], dtype=float)
    if len(w) == 0 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("distribution weights must be nonnegative and sum to 1")
    k = int(np.searchsorted(np.cumsum(w), rng.random() * w.sum(), side="right"))
    return tuple(support[min(k, len(w) - 1)][0])


def check_feasible(inst: Instance, trace: Trace) -> None:
    if np.any(trace.consumption > inst.inventories):
        raise PolicyAbort(f"inventory violated: consumption {trace.consumption.tolist()} "
                          f"exceeds {inst.inventories.tolist()}", trace)


Planner = Callable[[EstimatorState, np.ndarray], object]


def _run_epochs(inst: Instance, cfg: PolicyConfig, rng: np.random.Generator, name: str, plan: Planner,
                verbose: bool = False) -> Trace:
    n, horizon = inst.n_products, inst.horizon
    v, r = inst.true_utilities, inst.revenues
    state = init_state(inst)
    stock = inst.inventories.copy()
    trace = Trace(policy=name, consumption=np.zeros(n, dtype=np.int64), periods=[] if verbose else None)
    t = 0
    while t < horizon:
        try:
            dist = plan(state, stock)
        except SolverStall as exc:
            trace.stop_time = t
            trace.stop_cause = "planner_stall"
            raise PolicyAbort(f"planner stalled at epoch {state.epoch_index + 1}: {exc}", trace) from exc
        s = sample_assortment(dist, rng)
        idx = np.asarray(s, dtype=np.int64) - 1
        big_v = float(v[idx].sum())
        r_s = revenue(inst, s)
        n_buy = int(rng.geometric(1.0 / (1.0 + big_v))) - 1
        buys = idx[rng.choice(len(idx), size=n_buy, p=v[idx] / big_v)] if n_buy else np.zeros(0, dtype=np.int64)

        start, played, counts, complete = t + 1, 0, {}, False
        stop = None
        for i in buys:
            if t >= horizon:
                break
            t += 1
            played += 1
            trace.revenue += r[i]
            trace.consumption[i] += 1
            stock[i] -= 1
            counts[int(i) + 1] = counts.get(int(i) + 1, 0) + 1
            if trace.periods is not None:
                trace.periods.append((t, state.epoch_index + 1, s, int(i) + 1, float(r[i])))
            if stock[i] == 0:
                stop = f"stockout:{int(i) + 1}"
                break
        else:
            if t < horizon:
                t += 1
                played += 1
                complete = True
                if trace.periods is not None:
                    trace.periods.append((t, state.epoch_index + 1, s, 0, 0.0))
        trace.expected_revenue += played * r_s
        trace.epochs.append(EpochRecord(state.epoch_index + 1, start, s, played, counts, complete))
        if complete:
            record_epoch(state, EpochOutcome(s, counts, played), n, cfg.vhat_multiplier)
            inside = (state.lcb <= v) & (v <= state.ucb)
            trace.coverage_hits += int(inside.sum())
            trace.coverage_checks += n
        if stop is not None:
            trace.stop_cause = stop
            break
    trace.stop_time = t
    check_feasible(inst, trace)
    return trace


def _current_bounds(inst: Instance, cfg: PolicyConfig, state: EstimatorState, stock: np.ndarray) -> OptimisticBounds:
    if cfg.fixed_bounds:
        ucb, lcb = inst.true_utilities.copy(), inst.true_utilities.copy()
    else:
        ucb, lcb = state.ucb.copy(), state.lcb.copy()
    # stocked-out products are masked out of every later plan
    out = stock <= 0
    ucb[out] = 0.0
    lcb[out] = 0.0
    return OptimisticBounds(ucb=ucb, lcb=lcb)


def run_ucb_knapsack(inst: Instance, cfg: PolicyConfig, rng: np.random.Generator, verbose: bool = False) -> Trace:
    omega = resolve_omega(inst, cfg)
    pcfg = cfg.planner_config(inst)
    cache: dict = {"key": None, "dist": None, "columns": ()}

    def plan(state, stock):
        bounds = _current_bounds(inst, cfg, state, stock)
        key = (bounds.ucb.tobytes(), bounds.lcb.tobytes())
        if key != cache["key"]:
            dist = solve_optimistic(reduce(inst, bounds, omega), pcfg, warm_start=cache["columns"])
            cache.update(key=key, dist=dist, columns=tuple(dist.columns))
        return cache["dist"]

    trace = _run_epochs(inst, cfg, rng, "ucb_knapsack", plan, verbose)
    trace.omega = omega
    return trace


def run_unconstrained_ucb(inst: Instance, cfg: PolicyConfig, rng: np.random.Generator, verbose: bool = False) -> Trace:
    """Plays argmax of the optimistic revenue each epoch, ignoring inventory in planning."""
    cache: dict = {"key": None, "set": ()}

    def plan(state, stock):
        bounds = _current_bounds(inst, cfg, state, stock)
        key = (bounds.ucb.tobytes(), bounds.lcb.tobytes())
        if key != cache["key"]:
            s, _ = da.mnl_ratio_max(inst.revenues * bounds.ucb, bounds.lcb, inst.cardinality_cap)
            cache.update(key=key, set=s)
        return [(cache["set"], 1.0)]

    return _run_epochs(inst, cfg, rng, "unconstrained_ucb", plan, verbose)


def run_oracle_static(inst: Instance, rng: np.random.Generator, opt: SparseDistribution | None = None) -> Trace:
    """Every period draws a fresh set from the OPT-LP distribution."""
    if opt is None:
        _, opt = solve_opt_lp(inst)
    sets = [s for s, _ in opt.support]
    w = np.array([p for _, p in opt.support])
    n, horizon = inst.n_products, inst.horizon
    v = inst.true_utilities
    m = incidence(sets, n)
    k = int(m.sum(axis=1).max()) if len(sets) else 0
    # per-set choice table: column 0 is no purchase, then the set's items
    probs = np.zeros((len(sets), k + 1))
    labels = np.zeros((len(sets), k + 1), dtype=np.int64)
    for row, s in enumerate(sets):
        p = np.concatenate([[1.0], v[np.asarray(s, dtype=np.int64) - 1]]) if s else np.ones(1)
        probs[row, : len(p)] = p / p.sum()
        labels[row, 1 : len(s) + 1] = s
    cdf = np.cumsum(probs, axis=1)
    exp_rev = np.array([revenue(inst, s) for s in sets])

    which = np.minimum(np.searchsorted(np.cumsum(w), rng.random(horizon) * w.sum(), side="right"), len(sets) - 1)
    u = rng.random(horizon)
    pick = np.minimum((cdf[which] <= u[:, None]).sum(axis=1), k)
    choice = labels[which, pick]

    bought = np.zeros((horizon, n + 1), dtype=np.int64)
    bought[np.arange(horizon), choice] = 1
    sold = np.cumsum(bought[:, 1:], axis=0)
    out = np.flatnonzero((sold >= inst.inventories).any(axis=1))
    stop = int(out[0]) + 1 if len(out) else horizon
    trace = Trace(policy="oracle_static", stop_time=stop,
                  stop_cause="horizon" if not len(out) else f"stockout:{int(choice[stop - 1])}")
    trace.consumption = sold[stop - 1].copy()
    trace.revenue = float(inst.prices[choice[:stop]].sum())
    trace.expected_revenue = float(exp_rev[which[:stop]].sum())
    check_feasible(inst, trace)
    return trace


POLICIES = {
    "ucb_knapsack": run_ucb_knapsack,
    "unconstrained_ucb": run_unconstrained_ucb,
    "oracle_static": None,  # needs the OPT distribution; dispatched by the harness
}
