"""Acceptance gate: eight criteria at their stated tolerances."""
import json
import math
import time

import numpy as np
import pytest

from mnlkb import diffassort as da
from mnlkb.cli import main
from mnlkb.harness import ExperimentConfig, make_rng, regret_scaling, simulate_fixed_epochs
from mnlkb.mnl import Instance
from mnlkb.planner import (OptimisticBounds, PlannerConfig, exact_solve_optimistic, reduce, solve_opt_lp,
                           solve_optimistic)
from mnlkb.policy import PolicyConfig, run_oracle_static, run_ucb_knapsack, run_unconstrained_ucb


def random_optimistic_case(rng):
    n = int(rng.integers(1, 7))
    k = int(rng.integers(1, min(n, 3) + 1))
    t = int(rng.integers(10, 101))
    inst = Instance(rng.uniform(0.1, 1, n), rng.integers(1, t + 1, n), rng.uniform(0, 1, n), k, t)
    ucb = rng.uniform(0, 1, n)
    lcb = ucb * rng.uniform(0, 1, n) * (rng.random(n) > 0.25)
    return inst, OptimisticBounds(ucb=ucb, lcb=lcb), float(rng.uniform(0, 0.5))


def test_1_lp_oracle_equivalence(report):
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst_exact, worst_ratio = 0.0, math.inf
    ok = True
    for _ in range(50):
        inst, bounds, omega = random_optimistic_case(rng)
        red = reduce(inst, bounds, omega)
        val, _ = exact_solve_optimistic(inst, bounds, omega)
        got = solve_optimistic(red).objective
        worst_exact = max(worst_exact, abs(got - val))
        dp = solve_optimistic(red, PlannerConfig(oracle_mode="dp", eps_oracle=0.05)).objective
        factor = 1 / (1 + 16 * 0.05 * inst.horizon) - 1e-6
        if val > 0:
            worst_ratio = min(worst_ratio, dp / val)
        ok &= abs(got - val) <= 1e-6 and dp >= factor * val
    elapsed = time.perf_counter() - start
    ok &= elapsed < 60
    report(1, ok, f"max |cut-plane - enumeration| = {worst_exact:.2e}, "
                  f"worst dp/exact ratio = {worst_ratio:.6f}, {elapsed:.1f}s")
    assert ok


def test_2_weak_guarantee(report):
    rng = np.random.default_rng(202)
    eps = 0.05
    start = time.perf_counter()
    failures, min_margin = 0, math.inf
    for _ in range(100):
        n = int(rng.integers(1, 9))
        k = int(rng.integers(1, min(n, 4) + 1))
        d = rng.uniform(0, 1, n)
        b = d * rng.uniform(0, 1, n) * (rng.random(n) > 0.2)
        a = rng.uniform(0, 1, n) * d
        theta = rng.uniform(0, 2, n) * (rng.random(n) > 0.3)
        inst = da.DiffAssortInstance(a, b, theta, d, k)
        _, val = da.approx_solve(inst, eps)
        star, opt = da.exact_solve(inst)
        rhs = (1 - 4 * eps) * opt - 16 * eps * da.penalty_term(inst, star)
        min_margin = min(min_margin, val - rhs)
        if val < rhs - 1e-9 or val > opt + 1e-9:
            failures += 1
    elapsed = time.perf_counter() - start
    ok = failures == 0 and elapsed < 300
    report(2, ok, f"{failures}/100 violations, min slack {min_margin:.3e}, {elapsed:.1f}s")
    assert ok


def test_3_epoch_statistics(report):
    v = np.array([0.5, 1.0])  # V(S) = 1.5
    n = 10_000
    lengths, counts = simulate_fixed_epochs(v, (1, 2), n, make_rng(303))
    big_v = 1.5
    band = 4 * math.sqrt(big_v * (1 + big_v) / n)
    ok = abs(lengths.mean() - (1 + big_v)) <= band
    parts = [f"mean length {lengths.mean():.4f} vs {1 + big_v} +- {band:.4f}"]
    for j, vi in enumerate(v):
        b = 4 * math.sqrt(vi * (1 + vi) / n)
        ok &= abs(counts[:, j].mean() - vi) <= b
        parts.append(f"vhat_{j + 1} {counts[:, j].mean():.4f} vs {vi} +- {b:.4f}")
    report(3, ok, "; ".join(parts))
    assert ok


def test_4_coverage(report):
    t = 5000
    inst = Instance([1.0, 0.9, 0.5, 0.4, 0.3], [t // 5] * 5, [1 / 3, 1 / 3, 0.6, 0.8, 0.9], 2, t)
    start = time.perf_counter()
    hits = checks = 0
    for rep in range(20):
        tr = run_ucb_knapsack(inst, PolicyConfig(), make_rng(404 + rep))
        hits += tr.coverage_hits
        checks += tr.coverage_checks
    freq = hits / checks
    elapsed = time.perf_counter() - start
    ok = freq >= 0.99 and elapsed < 120
    report(4, ok, f"coverage {freq:.5f} over {checks} (i, epoch) pairs, {elapsed:.1f}s")
    assert ok


def test_5_static_policy_below_opt(report):
    inst = Instance([1.0], [25], [1.0], 1, 100)
    start = time.perf_counter()
    opt_lp, dist = solve_opt_lp(inst)
    opt = inst.horizon * opt_lp
    revs = np.array([run_oracle_static(inst, make_rng(505 + s), dist).revenue for s in range(500)])
    se = revs.std(ddof=1) / math.sqrt(len(revs))
    elapsed = time.perf_counter() - start
    ok = abs(opt_lp - 0.25) <= 1e-9 and revs.mean() <= opt + 3 * se and elapsed < 60
    report(5, ok, f"OPT_LP {opt_lp:.6f}, mean revenue {revs.mean():.3f} <= OPT {opt:.1f} + 3*{se:.3f}")
    assert ok


def test_6_hard_feasibility(report):
    rng = np.random.default_rng(606)
    violations = runs = 0
    cases = [Instance([1.0, 1.0], [1, 1], [0.95, 0.95], 2, 200),
             Instance([1.0], [25], [1.0], 1, 100),
             Instance([1.0, 0.2, 0.2], [5, 50, 50], [0.9, 0.5, 0.5], 2, 400)]
    for _ in range(3):
        n = int(rng.integers(2, 6))
        t = int(rng.integers(50, 400))
        cases.append(Instance(rng.uniform(0.1, 1, n), rng.integers(1, 20, n), rng.uniform(0, 1, n),
                              int(rng.integers(1, n + 1)), t))
    for inst in cases:
        _, dist = solve_opt_lp(inst)
        for s in range(30):
            for tr in (run_ucb_knapsack(inst, PolicyConfig(), make_rng(s)),
                       run_unconstrained_ucb(inst, PolicyConfig(), make_rng(s)),
                       run_oracle_static(inst, make_rng(s), dist)):
                runs += 1
                sold = np.zeros(inst.n_products, dtype=np.int64)
                for e in tr.epochs:
                    for i, c in e.purchases.items():
                        sold[i - 1] += c
                if tr.epochs and not np.array_equal(sold, tr.consumption):
                    violations += 1
                violations += int(np.any(tr.consumption > inst.inventories))
    ok = violations == 0
    report(6, ok, f"{violations} inventory violations in {runs} runs (plus the per-run assert in every policy)")
    assert ok


@pytest.mark.slow
def test_7_regret_trend(report):
    doc = {
        # p_i(S*) = 0.2 = q_i / T for the two items of the optimal pair
        "instance": {"n_products": 5, "cardinality_cap": 2, "horizon": 2000, "revenues": [1.0, 0.9, 0.5, 0.4, 0.3],
                     "utilities": [1 / 3, 1 / 3, 0.6, 0.8, 0.9], "inventory_fraction": 1.0},
        "replications": 100,
        "seed": 2024,
        "policies": [{"name": "ucb_knapsack", "omega_mode": "clamped"}],
    }
    start = time.perf_counter()
    sc = regret_scaling(ExperimentConfig.from_dict(doc), [2000, 4000, 8000], 100)
    elapsed = time.perf_counter() - start
    regrets = [r["mean_regret"] for r in sc.rows]
    ok = all(g > 0 for g in regrets) and sc.slope <= 0.85 and elapsed < 1800
    table = ", ".join(f"T={r['horizon']}: {r['mean_regret']:.2f}+-{r['se_regret']:.2f}" for r in sc.rows)
    report(7, ok, f"slope {sc.slope:.3f} (<= 0.85); {table}; {elapsed:.0f}s")
    assert ok


def test_8_determinism(report, tmp_path):
    doc = {
        "instance": {"n_products": 3, "cardinality_cap": 2, "horizon": 500, "revenues": [1.0, 0.8, 0.5],
                     "utilities": [0.5, 0.6, 0.9], "inventories": [80, 80, 80]},
        "replications": 5,
        "seed": 808,
        "policies": [{"name": "ucb_knapsack"}, {"name": "unconstrained_ucb"}, {"name": "oracle_static"}],
    }
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(doc))
    for out in ("a", "b"):
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / out)]) == 0
    a = (tmp_path / "a" / "runs.csv").read_bytes()
    b = (tmp_path / "b" / "runs.csv").read_bytes()
    ok = a == b
    report(8, ok, f"runs.csv identical across two runs ({len(a)} bytes)")
    assert ok
