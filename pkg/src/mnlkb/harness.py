"""Replicated experiments, regret scaling and estimator diagnostics."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigurationError
from .mnl import Instance, make_assortment
from .planner import solve_opt_lp
from .policy import PolicyConfig, Trace, run_oracle_static, run_ucb_knapsack, run_unconstrained_ucb

RUN_COLUMNS = ["replication", "policy", "revenue", "stop_time", "regret"]
EPOCH_COLUMNS = ["replication", "policy", "epoch", "start", "assortment", "length", "purchases", "complete"]
POLICY_NAMES = ("ucb_knapsack", "unconstrained_ucb", "oracle_static")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed))


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    instance: dict
    replications: int = 1
    seed: int = 0
    policies: list[tuple[str, PolicyConfig]] = field(default_factory=lambda: [("ucb_knapsack", PolicyConfig())])
    regret_scaling: dict | None = None
    diagnostics: dict | None = None
    verbose: bool = False

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigurationError("replications must be at least 1")
        for name, _ in self.policies:
            if name not in POLICY_NAMES:
                raise ConfigurationError(f"unknown policy {name!r}; choose from {', '.join(POLICY_NAMES)}")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(PolicyConfig)}
        policies = []
        for entry in doc.get("policies", [{"name": "ucb_knapsack"}]):
            entry = dict(entry)
            name = entry.pop("name")
            bad = set(entry) - known
            if bad:
                raise ConfigurationError(f"unknown policy settings {sorted(bad)}")
            policies.append((name, PolicyConfig(**entry)))
        return cls(
            instance=doc["instance"],
            replications=doc.get("replications", 1),
            seed=doc.get("seed", 0),
            policies=policies,
            regret_scaling=doc.get("regret_scaling"),
            diagnostics=doc.get("diagnostics"),
            verbose=doc.get("verbose", False),
        )

    def policy_config(self, name: str = "ucb_knapsack") -> PolicyConfig:
        for n, pc in self.policies:
            if n == name:
                return pc
        return PolicyConfig()


def _uniform(rng, spec, n):
    return rng.uniform(spec["low"], spec["high"], size=n)


def build_instance(spec: dict, seed: int = 0, horizon: int | None = None) -> Instance:
    """Instance from an explicit or generator description.

    Sampled revenues and utilities depend only on ``seed``, so the same
    market is reused across horizons.
    """
    n = int(spec["n_products"])
    t = int(horizon if horizon is not None else spec["horizon"])
    rng = make_rng(seed)
    if "revenues" in spec:
        r = np.asarray(spec["revenues"], dtype=float)
    elif "revenue_sampler" in spec:
        r = _uniform(rng, spec["revenue_sampler"], n)
    else:
        raise ConfigurationError("instance needs revenues or revenue_sampler")
    if "utilities" in spec:
        v = np.asarray(spec["utilities"], dtype=float)
    elif "utility_sampler" in spec:
        v = _uniform(rng, spec["utility_sampler"], n)
    else:
        raise ConfigurationError("instance needs utilities or utility_sampler")
    if "inventories" in spec:
        q = np.asarray(spec["inventories"], dtype=np.int64)
    elif "inventory_fraction" in spec:
        q = np.full(n, max(1, round(spec["inventory_fraction"] * t / n)), dtype=np.int64)
    else:
        raise ConfigurationError("instance needs inventories or inventory_fraction")
    try:
        return Instance(revenues=r, inventories=q, true_utilities=v, cardinality_cap=int(spec["cardinality_cap"]),
                        horizon=t, v_max=float(spec.get("v_max", 1.0)))
    except ValueError as exc:
        raise ConfigurationError(f"invalid instance: {exc}") from exc


def is_explicit(spec: dict) -> bool:
    return all(k in spec for k in ("revenues", "utilities", "inventories"))


# ---------------------------------------------------------------------------
# replications


@dataclass
class AggregateStats:
    policy: str
    replications: int
    mean_revenue: float
    se_revenue: float
    mean_expected_revenue: float
    se_expected_revenue: float
    mean_regret: float
    se_regret: float
    mean_stop_time: float
    feasibility_violations: int
    mean_consumption: list[float]
    coverage: float


@dataclass
class RunRecord:
    replication: int
    policy: str
    revenue: float
    expected_revenue: float
    stop_time: int
    regret: float
    trace: Trace


@dataclass
class ExperimentResult:
    opt_lp_value: float
    opt: float
    stats: dict[str, AggregateStats]
    runs: list[RunRecord]


def worker_count(jobs: int) -> int:
    env = os.environ.get("MNLKB_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, jobs))


def _replicate(args) -> Trace:
    inst, name, pcfg, key, opt_dist, verbose = args
    rng = make_rng(key)
    if name == "oracle_static":
        return run_oracle_static(inst, rng, opt_dist)
    if name == "unconstrained_ucb":
        return run_unconstrained_ucb(inst, pcfg, rng, verbose)
    return run_ucb_knapsack(inst, pcfg, rng, verbose)


def _map(fn, jobs: list) -> list:
    workers = worker_count(len(jobs))
    if workers == 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def _mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        return float(x.mean()), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


def aggregate(name: str, inst: Instance, opt: float, traces: list[Trace]) -> AggregateStats:
    rev, rev_se = _mean_se([t.revenue for t in traces])
    exp, exp_se = _mean_se([t.expected_revenue for t in traces])
    reg, reg_se = _mean_se([opt - t.expected_revenue for t in traces])
    hits = sum(t.coverage_hits for t in traces)
    checks = sum(t.coverage_checks for t in traces)
    return AggregateStats(
        policy=name,
        replications=len(traces),
        mean_revenue=rev,
        se_revenue=rev_se,
        mean_expected_revenue=exp,
        se_expected_revenue=exp_se,
        mean_regret=reg,
        se_regret=reg_se,
        mean_stop_time=float(np.mean([t.stop_time for t in traces])),
        feasibility_violations=int(sum(np.any(t.consumption > inst.inventories) for t in traces)),
        mean_consumption=np.mean([t.consumption for t in traces], axis=0).tolist(),
        coverage=hits / checks if checks else 1.0,
    )


def run_policies(inst: Instance, policies, replications: int, seed: int, verbose: bool = False):
    opt_lp, opt_dist = solve_opt_lp(inst)
    opt = inst.horizon * opt_lp
    jobs, labels = [], []
    for name, pcfg in policies:
        for rep in range(replications):
            jobs.append((inst, name, pcfg, seed + pcfg.seed + rep, opt_dist, verbose))
            labels.append((rep, name))
    traces = _map(_replicate, jobs)
    runs = [RunRecord(rep, name, t.revenue, t.expected_revenue, t.stop_time, opt - t.expected_revenue, t)
            for (rep, name), t in zip(labels, traces)]
    stats = {name: aggregate(name, inst, opt, [r.trace for r in runs if r.policy == name]) for name, _ in policies}
    return ExperimentResult(opt_lp_value=opt_lp, opt=opt, stats=stats, runs=runs)


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    inst = build_instance(cfg.instance, cfg.seed)
    return run_policies(inst, cfg.policies, cfg.replications, cfg.seed, cfg.verbose)


@dataclass
class ScalingResult:
    rows: list[dict]
    slope: float


def fit_slope(horizons, regrets) -> float:
    h = np.asarray(horizons, dtype=float)
    g = np.asarray(regrets, dtype=float)
    if len(h) < 2 or np.any(g <= 0):
        return float("nan")
    return float(np.polyfit(np.log(h), np.log(g), 1)[0])


def regret_scaling(cfg: ExperimentConfig, horizons=None, replications: int | None = None,
                   policy: str = "ucb_knapsack") -> ScalingResult:
    """Mean regret of one policy at several horizons, plus the log-log slope."""
    sc = cfg.regret_scaling or {}
    horizons = list(horizons if horizons is not None else sc.get("horizons", [cfg.instance["horizon"]]))
    reps = int(replications if replications is not None else sc.get("replications", cfg.replications))
    pcfg = cfg.policy_config(policy)
    rows = []
    for t in horizons:
        spec = dict(cfg.instance)
        if "inventories" in spec and "inventory_fraction" not in spec:
            base = build_instance(spec, cfg.seed)
            inst = base.with_horizon(t)
        else:
            inst = build_instance(spec, cfg.seed, horizon=t)
        res = run_policies(inst, [(policy, pcfg)], reps, cfg.seed)
        st = res.stats[policy]
        rows.append({"horizon": int(t), "mean_regret": st.mean_regret, "se_regret": st.se_regret,
                     "opt": res.opt, "mean_stop_time": st.mean_stop_time,
                     "feasibility_violations": st.feasibility_violations})
    return ScalingResult(rows=rows, slope=fit_slope([r["horizon"] for r in rows], [r["mean_regret"] for r in rows]))


# ---------------------------------------------------------------------------
# diagnostics


def simulate_fixed_epochs(utilities, assortment, epochs: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Epoch lengths and per-product purchase counts for a fixed offered set."""
    idx = np.asarray(assortment, dtype=np.int64) - 1
    v = np.asarray(utilities, dtype=float)[idx]
    big_v = float(v.sum())
    lengths = rng.geometric(1.0 / (1.0 + big_v), size=epochs)
    if big_v == 0:
        return lengths, np.zeros((epochs, len(idx)), dtype=np.int64)
    counts = rng.multinomial(lengths - 1, v / big_v)
    return lengths, counts


def _band_check(name, observed, center, var, n, width=4.0) -> dict:
    half = width * math.sqrt(var / n)
    return {"name": name, "observed": float(observed), "expected": float(center), "half_width": float(half),
            "passed": bool(abs(observed - center) <= half + 1e-12)}


def diagnostics(cfg: ExperimentConfig) -> dict:
    """Statistical checks of the epoch estimator; each entry reports pass/fail."""
    d = cfg.diagnostics or {}
    checks: list[dict] = []
    if not any(d.get(k) for k in ("unbiasedness", "epoch_length", "coverage")):
        return {"passed": True, "checks": checks}
    inst = build_instance(cfg.instance, cfg.seed)
    rng = make_rng(cfg.seed)
    k = inst.cardinality_cap
    s = make_assortment(d.get("assortment", range(1, k + 1)), inst.n_products)
    n_epochs = int(d.get("epochs", 10_000))

    if d.get("unbiasedness") or d.get("epoch_length"):
        lengths, counts = simulate_fixed_epochs(inst.true_utilities, s, n_epochs, rng)
        big_v = float(inst.true_utilities[np.asarray(s) - 1].sum())
        if d.get("epoch_length"):
            checks.append(_band_check("epoch_length", lengths.mean(), 1 + big_v, big_v * (1 + big_v), n_epochs))
        if d.get("unbiasedness"):
            for j, i in enumerate(s):
                vi = float(inst.true_utilities[i - 1])
                checks.append(_band_check(f"unbiasedness[{i}]", counts[:, j].mean(), vi, vi * (1 + vi), n_epochs))

    if d.get("coverage"):
        pcfg = cfg.policy_config("ucb_knapsack")
        mult = float(d.get("fault_vhat_multiplier", pcfg.vhat_multiplier))
        pcfg = PolicyConfig(**{**asdict(pcfg), "vhat_multiplier": mult})
        reps = int(d.get("coverage_replications", cfg.replications))
        traces = _map(_replicate, [(inst, "ucb_knapsack", pcfg, cfg.seed + rep, None, False) for rep in range(reps)])
        hits = sum(t.coverage_hits for t in traces)
        total = sum(t.coverage_checks for t in traces)
        freq = hits / total if total else 1.0
        checks.append({"name": "coverage", "observed": freq, "threshold": 0.99, "pairs": total,
                       "passed": bool(freq >= 0.99)})
    return {"passed": all(c["passed"] for c in checks), "checks": checks}


# ---------------------------------------------------------------------------
# output


def atomic_write(path: Path, data: str | bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": "", "encoding": "utf-8"})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def runs_csv(result: ExperimentResult) -> str:
    return _csv(RUN_COLUMNS, [[r.replication, r.policy, repr(float(r.revenue)), r.stop_time, repr(float(r.regret))]
                              for r in result.runs])


def epochs_csv(result: ExperimentResult) -> str:
    rows = []
    for r in result.runs:
        for e in r.trace.epochs:
            rows.append([r.replication, r.policy, e.index, e.start, format_assortment(e.assortment), e.length,
                         json.dumps({str(k): v for k, v in sorted(e.purchases.items())}), int(e.complete)])
    return _csv(EPOCH_COLUMNS, rows)


def format_assortment(s) -> str:
    return "{" + ",".join(str(i) for i in s) + "}"


def trace_to_dict(trace: Trace) -> dict[str, Any]:
    return {
        "policy": trace.policy,
        "revenue": trace.revenue,
        "expected_revenue": trace.expected_revenue,
        "stop_time": trace.stop_time,
        "stop_cause": trace.stop_cause,
        "consumption": None if trace.consumption is None else np.asarray(trace.consumption).tolist(),
        "epochs": [{**asdict(e), "assortment": list(e.assortment),
                    "purchases": {str(k): v for k, v in e.purchases.items()}} for e in trace.epochs],
    }
