import math

import numpy as np
import pytest

from mnlkb.errors import ConfigurationError
from mnlkb.harness import (ExperimentConfig, aggregate, atomic_write, build_instance, diagnostics, fit_slope,
                           regret_scaling, run_experiment, runs_csv)


def doc(**kw):
    base = {
        "instance": {"n_products": 3, "cardinality_cap": 2, "horizon": 300, "revenues": [1.0, 0.8, 0.5],
                     "utilities": [0.5, 0.6, 0.9], "inventories": [60, 60, 60]},
        "replications": 4,
        "seed": 7,
        "policies": [{"name": "ucb_knapsack"}, {"name": "unconstrained_ucb"}, {"name": "oracle_static"}],
    }
    base.update(kw)
    return base


def test_build_instance_variants():
    inst = build_instance(doc()["instance"])
    assert inst.inventories.tolist() == [60, 60, 60]
    gen = {"n_products": 5, "cardinality_cap": 2, "horizon": 1000, "revenue_sampler": {"low": 0.2, "high": 1.0},
           "utility_sampler": {"low": 0.1, "high": 0.9}, "inventory_fraction": 1.0}
    a, b = build_instance(gen, seed=3), build_instance(gen, seed=3)
    assert np.array_equal(a.revenues, b.revenues) and a.inventories.tolist() == [200] * 5
    assert build_instance(gen, seed=3, horizon=2000).inventories.tolist() == [400] * 5
    assert np.array_equal(build_instance(gen, seed=3, horizon=2000).revenues, a.revenues)
    with pytest.raises(ConfigurationError):
        build_instance({**gen, "cardinality_cap": 9})
    with pytest.raises(ConfigurationError):
        build_instance({k: v for k, v in gen.items() if k != "inventory_fraction"})


def test_unknown_policy_rejected():
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict(doc(policies=[{"name": "thompson"}]))
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict(doc(policies=[{"name": "ucb_knapsack", "bogus": 1}]))


def test_zero_utilities_zero_regret():
    d = doc()
    d["instance"]["utilities"] = [0.0, 0.0, 0.0]
    res = run_experiment(ExperimentConfig.from_dict(d))
    assert res.opt == 0.0
    for st in res.stats.values():
        assert st.mean_regret == 0.0 and st.mean_revenue == 0.0


def test_stats_and_feasibility():
    res = run_experiment(ExperimentConfig.from_dict(doc(replications=30)))
    assert res.opt == pytest.approx(300 * res.opt_lp_value)
    assert len(res.runs) == 90
    for st in res.stats.values():
        assert st.feasibility_violations == 0
        assert st.replications == 30
        assert np.all(np.array(st.mean_consumption) <= 60)
    static = res.stats["oracle_static"]
    assert static.mean_revenue <= res.opt + 3 * static.se_revenue
    assert static.mean_regret >= -3 * static.se_regret


def test_aggregate_permutation_invariant():
    res = run_experiment(ExperimentConfig.from_dict(doc(replications=6)))
    inst = build_instance(doc()["instance"])
    traces = [r.trace for r in res.runs if r.policy == "ucb_knapsack"]
    a = aggregate("x", inst, res.opt, traces)
    b = aggregate("x", inst, res.opt, traces[::-1])
    assert a.mean_revenue == pytest.approx(b.mean_revenue, abs=1e-12)
    assert a.se_regret == pytest.approx(b.se_regret, abs=1e-12)


def test_csv_determinism_across_worker_counts(monkeypatch):
    cfg = ExperimentConfig.from_dict(doc())
    monkeypatch.setenv("MNLKB_THREADS", "1")
    serial = runs_csv(run_experiment(cfg))
    monkeypatch.setenv("MNLKB_THREADS", "2")
    parallel = runs_csv(run_experiment(cfg))
    assert serial == parallel
    assert serial.splitlines()[0] == "replication,policy,revenue,stop_time,regret"


def test_regret_scaling_single_horizon():
    d = doc(policies=[{"name": "ucb_knapsack"}])
    sc = regret_scaling(ExperimentConfig.from_dict(d), horizons=[200], replications=3)
    assert len(sc.rows) == 1 and sc.rows[0]["horizon"] == 200
    assert math.isnan(sc.slope)


def test_fit_slope():
    assert fit_slope([100, 400, 1600], [10, 20, 40]) == pytest.approx(0.5)
    assert math.isnan(fit_slope([100, 200], [1.0, -1.0]))


def test_diagnostics_empty_and_bands():
    assert diagnostics(ExperimentConfig.from_dict(doc())) == {"passed": True, "checks": []}
    d = doc(diagnostics={"unbiasedness": True, "epoch_length": True, "assortment": [1, 2, 3], "epochs": 10000})
    d["instance"]["utilities"] = [0.0, 0.6, 0.9]
    rep = diagnostics(ExperimentConfig.from_dict(d))
    assert rep["passed"]
    names = {c["name"]: c for c in rep["checks"]}
    assert names["unbiasedness[1]"]["observed"] == 0.0
    assert names["epoch_length"]["expected"] == pytest.approx(2.5)


def test_atomic_write(tmp_path):
    target = tmp_path / "sub" / "a.csv"
    atomic_write(target, "x\n")
    atomic_write(target, "y\n")
    assert target.read_text() == "y\n"
    assert [p.name for p in target.parent.iterdir()] == ["a.csv"]
