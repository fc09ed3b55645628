"""mnlkb command line: run | opt | diagnose.

Exit codes: 0 ok, 1 configuration error, 2 runtime or feasibility abort,
3 diagnostic failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

import jsonschema

from .errors import ConfigurationError, SolverStall
from .harness import (ExperimentConfig, atomic_write, build_instance, diagnostics, epochs_csv, format_assortment,
                      is_explicit, regret_scaling, run_experiment, runs_csv, trace_to_dict)
from .planner import solve_opt_lp
from .policy import PolicyAbort

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_DIAGNOSTIC = 0, 1, 2, 3

log = logging.getLogger("mnlkb")


def load_schema() -> dict:
    return json.loads(resources.files("mnlkb").joinpath("config_schema.json").read_text())


def load_config(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{p}: invalid JSON: {exc}") from exc
    errors = sorted(jsonschema.Draft202012Validator(load_schema()).iter_errors(doc), key=lambda e: list(e.path))
    if errors:
        msgs = [f"  {'/'.join(str(x) for x in e.path) or '<root>'}: {e.message}" for e in errors]
        raise ConfigurationError(f"{p}: schema violations:\n" + "\n".join(msgs))
    return doc


def _stats_dict(result) -> dict:
    from dataclasses import asdict
    return {name: asdict(st) for name, st in result.stats.items()}


def cmd_run(args) -> int:
    doc = load_config(args.config)
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.replications is not None:
        doc["replications"] = args.replications
    cfg = ExperimentConfig.from_dict(doc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        result = run_experiment(cfg)
        report = {"opt_lp_value": result.opt_lp_value, "opt": result.opt, "stats": _stats_dict(result)}
        if cfg.diagnostics:
            report["diagnostics"] = diagnostics(cfg)
        scaling = None
        if cfg.regret_scaling:
            scaling = regret_scaling(cfg)
            report["regret_scaling"] = {"rows": scaling.rows, "slope": scaling.slope}
    except PolicyAbort as exc:
        dump = out / "abort_trace.json"
        atomic_write(dump, json.dumps(trace_to_dict(exc.trace), indent=2))
        print(f"error: {exc}; trace written to {dump}", file=sys.stderr)
        return EXIT_RUNTIME
    except SolverStall as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    atomic_write(out / "runs.csv", runs_csv(result))
    if cfg.verbose:
        atomic_write(out / "epochs.csv", epochs_csv(result))
    atomic_write(out / "diagnostics.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    if scaling is not None:
        from .plotting import write_regret_curve
        write_regret_curve(scaling.rows, out / "regret_curve.svg", scaling.slope)
    print(f"wrote {out / 'runs.csv'}")
    return EXIT_OK


def cmd_opt(args) -> int:
    doc = load_config(args.config)
    if not is_explicit(doc["instance"]):
        raise ConfigurationError("opt needs an explicit instance (revenues, utilities and inventories)")
    inst = build_instance(doc["instance"])
    value, dist = solve_opt_lp(inst)
    print(f"opt_lp_value,{value!r}")
    print(f"OPT,{inst.horizon * value!r}")
    print("assortment,weight")
    for s, w in dist.support:
        print(f"\"{format_assortment(s)}\",{w!r}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    doc = load_config(args.config)
    cfg = ExperimentConfig.from_dict(doc)
    report = diagnostics(cfg)
    if args.out:
        atomic_write(Path(args.out) / "diagnostics.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    for c in report["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']} observed={c['observed']:.6g}")
    if not report["passed"]:
        failed = [c["name"] for c in report["checks"] if not c["passed"]]
        print(f"failed checks: {', '.join(failed)}", file=sys.stderr)
        return EXIT_DIAGNOSTIC
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mnlkb", description="MNL bandit with knapsacks simulator")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run replications and write CSV/JSON/SVG outputs")
    run.add_argument("--config", required=True)
    run.add_argument("--out", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--replications", type=int)
    run.set_defaults(func=cmd_run)
    opt = sub.add_parser("opt", help="print the OPT-LP benchmark")
    opt.add_argument("--config", required=True)
    opt.set_defaults(func=cmd_opt)
    diag = sub.add_parser("diagnose", help="run estimator diagnostics")
    diag.add_argument("--config", required=True)
    diag.add_argument("--out")
    diag.set_defaults(func=cmd_diagnose)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeError, AssertionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
