"""Command-line interface: run, compare, verify, gen-problem."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from ..errors import BudgetExceededError, ContractViolationError
from ..problems import generate_problem, save_problem
from .config import (
    RunConfig,
    bundled_problem_doc,
    load_run_config,
    matrix_from_doc,
    run_config_from_doc,
)
from .runner import execute_compare, execute_run, write_compare_outputs, write_run_outputs

EXIT_OK = 0
EXIT_ACCEPTANCE = 1
EXIT_CONFIG = 2
EXIT_BUDGET = 3


def _add_schedule_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--variant", choices=["a", "b", "c", "hp"], help="schedule variant")
    p.add_argument("--beta", type=float, help="momentum weight in (0, 1/8]")
    p.add_argument("--eta1", type=float, help="initial stepsize")
    p.add_argument("--dtilde", type=float, help="batch-size scale D~")
    p.add_argument("--n", type=int, help="iteration horizon")
    p.add_argument("--lambda", dest="lam", type=float, help="confidence parameter (hp)")


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    sched = cfg.schedule
    updates = {}
    if args.variant is not None:
        updates["variant"] = args.variant
    if args.beta is not None:
        updates["beta"] = args.beta
    if args.eta1 is not None:
        updates["eta1"] = args.eta1
    if args.dtilde is not None:
        updates["d_tilde"] = args.dtilde
    if args.n is not None:
        updates["n"] = args.n
    if args.lam is not None:
        updates["lam"] = args.lam
    if updates:
        sched = replace(sched, **updates)
        sched.validate()
        cfg = replace(cfg, schedule=sched)
    if args.n is not None:
        stop = dict(cfg.stop)
        stop["iterations"] = args.n
        stop.pop("max_iterations", None)
        cfg = replace(cfg, stop=stop)
    if args.seed is not None:
        cfg = replace(cfg, seeds=[args.seed])
    if args.out is not None:
        cfg = replace(cfg, outputs=args.out)
    if args.format is not None:
        emit = [args.format]
        if args.format == "csv" and "plotdata" in cfg.emit:
            emit.append("plotdata")
        cfg = replace(cfg, emit=emit)
    return cfg


def _cmd_run(args) -> int:
    if args.config:
        cfg = load_run_config(args.config)
    else:
        doc = {
            "problem": bundled_problem_doc(),
            "schedule": {"variant": args.variant or "a", "n": args.n}
            if (args.variant or "a") == "a"
            else {"variant": args.variant},
            "stop": {"iterations": args.n or 50},
            "seeds": [args.seed if args.seed is not None else 0],
            "outputs": args.out or "acfgm-out",
            "emit": ["csv", "json", "plotdata", "figures"],
        }
        if doc["schedule"].get("n") is None and (args.variant or "a") == "a":
            doc["schedule"]["n"] = doc["stop"]["iterations"]
        cfg = run_config_from_doc(doc)
    cfg = _apply_overrides(cfg, args)
    results = execute_run(cfg)
    written = write_run_outputs(cfg, results)
    for seed, res in results.items():
        gap = res.summary.get("final_gap")
        calls = res.summary.get("total_oracle_calls")
        print(f"seed {seed}: {res.summary['iterations']} iterations, "
              f"final gap {gap}, oracle calls {calls}")
        if res.summary.get("aborted"):
            print(f"  aborted: {res.summary['aborted']}", file=sys.stderr)
    for p in written:
        print(f"wrote {p}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
    matrix = matrix_from_doc(doc)
    if args.out is not None:
        matrix.outputs = args.out
    outcome = execute_compare(matrix)
    written = write_compare_outputs(matrix, outcome)
    for (label, seed), res in sorted(outcome["results"].items()):
        print(f"{label} seed {seed}: final gap {res.summary.get('final_gap')}, "
              f"calls {res.summary.get('total_oracle_calls')}")
    for p in written:
        print(f"wrote {p}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    from .verify import run_acceptance

    results = run_acceptance(fast=args.fast, out_dir=args.out)
    unexpected = 0
    for r in results:
        print(r.render())
        if not r.passed and not r.known_fail:
            unexpected += 1
    print()
    n_pass = sum(r.passed for r in results)
    n_known = sum((not r.passed) and r.known_fail for r in results)
    print(f"{n_pass} passed, {len(results) - n_pass - n_known} failed, "
          f"{n_known} known-fail (documented)")
    return EXIT_OK if unexpected == 0 else EXIT_ACCEPTANCE


def _cmd_gen_problem(args) -> int:
    if args.config:
        spec = json.loads(Path(args.config).read_text(encoding="utf-8"))
    else:
        if not args.generator:
            raise ContractViolationError("gen-problem: needs --config or --generator")
        spec = {"generator": args.generator}
        if args.dim is not None:
            spec["dim"] = args.dim
        if args.m is not None:
            spec["n_components"] = args.m
        if args.seed is not None:
            spec["seed"] = args.seed
    problem = generate_problem(spec)
    out = args.out or "problem.json"
    save_problem(problem, out)
    print(f"wrote {out} (dim {problem.dim}, {problem.f.n_components} components)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="acfgm",
        description="Auto-conditioned fast gradient method: runs, comparisons, "
                    "and the acceptance verification suite.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one configuration")
    p_run.add_argument("--config", help="run config JSON (defaults to a bundled quadratic)")
    p_run.add_argument("--seed", type=int, help="master seed (overrides config)")
    p_run.add_argument("--out", help="output directory")
    p_run.add_argument("--format", choices=["csv", "json"], help="restrict emitted outputs")
    _add_schedule_flags(p_run)
    p_run.set_defaults(fn=_cmd_run)

    p_cmp = sub.add_parser("compare", help="execute an experiment matrix")
    p_cmp.add_argument("--config", required=True, help="matrix config JSON")
    p_cmp.add_argument("--out", help="output directory")
    p_cmp.set_defaults(fn=_cmd_compare)

    p_ver = sub.add_parser("verify", help="run the acceptance criteria")
    p_ver.add_argument("--fast", action="store_true",
                       help="reduced sweep sizes (smoke check, not the full gate)")
    p_ver.add_argument("--out", help="directory for verification artifacts")
    p_ver.set_defaults(fn=_cmd_verify)

    p_gen = sub.add_parser("gen-problem", help="write a problem JSON from a generator spec")
    p_gen.add_argument("--config", help="generator spec JSON")
    p_gen.add_argument("--generator", help="generator name")
    p_gen.add_argument("--dim", type=int)
    p_gen.add_argument("--m", type=int, help="number of components")
    p_gen.add_argument("--seed", type=int)
    p_gen.add_argument("--out", help="output path (default problem.json)")
    p_gen.set_defaults(fn=_cmd_gen_problem)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ContractViolationError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceededError as e:
        print(f"budget exceeded: {e}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
