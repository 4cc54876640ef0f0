"""Experiment orchestration and file output.

Outputs are UTF-8 with LF line endings; doubles print with 17 significant
digits so that written values round-trip exactly and replayed runs compare
byte-for-byte.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from ..errors import ContractViolationError
from ..optimizer import CSV_COLUMNS, RunResult, TrajectoryRecord, run, run_baseline
from ..problems import CompositeProblem
from .config import ExperimentMatrix, RunConfig, build_problem, schedule_from_doc
from .figures import render_figures
from .plotdata import emit_plotdata

_INT_COLUMNS = {"k", "m", "n", "r", "calls_total"}


def _fmt(name: str, value) -> str:
    if name in _INT_COLUMNS:
        return str(int(value))
    return format(float(value), ".17g")


def records_to_csv(records: list[TrajectoryRecord], path: str | Path) -> None:
    lines = [",".join(CSV_COLUMNS)]
    for rec in records:
        lines.append(",".join(_fmt(c, getattr(rec, c)) for c in CSV_COLUMNS))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def records_from_csv(path: str | Path) -> list[TrajectoryRecord]:
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.split("\n") if ln]
    header = lines[0].split(",")
    if header != CSV_COLUMNS:
        raise ContractViolationError(f"unexpected CSV header in {path}")
    out = []
    for ln in lines[1:]:
        parts = ln.split(",")
        kwargs = {}
        for name, raw in zip(header, parts):
            kwargs[name] = int(raw) if name in _INT_COLUMNS else float(raw)
        out.append(TrajectoryRecord(**kwargs))
    return out


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


def write_summary_json(summary: dict, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(summary, indent=2, sort_keys=True, default=_json_default) + "\n",
        encoding="utf-8",
        newline="\n",
    )


def _execute_cell(problem: CompositeProblem, cfg: RunConfig, seed: int) -> RunResult:
    if cfg.baseline is not None:
        params = {k: v for k, v in cfg.baseline.items() if k != "kind"}
        return run_baseline(problem, cfg.baseline["kind"], params, cfg.stop, seed,
                            timing=cfg.timing)
    return run(
        problem,
        cfg.schedule,
        cfg.stop,
        seed,
        log_reduced_grad=cfg.log_reduced_grad,
        timing=cfg.timing,
    )


def execute_run(cfg: RunConfig) -> dict[int, RunResult]:
    """Run one config over its seed list; returns results keyed by seed."""
    problem = cfg.build_problem()
    return {seed: _execute_cell(problem, cfg, seed) for seed in cfg.seeds}


def write_run_outputs(cfg: RunConfig, results: dict[int, RunResult]) -> list[Path]:
    if cfg.outputs is None:
        return []
    out = Path(cfg.outputs)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for seed, res in results.items():
        if "csv" in cfg.emit:
            p = out / f"trajectory_{cfg.label}_seed{seed}.csv"
            records_to_csv(res.records, p)
            written.append(p)
        if "json" in cfg.emit:
            p = out / f"summary_{cfg.label}_seed{seed}.json"
            write_summary_json(res.summary, p)
            written.append(p)
    if "plotdata" in cfg.emit or "figures" in cfg.emit:
        by_label = {
            f"{cfg.label}:seed{seed}": res.records for seed, res in results.items()
        }
        if "plotdata" in cfg.emit:
            written += emit_plotdata(by_label, out / "plotdata")
        if "figures" in cfg.emit:
            written += render_figures(by_label, out / "figures")
    return written


def _max_threads() -> int:
    raw = os.environ.get("STOCH_ACFGM_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def execute_compare(matrix: ExperimentMatrix) -> dict:
    """Run every (label, seed) cell of the matrix on the shared problem.

    Cells may run in parallel (STOCH_ACFGM_THREADS); the merged result is
    sorted by (label, seed, k) so the output does not depend on scheduling.
    """
    problem = build_problem(matrix.problem)
    cells = []
    for run_doc in matrix.runs:
        for seed in matrix.seeds:
            cells.append((run_doc, seed))

    def one(cell):
        run_doc, seed = cell
        stop = dict(matrix.stop)
        if run_doc.get("stop"):
            stop.update(run_doc["stop"])
        if run_doc.get("baseline"):
            b = run_doc["baseline"]
            params = {k: v for k, v in b.items() if k != "kind"}
            res = run_baseline(problem, b["kind"], params, stop, seed,
                               timing=matrix.timing)
        else:
            sched = schedule_from_doc(run_doc["schedule"])
            res = run(problem, sched, stop, seed, timing=matrix.timing)
        return run_doc["label"], seed, res

    workers = _max_threads()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(one, cells))
    else:
        raw = [one(c) for c in cells]
    results = {(label, seed): res for label, seed, res in raw}
    return {"problem": problem, "results": results}


def merged_compare_rows(results: dict) -> list[list]:
    """Long-format rows keyed by (label, seed, k) in sorted order."""
    rows = []
    for (label, seed), res in sorted(results.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        for rec in res.records:
            rows.append([label, seed] + [getattr(rec, c) for c in CSV_COLUMNS])
    return rows


def write_compare_outputs(matrix: ExperimentMatrix, outcome: dict) -> list[Path]:
    if matrix.outputs is None:
        return []
    out = Path(matrix.outputs)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    results = outcome["results"]
    if "csv" in matrix.emit:
        p = out / "comparison.csv"
        lines = [",".join(["label", "seed"] + CSV_COLUMNS)]
        for row in merged_compare_rows(results):
            label, seed = row[0], row[1]
            rest = [_fmt(c, v) for c, v in zip(CSV_COLUMNS, row[2:])]
            lines.append(",".join([str(label), str(seed)] + rest))
        p.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
        written.append(p)
    if "json" in matrix.emit:
        p = out / "summaries.json"
        doc = {
            f"{label}:seed{seed}": res.summary for (label, seed), res in results.items()
        }
        write_summary_json(doc, p)
        written.append(p)
    by_label: dict[str, list] = {}
    for (label, seed), res in sorted(results.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        # one representative seed per label keeps the plot files readable
        by_label.setdefault(label, res.records)
    if "plotdata" in matrix.emit:
        written += emit_plotdata(by_label, out / "plotdata")
    if "figures" in matrix.emit:
        written += render_figures(by_label, out / "figures")
    return written
