"""Run configuration: one JSON schema for problems, schedules, and matrices.

Validation happens before any computation; every complaint names the
offending path (e.g. "schedule.beta: ...").
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ContractViolationError
from ..problems import CompositeProblem, generate_problem, load_problem, problem_from_json
from ..schedule import ScheduleConfig

EMIT_KINDS = ("csv", "json", "plotdata", "figures")

_SCHEDULE_KEYS = {
    "variant": "variant",
    "beta": "beta",
    "eta1": "eta1",
    "d_tilde": "d_tilde",
    "n": "n",
    "v0": "v0",
    "lambda": "lam",
    "inflation": "inflation",
    "p_n": "p_n",
    "subgauss_proxy": "subgauss_proxy",
    "batch_cap": "batch_cap",
}


@dataclass
class RunConfig:
    """Validated single-run description."""

    schedule: ScheduleConfig
    problem: dict
    stop: dict
    seeds: list[int] = field(default_factory=lambda: [0])
    outputs: str | None = None
    emit: list[str] = field(default_factory=lambda: ["csv", "json"])
    baseline: dict | None = None
    timing: bool = False
    log_reduced_grad: bool = False
    label: str = "run"

    def build_problem(self) -> CompositeProblem:
        return build_problem(self.problem)


def build_problem(doc: dict) -> CompositeProblem:
    if not isinstance(doc, dict):
        raise ContractViolationError("problem: must be an object")
    if "path" in doc:
        return load_problem(doc["path"])
    if "generator" in doc:
        return generate_problem(doc)
    if "inline" in doc:
        return problem_from_json(doc["inline"])
    if "components" in doc:
        return problem_from_json(doc)
    raise ContractViolationError(
        "problem: expected one of 'path', 'generator', or an inline document"
    )


def schedule_from_doc(doc: dict) -> ScheduleConfig:
    if not isinstance(doc, dict):
        raise ContractViolationError("schedule: must be an object")
    unknown = set(doc) - set(_SCHEDULE_KEYS)
    if unknown:
        raise ContractViolationError(f"schedule: unknown keys {sorted(unknown)}")
    kwargs = {}
    for key, attr in _SCHEDULE_KEYS.items():
        if key in doc:
            kwargs[attr] = doc[key]
    if "n" in kwargs and kwargs["n"] is not None:
        kwargs["n"] = int(kwargs["n"])
    return ScheduleConfig(**kwargs)


def _validate_stop(doc: dict) -> dict:
    if not isinstance(doc, dict) or not doc:
        raise ContractViolationError("stop: must be a non-empty object")
    allowed = {"iterations", "target_gap", "max_iterations", "oracle_calls"}
    unknown = set(doc) - allowed
    if unknown:
        raise ContractViolationError(f"stop: unknown keys {sorted(unknown)}")
    if "iterations" not in doc and "max_iterations" not in doc:
        raise ContractViolationError("stop: needs 'iterations' or 'max_iterations'")
    return dict(doc)


def _validate_seeds(seeds) -> list[int]:
    if not isinstance(seeds, list) or not seeds:
        raise ContractViolationError("seeds: must be a non-empty list of integers")
    out = []
    for i, s in enumerate(seeds):
        if not isinstance(s, int) or isinstance(s, bool) or s < 0 or s >= 2**64:
            raise ContractViolationError(f"seeds[{i}]: must be an unsigned 64-bit integer")
        out.append(s)
    return out


def _validate_emit(emit) -> list[str]:
    if not isinstance(emit, list):
        raise ContractViolationError("emit: must be a list")
    for e in emit:
        if e not in EMIT_KINDS:
            raise ContractViolationError(f"emit: unknown output kind {e!r}; choose from {EMIT_KINDS}")
    return list(emit)


def run_config_from_doc(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ContractViolationError("config: top level must be an object")
    allowed = {
        "problem", "schedule", "stop", "seeds", "outputs", "emit", "baseline",
        "timing", "log_reduced_grad", "label",
    }
    unknown = set(doc) - allowed
    if unknown:
        raise ContractViolationError(f"config: unknown keys {sorted(unknown)}")
    if "problem" not in doc:
        raise ContractViolationError("problem: missing")
    if "stop" not in doc:
        raise ContractViolationError("stop: missing")

    schedule = schedule_from_doc(doc.get("schedule", {}))
    stop = _validate_stop(doc["stop"])
    seeds = _validate_seeds(doc.get("seeds", [0]))
    emit = _validate_emit(doc.get("emit", ["csv", "json"]))
    baseline = doc.get("baseline")
    if baseline is not None:
        if not isinstance(baseline, dict) or "kind" not in baseline:
            raise ContractViolationError("baseline: must be an object with a 'kind'")
    return RunConfig(
        schedule=schedule,
        problem=doc["problem"],
        stop=stop,
        seeds=seeds,
        outputs=doc.get("outputs"),
        emit=emit,
        baseline=baseline,
        timing=bool(doc.get("timing", False)),
        log_reduced_grad=bool(doc.get("log_reduced_grad", False)),
        label=str(doc.get("label", "run")),
    )


def load_run_config(path: str | Path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ContractViolationError(f"config: invalid JSON ({e})") from e
    return run_config_from_doc(doc)


@dataclass
class ExperimentMatrix:
    """A labelled set of runs on one shared problem and seed list."""

    problem: dict
    seeds: list[int]
    stop: dict
    runs: list[dict]
    outputs: str | None = None
    emit: list[str] = field(default_factory=lambda: ["csv", "json"])
    budget_axis: str = "iterations"
    timing: bool = False


def matrix_from_doc(doc: dict) -> ExperimentMatrix:
    if not isinstance(doc, dict):
        raise ContractViolationError("config: top level must be an object")
    for key in ("problem", "runs"):
        if key not in doc:
            raise ContractViolationError(f"{key}: missing")
    runs = doc["runs"]
    if not isinstance(runs, list) or not runs:
        raise ContractViolationError("runs: must be a non-empty list")
    labels = set()
    for i, r in enumerate(runs):
        if not isinstance(r, dict) or "label" not in r:
            raise ContractViolationError(f"runs[{i}]: needs a 'label'")
        if r["label"] in labels:
            raise ContractViolationError(f"runs[{i}].label: duplicate label {r['label']!r}")
        labels.add(r["label"])
        if ("schedule" in r) == ("baseline" in r):
            raise ContractViolationError(
                f"runs[{i}]: needs exactly one of 'schedule' or 'baseline'"
            )
        if "schedule" in r:
            schedule_from_doc(r["schedule"])  # validated per cell, built later
    budget_axis = doc.get("budget_axis", "iterations")
    if budget_axis not in ("iterations", "oracle_calls"):
        raise ContractViolationError("budget_axis: must be 'iterations' or 'oracle_calls'")
    return ExperimentMatrix(
        problem=doc["problem"],
        seeds=_validate_seeds(doc.get("seeds", [0])),
        stop=_validate_stop(doc["stop"]),
        runs=runs,
        outputs=doc.get("outputs"),
        emit=_validate_emit(doc.get("emit", ["csv", "json"])),
        budget_axis=budget_axis,
        timing=bool(doc.get("timing", False)),
    )


def bundled_problem_doc() -> dict:
    """Small quadratic used by `run` when no config file is given."""
    return {
        "generator": "quadratic",
        "dim": 6,
        "n_components": 20,
        "cond_number": 8.0,
        "curvature_spread": 0.0,
        "center_spread": 0.02,
        "x0_distance": 2.0,
        "seed": 12345,
    }
