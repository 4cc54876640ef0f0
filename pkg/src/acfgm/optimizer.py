"""Main optimizer loop over all schedule variants, plus baseline solvers.

The loop follows the published order exactly: draw the main batch and form
the averaged gradient, take the anchored prox step, combine the output
iterate and moving-average center, size and draw the two stepsize batches,
form the local smoothness estimate, then compute the next stepsize and the
next main batch size.  Variant C additionally draws the three variance
batches at their slots and feeds the inflated pairwise estimates into the
schedule in place of the exact backdoor values.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import ContractViolationError
from .estimators import (
    batch_grad,
    grad_diff,
    local_smoothness,
    pairwise_grad_variance,
    pairwise_smoothness_variance,
    taylor_remainder,
)
from .problems import CompositeProblem, gradient_mapping, prox_step
from .sampling import FiltrationLog, StreamKind, draw_batch
from .schedule import (
    ScheduleConfig,
    ScheduleState,
    Variant,
    batch_size_main,
    batch_size_step,
    next_stepsize,
)

Array = np.ndarray


@dataclass
class TrajectoryRecord:
    """One row per iteration; the CSV schema mirrors the field order."""

    k: int
    gap: float
    eta: float
    l_bar: float
    m: int
    n: int
    r: int
    calls_total: int
    sigma_sq: float
    v: float
    red_grad: float
    wall_ms: float
    delta_sq: float


CSV_COLUMNS = [
    "k", "gap", "eta", "l_bar", "m", "n", "r", "calls_total",
    "sigma_sq", "v", "red_grad", "wall_ms", "delta_sq",
]


@dataclass
class RunResult:
    x_final: Array
    records: list[TrajectoryRecord]
    filtration: FiltrationLog
    summary: dict
    iterates: list[tuple[Array, Array, Array]] = field(default_factory=list)


def _normalize_stop(cfg: ScheduleConfig, stop: dict) -> tuple[ScheduleConfig, dict]:
    stop = dict(stop)
    known = {"iterations", "target_gap", "max_iterations", "oracle_calls"}
    unknown = set(stop) - known
    if unknown:
        raise ContractViolationError(f"stop: unknown keys {sorted(unknown)}")
    if "iterations" in stop:
        its = int(stop["iterations"])
        if its < 1:
            raise ContractViolationError("stop.iterations: must be positive")
        if cfg.variant is Variant.A_FIXED_HORIZON:
            if cfg.n is None:
                cfg = replace(cfg, n=its)
            elif cfg.n != its:
                raise ContractViolationError(
                    "stop.iterations: must match schedule.n for the fixed-horizon variant"
                )
    else:
        if "max_iterations" not in stop:
            raise ContractViolationError("stop: needs iterations or max_iterations")
        if cfg.variant is Variant.A_FIXED_HORIZON and cfg.n is None:
            raise ContractViolationError(
                "schedule.n: the fixed-horizon variant needs N even under gap/call stops"
            )
    if "target_gap" in stop and not stop["target_gap"] > 0:
        raise ContractViolationError("stop.target_gap: must be positive")
    return cfg, stop


def _should_stop(stop: dict, k: int, gap: float, calls: int) -> bool:
    if "iterations" in stop and k >= int(stop["iterations"]):
        return True
    if "max_iterations" in stop and k >= int(stop["max_iterations"]):
        return True
    if "target_gap" in stop and not np.isnan(gap) and gap <= stop["target_gap"]:
        return True
    if "oracle_calls" in stop and calls >= int(stop["oracle_calls"]):
        return True
    return False


def run(
    problem: CompositeProblem,
    cfg: ScheduleConfig,
    stop: dict,
    seed: int,
    log_reduced_grad: bool = False,
    timing: bool = False,
    keep_iterates: bool = False,
) -> RunResult:
    """Execute one seeded optimizer run and return the full trajectory.

    Variants A/B/HP read the exact variance backdoors of the problem (the
    HP proxies are the exact variances times ``cfg.subgauss_proxy``);
    variant C runs the inflated pairwise estimators on its three extra
    sampling streams.  Wall times are recorded only when `timing` is set, so
    that default output replays byte-identically.
    """
    cfg, stop = _normalize_stop(cfg, stop)
    f = problem.f
    m_comp = f.n_components
    variant_c = cfg.variant is Variant.C_VARIANCE_ADAPTIVE
    proxy = cfg.subgauss_proxy if cfg.variant is Variant.HP_HIGH_PROBABILITY else 1.0
    has_optimum = problem.optimum is not None

    filtration = FiltrationLog()
    sched = ScheduleState(cfg)
    records: list[TrajectoryRecord] = []
    iterates: list[tuple[Array, Array, Array]] = []

    def draw(kind: StreamKind, it: int, size: int):
        return draw_batch(seed, kind, it, size, m_comp, filtration)

    x = problem.x0.copy()
    y = x.copy()
    y0 = x.copy()
    eta_k = cfg.eta1
    if variant_c:
        sigma_prev_sq = None  # estimated from the first variance batch
    else:
        sigma_prev_sq = proxy * f.point_variance(x)

    coverage: list[dict] = []  # per-iteration estimate-vs-exact comparisons (C)
    aborted = None
    k = 0
    while True:
        k += 1
        t_start = time.perf_counter() if timing else 0.0

        red_grad = float("nan")
        if log_reduced_grad:
            _, rg = gradient_mapping(problem, y, f.full_grad(x), eta_k)
            red_grad = float(np.linalg.norm(rg))

        r_k = cfg.pair_count(k) if variant_c else 0
        var_main = None
        if variant_c:
            var_main = draw(StreamKind.VAR_MAIN, k, 2 * r_k)
            if k == 1:
                # bootstrap: no estimate of the gradient variance at x0 exists
                # before any batch is drawn, so the first variance batch is
                # evaluated at x0 for m_1 and reused at x1 for delta_1
                sigma_prev_sq = pairwise_grad_variance(
                    f, x, var_main.indices, cfg.inflation
                )
        m_k = batch_size_main(cfg, eta_k, sigma_prev_sq, k)
        main = draw(StreamKind.MAIN_UPDATE, k, m_k)
        stats = batch_grad(problem, x, main)
        g_k = stats.mean_grad

        gamma_k = cfg.gamma(k)
        tau_k = cfg.tau(k)
        beta_k = cfg.beta_k(k)
        z = prox_step(problem, g_k, y, y0, eta_k, gamma_k)
        x_prev = x
        x = (z + tau_k * x_prev) / (1.0 + tau_k)
        y = (1.0 - beta_k) * y + beta_k * z
        if keep_iterates:
            iterates.append((z.copy(), x.copy(), y.copy()))

        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.all(np.isfinite(z))):
            aborted = f"non-finite iterate at iteration {k}"
            break

        if variant_c:
            delta_k_sq = pairwise_grad_variance(f, x, var_main.indices, cfg.inflation)
        else:
            delta_k_sq = proxy * f.point_variance(x)

        v_max_used = sched.v_max_running
        n_k = batch_size_step(cfg, eta_k, v_max_used, sigma_prev_sq, delta_k_sq, k)

        gd_batch = draw(StreamKind.STEP_GRAD_DIFF, k, n_k)
        var_gd = draw(StreamKind.VAR_GRAD_DIFF, k, 2 * r_k) if variant_c else None
        dg = grad_diff(problem, x_prev, x, gd_batch)

        ty_batch = draw(StreamKind.STEP_TAYLOR, k, n_k)
        var_ty = draw(StreamKind.VAR_TAYLOR, k, 2 * r_k) if variant_c else None
        t_rem = taylor_remainder(problem, x_prev, x, ty_batch)

        l_bar_k = local_smoothness(
            dg, t_rem, prev=sched.l_bar_prev, scale=max(1.0, float(np.linalg.norm(g_k)))
        )

        if variant_c:
            v_k = pairwise_smoothness_variance(f, x_prev, x, var_gd.indices, cfg.inflation)
            sigma_k_sq = pairwise_grad_variance(f, x, var_ty.indices, cfg.inflation)
            coverage.append(
                {
                    "k": k,
                    "sigma_hat_sq": sigma_prev_sq,
                    "sigma_exact_sq": f.point_variance(x_prev),
                    "delta_hat_sq": delta_k_sq,
                    "delta_exact_sq": f.point_variance(x),
                    "v_hat": v_k,
                    "v_exact": f.smoothness_variance(x_prev, x),
                }
            )
        else:
            v_k = proxy * f.smoothness_variance(x_prev, x)
            sigma_k_sq = delta_k_sq  # same point, same exact quantity

        gap = problem.evaluate_gap(x) if has_optimum else float("nan")
        wall_ms = (time.perf_counter() - t_start) * 1e3 if timing else 0.0
        records.append(
            TrajectoryRecord(
                k=k,
                gap=gap,
                eta=eta_k,
                l_bar=l_bar_k,
                m=m_k,
                n=n_k,
                r=r_k,
                calls_total=filtration.total_calls,
                sigma_sq=sigma_prev_sq,
                v=v_max_used,
                red_grad=red_grad,
                wall_ms=wall_ms,
                delta_sq=delta_k_sq,
            )
        )

        sched.etas.append(eta_k)
        sched.observe_l_bar(l_bar_k)
        sched.observe_v(v_k)
        eta_k = next_stepsize(cfg, k + 1, eta_k, l_bar_k)
        sigma_prev_sq = sigma_k_sq

        if _should_stop(stop, k, gap, filtration.total_calls):
            break

    summary = report_summary(records, cfg, problem=problem, filtration=filtration)
    if aborted:
        summary["aborted"] = aborted
    if variant_c:
        summary["coverage_rows"] = coverage
    return RunResult(
        x_final=x, records=records, filtration=filtration, summary=summary,
        iterates=iterates,
    )


def evaluate_gap(problem: CompositeProblem, x: Array) -> float:
    """Verification-side optimality gap using the full finite sum."""
    return problem.evaluate_gap(x)


# ---------------------------------------------------------------------------
# Summary
# ---------------------------------------------------------------------------


def report_summary(
    records: list[TrajectoryRecord],
    cfg: ScheduleConfig,
    problem: CompositeProblem | None = None,
    filtration: FiltrationLog | None = None,
) -> dict:
    """Derived run statistics: trajectory noise-to-smoothness ratio, initial
    gap measure, running smoothness max, and the empirical rate exponent."""
    from .harness.plotdata import rate_fit

    n_rows = len(records)
    summary: dict = {
        "iterations": n_rows,
        "variant": cfg.variant.value,
        "beta": cfg.beta,
        "eta1": cfg.eta1,
        "d_tilde": cfg.d_tilde,
    }
    if not records:
        return summary

    # average variance-to-smoothness ratio; row k is normalized by the
    # smoothness estimate that produced its stepsize (the seed value for k=1)
    lbar_prev = cfg.l_hat_seed()
    total = 0.0
    for rec in records:
        numer = rec.v * cfg.d_tilde**2 + rec.delta_sq + rec.sigma_sq
        if lbar_prev > 0:
            total += numer / (lbar_prev * lbar_prev)
        elif numer > 0:
            total = float("inf")
        lbar_prev = rec.l_bar
    summary["r_n_sq"] = total / n_rows

    l_hat = cfg.l_hat_seed()
    for rec in records:
        l_hat = max(l_hat, rec.l_bar)
    summary["l_hat"] = l_hat

    summary["total_oracle_calls"] = records[-1].calls_total
    if filtration is not None:
        summary["calls_by_kind"] = filtration.calls_by_kind()
    summary["sum_m"] = sum(r.m for r in records)
    summary["sum_n"] = sum(r.n for r in records)
    summary["sum_r"] = sum(r.r for r in records)
    summary["final_gap"] = records[-1].gap
    summary["total_wall_ms"] = sum(r.wall_ms for r in records)

    gaps = [r.gap for r in records]
    ks = [r.k for r in records]
    slope = rate_fit(ks, gaps, window=0.5)
    summary["rate_exponent"] = slope if slope is not None else float("nan")

    if problem is not None and problem.optimum is not None:
        g0 = problem.f.full_grad(problem.x0) + problem.initial_subgradient()
        gn2 = float(np.dot(g0, g0))
        dist2 = float(np.sum((problem.optimum[0] - problem.x0) ** 2))
        if cfg.variant is Variant.A_FIXED_HORIZON:
            d0_sq = 36.0 * cfg.eta1**2 * gn2 + 18.0 * (dist2 + cfg.d_tilde**2)
        else:
            d0_sq = 4.5 * cfg.eta1**2 * gn2 + 30.0 * (dist2 + cfg.d_tilde**2)
        summary["d0"] = float(np.sqrt(d0_sq))
        summary["initial_gap"] = problem.evaluate_gap(problem.x0)
    return summary


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------


class BaselineKind(Enum):
    DETERMINISTIC_ACFGM = "deterministic_acfgm"
    KNOWN_L_ACCELERATED = "known_l_accelerated"
    PLAIN_SGD = "plain_sgd"


def _baseline_record(k, gap, eta, calls, *, l_bar=float("nan"), m=0, n=0,
                     wall_ms=0.0) -> TrajectoryRecord:
    return TrajectoryRecord(
        k=k, gap=gap, eta=eta, l_bar=l_bar, m=m, n=n, r=0, calls_total=calls,
        sigma_sq=0.0, v=0.0, red_grad=float("nan"), wall_ms=wall_ms,
        delta_sq=0.0,
    )


def run_baseline(
    problem: CompositeProblem,
    kind: BaselineKind | str,
    params: dict | None,
    stop: dict,
    seed: int,
    timing: bool = False,
) -> RunResult:
    """Run one of the comparison optimizers with the shared record schema."""
    if isinstance(kind, str):
        kind = BaselineKind(kind)
    params = dict(params or {})
    if kind is BaselineKind.DETERMINISTIC_ACFGM:
        return _run_deterministic_acfgm(problem, params, stop, timing)
    if kind is BaselineKind.KNOWN_L_ACCELERATED:
        return _run_known_l(problem, params, stop, seed, timing)
    if kind is BaselineKind.PLAIN_SGD:
        return _run_plain_sgd(problem, params, stop, seed, timing)
    raise ContractViolationError(f"unknown baseline {kind!r}")


def _run_deterministic_acfgm(problem, params, stop, timing) -> RunResult:
    """Full-gradient auto-conditioned method: same stepsize rule, with the
    local smoothness computed from exact gradient and value differences.
    Every full sweep costs M oracle calls."""
    beta = params.get("beta", 0.125)
    eta1 = params.get("eta1", 1.0)
    variant = Variant(params.get("variant", "a"))
    n_stop = stop.get("iterations", stop.get("max_iterations"))
    cfg = ScheduleConfig(variant=variant, beta=beta, eta1=eta1,
                         n=int(n_stop) if variant is Variant.A_FIXED_HORIZON else None)
    f = problem.f
    m_comp = f.n_components
    has_optimum = problem.optimum is not None

    x = problem.x0.copy()
    y = x.copy()
    y0 = x.copy()
    eta_k = cfg.eta1
    fx = f.full_value(x)
    gx = f.full_grad(x)
    calls = m_comp
    records: list[TrajectoryRecord] = []
    l_bar_prev = 0.0
    k = 0
    while True:
        k += 1
        t0 = time.perf_counter() if timing else 0.0
        z = prox_step(problem, gx, y, y0, eta_k, cfg.gamma(k))
        tau_k = cfg.tau(k)
        x_prev, fx_prev, gx_prev = x, fx, gx
        x = (z + tau_k * x_prev) / (1.0 + tau_k)
        y = (1.0 - cfg.beta_k(k)) * y + cfg.beta_k(k) * z
        fx = f.full_value(x)
        gx = f.full_grad(x)
        calls += m_comp

        dg = gx - gx_prev
        t_rem = max(fx_prev - fx - float(gx @ (x_prev - x)), 0.0)
        l_bar_k = local_smoothness(dg, t_rem, prev=l_bar_prev,
                                   scale=max(1.0, float(np.linalg.norm(gx))))
        gap = problem.evaluate_gap(x) if has_optimum else float("nan")
        wall = (time.perf_counter() - t0) * 1e3 if timing else 0.0
        records.append(_baseline_record(k, gap, eta_k, calls, l_bar=l_bar_k,
                                        m=m_comp, wall_ms=wall))
        eta_k = next_stepsize(cfg, k + 1, eta_k, l_bar_k)
        l_bar_prev = l_bar_k
        if _should_stop(stop, k, gap, calls):
            break
    summary = report_summary(records, cfg, problem=problem)
    summary["baseline"] = BaselineKind.DETERMINISTIC_ACFGM.value
    return RunResult(x_final=x, records=records, filtration=FiltrationLog(),
                     summary=summary)


def _run_known_l(problem, params, stop, seed, timing) -> RunResult:
    """Accelerated stochastic method with a known Lipschitz constant and the
    classical mini-batch growth m_k ~ N k^2 sigma^2 / (L^2 D~^2)."""
    f = problem.f
    L = float(params.get("L", f.max_smoothness))
    if not L > 0:
        raise ContractViolationError("known-L baseline requires a positive L")
    d_tilde = float(params.get("d_tilde", 1.0))
    n_stop = int(stop.get("iterations", stop.get("max_iterations", 0)))
    if n_stop < 1:
        raise ContractViolationError("known-L baseline needs an iteration horizon")
    cap = int(params.get("batch_cap", 10_000_000))
    m_comp = f.n_components
    has_optimum = problem.optimum is not None

    filtration = FiltrationLog()
    x = problem.x0.copy()
    x_ag = x.copy()
    records: list[TrajectoryRecord] = []
    k = 0
    while True:
        k += 1
        t0 = time.perf_counter() if timing else 0.0
        alpha = 2.0 / (k + 1)
        gamma_k = k / (4.0 * L)
        x_md = (1.0 - alpha) * x_ag + alpha * x
        sigma_sq = f.point_variance(x_md)
        m_k = max(1, int(np.ceil(n_stop * k * k * sigma_sq / (L * L * d_tilde**2))))
        m_k = min(m_k, cap)
        batch = draw_batch(seed, StreamKind.MAIN_UPDATE, k, m_k, m_comp, filtration)
        g = batch_grad(problem, x_md, batch).mean_grad
        x = prox_step(problem, g, x, x, gamma_k, 0.0)
        x_ag = (1.0 - alpha) * x_ag + alpha * x
        gap = problem.evaluate_gap(x_ag) if has_optimum else float("nan")
        wall = (time.perf_counter() - t0) * 1e3 if timing else 0.0
        records.append(_baseline_record(k, gap, gamma_k, filtration.total_calls,
                                        m=m_k, wall_ms=wall))
        if _should_stop(stop, k, gap, filtration.total_calls):
            break
    cfg = ScheduleConfig(variant=Variant.B_HORIZON_FREE, beta=0.1, eta1=1.0)
    summary = report_summary(records, cfg, problem=problem)
    summary["baseline"] = BaselineKind.KNOWN_L_ACCELERATED.value
    summary["L"] = L
    return RunResult(x_final=x_ag, records=records, filtration=filtration,
                     summary=summary)


def _run_plain_sgd(problem, params, stop, seed, timing) -> RunResult:
    """Proximal SGD with eta_k = theta / sqrt(k)."""
    f = problem.f
    theta = float(params.get("theta", 1.0))
    batch_size = int(params.get("batch", 1))
    if theta <= 0 or batch_size < 1:
        raise ContractViolationError("plain SGD needs theta > 0 and batch >= 1")
    m_comp = f.n_components
    has_optimum = problem.optimum is not None

    filtration = FiltrationLog()
    x = problem.x0.copy()
    records: list[TrajectoryRecord] = []
    k = 0
    while True:
        k += 1
        t0 = time.perf_counter() if timing else 0.0
        eta_k = theta / np.sqrt(k)
        batch = draw_batch(seed, StreamKind.MAIN_UPDATE, k, batch_size, m_comp, filtration)
        g = batch_grad(problem, x, batch).mean_grad
        x = prox_step(problem, g, x, x, eta_k, 0.0)
        gap = problem.evaluate_gap(x) if has_optimum else float("nan")
        wall = (time.perf_counter() - t0) * 1e3 if timing else 0.0
        records.append(_baseline_record(k, gap, eta_k, filtration.total_calls,
                                        m=batch_size, wall_ms=wall))
        if _should_stop(stop, k, gap, filtration.total_calls):
            break
    cfg = ScheduleConfig(variant=Variant.B_HORIZON_FREE, beta=0.1, eta1=theta)
    summary = report_summary(records, cfg, problem=problem)
    summary["baseline"] = BaselineKind.PLAIN_SGD.value
    return RunResult(x_final=x, records=records, filtration=filtration,
                     summary=summary)
