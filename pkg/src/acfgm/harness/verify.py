"""Acceptance criteria: seeded desk-scale checks of the published invariants
and convergence behavior.

Every criterion runs hermetically from fixed seeds and prints one PASS/FAIL
line with its measured values.  One check is a documented known failure:
the published trajectory stepsize floor for the anchored variants
(B/C/HP) does not follow from their own stepsize recursion - on a
constant-curvature trajectory the growth branch multiplies eta by
(k-1)(k+2-beta)/k^2 per step, which trails the floor's required k/(k-1)
growth by (k-1)^2 (k+2-beta)/k^3 < 1, so eta_3 = 0.0677/L already sits below
the claimed floor (15/16)*3/(32 L).  The floor the recursion does guarantee
(and which we verify instead) tracks q_2 = min(2, 1/(3-beta)),
q_k = min(2(k-1), (k-1)(k+2-beta) q_{k-1} / k^2).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..estimators import local_smoothness, pairwise_grad_variance, pairwise_smoothness_variance
from ..optimizer import run, run_baseline
from ..problems import (
    Ball,
    Box,
    CompositeProblem,
    FullSpace,
    L1,
    LeastSquaresSum,
    SetIndicator,
    Zero,
    least_squares_instance,
    prox_oracle_numeric,
    prox_step,
    quadratic_instance,
    scale_problem,
)
from ..sampling import audit_filtration
from ..schedule import (
    ScheduleConfig,
    stepsize_lower_bound_check,
    stepsize_upper_cap_violations,
)
from .plotdata import rate_fit
from .runner import records_to_csv


@dataclass
class CriterionResult:
    name: str
    passed: bool
    known_fail: bool = False
    measured: dict = field(default_factory=dict)
    note: str = ""

    def render(self) -> str:
        if self.passed:
            status = "PASS"
        elif self.known_fail:
            status = "KNOWN-FAIL"
        else:
            status = "FAIL"
        vals = ", ".join(f"{k}={_short(v)}" for k, v in self.measured.items())
        line = f"[{status:10s}] {self.name}: {vals}"
        if self.note:
            line += f"  ({self.note})"
        return line


def _short(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


class AcceptanceContext:
    """Lazily built, cached problems and runs shared across criteria."""

    def __init__(self, fast: bool = False):
        self.fast = fast
        self.n_seeds = 6 if fast else 20
        self.n_seeds_c = 12 if fast else 50
        self._cache: dict = {}

    def _get(self, key, builder):
        if key not in self._cache:
            self._cache[key] = builder()
        return self._cache[key]

    # -- deterministic recovery problem (criterion 1) -----------------------

    def crit1_problem(self):
        return self._get("p1", lambda: quadratic_instance(
            dim=20, n_components=1, cond_number=100.0, x0_distance=3.0, seed=42))

    def crit1_cfg(self):
        return ScheduleConfig(variant="a", beta=0.125, eta1=1.0, n=400)

    def crit1_run(self):
        def build():
            t0 = time.perf_counter()
            res = run(self.crit1_problem(), self.crit1_cfg(), {"iterations": 400}, seed=0)
            return res, time.perf_counter() - t0
        return self._get("r1", build)

    # -- stochastic scaling problem (criteria 7, 8, 9, 12) ------------------

    def crit7_problem(self):
        def build():
            # shared-curvature quadratic: position-independent gradient noise,
            # sized so the x100-scaled twin stays inside the batch cap
            probe = quadratic_instance(dim=10, n_components=200, cond_number=30.0,
                                       center_spread=1e-3, x0_distance=4.0, seed=17)
            s2 = probe.f.point_variance(probe.x0)
            ctr = 1e-3 * np.sqrt(0.02 / s2)
            return quadratic_instance(dim=10, n_components=200, cond_number=30.0,
                                      center_spread=ctr, x0_distance=4.0, seed=17)
        return self._get("p7", build)

    def crit7_cfg(self):
        p = self.crit7_problem()
        d = p.metadata["x0_distance"]
        # eta1 ~ 0.05/L keeps the first step stable for both the raw problem
        # and its x100-scaled twin (criterion: same config on both)
        return ScheduleConfig(variant="a", beta=0.125, n=60, d_tilde=d,
                              eta1=0.05 / p.f.max_smoothness)

    def crit9_cfg(self):
        p = self.crit7_problem()
        d = p.metadata["x0_distance"]
        # the anchored eta_2 rule carries an extra 1/(3-beta); a 3x larger
        # eta1 gives variant B the same effective initial stepsize as A
        return ScheduleConfig(variant="b", beta=0.12, d_tilde=d,
                              eta1=0.15 / p.f.max_smoothness)

    def runs7(self):
        def build():
            p, cfg = self.crit7_problem(), self.crit7_cfg()
            t0 = time.perf_counter()
            out = {s: run(p, cfg, {"iterations": 60}, seed=s) for s in range(self.n_seeds)}
            return out, time.perf_counter() - t0
        return self._get("r7", build)

    def runs8_scaled(self):
        def build():
            p = scale_problem(self.crit7_problem(), 100.0)
            cfg = self.crit7_cfg()
            return {s: run(p, cfg, {"iterations": 60}, seed=s) for s in range(self.n_seeds)}
        return self._get("r8", build)

    def runs9(self):
        def build():
            p, cfg = self.crit7_problem(), self.crit9_cfg()
            return {s: run(p, cfg, {"iterations": 60}, seed=s) for s in range(self.n_seeds)}
        return self._get("r9", build)

    # -- variance-adaptive coverage problem (criterion 10) ------------------

    def crit10_problem(self):
        return self._get("p10", lambda: quadratic_instance(
            dim=10, n_components=200, cond_number=10.0, center_spread=0.05,
            x0_distance=2.0, seed=515))

    def crit10_cfg(self):
        p = self.crit10_problem()
        return ScheduleConfig(variant="c", beta=0.12, d_tilde=p.metadata["x0_distance"],
                              n=30, inflation=1.5, p_n=0.05)

    def runs10(self):
        def build():
            p, cfg = self.crit10_problem(), self.crit10_cfg()
            return {s: run(p, cfg, {"iterations": 30}, seed=s)
                    for s in range(self.n_seeds_c)}
        return self._get("r10", build)

    # -- trajectory pools ----------------------------------------------------

    def fixed_horizon_trajectories(self):
        out = [("crit1", self.crit1_cfg(), self.crit1_run()[0])]
        for s, res in self.runs7()[0].items():
            out.append((f"crit7 seed {s}", self.crit7_cfg(), res))
        for s, res in self.runs8_scaled().items():
            out.append((f"crit8 seed {s}", self.crit7_cfg(), res))
        return out

    def anchored_trajectories(self):
        out = []
        for s, res in self.runs9().items():
            out.append((f"crit9 seed {s}", self.crit9_cfg(), res))
        for s, res in self.runs10().items():
            out.append((f"crit10 seed {s}", self.crit10_cfg(), res))
        return out

    def all_trajectories(self):
        return self.fixed_horizon_trajectories() + self.anchored_trajectories()


# ---------------------------------------------------------------------------
# Criteria
# ---------------------------------------------------------------------------


def criterion_1_deterministic_rate(ctx) -> CriterionResult:
    res, elapsed = ctx.crit1_run()
    gaps = {r.k: r.gap for r in res.records}
    ratio = gaps[400] / gaps[200]
    slope = rate_fit([r.k for r in res.records], [r.gap for r in res.records], window=0.5)
    passed = ratio <= 0.35 and slope is not None and slope <= -1.8 and elapsed < 2.0
    return CriterionResult(
        "1 deterministic 1/N^2 recovery", passed,
        measured={"gap400_over_gap200": ratio, "rate_exponent": slope,
                  "runtime_s": elapsed},
    )


def _floor_violations(trajs, mode):
    total = 0
    first = None
    for name, cfg, res in trajs:
        etas = [r.eta for r in res.records]
        l_bars = [r.l_bar for r in res.records]
        v = stepsize_lower_bound_check(cfg, etas, l_bars, mode=mode)
        total += len(v)
        if v and first is None:
            first = f"{name} k={v[0].k} eta={v[0].eta:.3g} < {v[0].bound:.3g}"
    return total, first


def criterion_2a_stepsize_floor_fixed_horizon(ctx) -> CriterionResult:
    total, first = _floor_violations(ctx.fixed_horizon_trajectories(), "published")
    return CriterionResult(
        "2a stepsize lower bound (variant A, published)", total == 0,
        measured={"violations": total}, note=first or "",
    )


def criterion_2b_stepsize_floor_anchored(ctx) -> CriterionResult:
    total, first = _floor_violations(ctx.anchored_trajectories(), "published")
    prov_total, prov_first = _floor_violations(ctx.anchored_trajectories(), "provable")
    # expected failure: the published anchored floor contradicts the anchored
    # stepsize recursion itself (see the module docstring); the floor that the
    # recursion provably implies must hold with zero violations
    passed = total == 0
    return CriterionResult(
        "2b stepsize lower bound (variants B/C, published 15/16 factor)", passed,
        known_fail=not passed and prov_total == 0,
        measured={"published_violations": total, "provable_violations": prov_total},
        note=("documented defect in the published floor; corrected floor holds"
              if total else "published floor unexpectedly held"),
    )


def criterion_3_stepsize_caps(ctx) -> CriterionResult:
    total = 0
    first = None
    for name, cfg, res in ctx.all_trajectories():
        etas = [r.eta for r in res.records]
        l_bars = [r.l_bar for r in res.records]
        issues = stepsize_upper_cap_violations(cfg, etas, l_bars)
        total += len(issues)
        if issues and first is None:
            first = f"{name}: {issues[0]}"
    return CriterionResult("3 stepsize upper caps", total == 0,
                           measured={"violations": total}, note=first or "")


def criterion_4_local_smoothness_bound(ctx) -> CriterionResult:
    p = least_squares_instance(dim=8, n_components=50, cond_number=10.0,
                               heterogeneity=1.0, noise=0.5, seed=99)
    lmax = p.f.max_smoothness
    rng = np.random.default_rng(47)
    n_draws = 2000 if ctx.fast else 10_000
    worst_ratio = 0.0
    worst_t = 0.0
    scale = p.scale
    for _ in range(n_draws):
        a = rng.standard_normal(8)
        b = rng.standard_normal(8)
        idx = rng.integers(0, 50, size=int(rng.integers(1, 9)))
        diff = a - b
        t_raw = float(np.mean(p.f.batch_values(a, idx) - p.f.batch_values(b, idx)
                              - p.f.batch_grads(b, idx) @ diff))
        dg = (p.f.batch_grads(b, idx) - p.f.batch_grads(a, idx)).mean(axis=0)
        l_bar = local_smoothness(dg, t_raw)
        worst_ratio = max(worst_ratio, l_bar / lmax)
        worst_t = min(worst_t, t_raw)
    passed = worst_ratio <= 1.0 + 1e-6 and worst_t >= -1e-10 * scale
    return CriterionResult(
        "4 local smoothness bounded by worst component", passed,
        measured={"draws": n_draws, "max_lbar_over_L": worst_ratio,
                  "min_raw_taylor": worst_t},
    )


def criterion_5_prox_equivalence(ctx) -> CriterionResult:
    rng = np.random.default_rng(2024)
    per_kind = 40 if ctx.fast else 200
    t0 = time.perf_counter()
    worst = 0.0
    cases = 0
    for kind in ("zero", "l1", "indicator"):
        for i in range(per_kind):
            n = int(rng.integers(2, 7))
            sets = {
                "full": FullSpace(),
                "box": Box(-rng.uniform(0.2, 2.0, n), rng.uniform(0.2, 2.0, n)),
                "ball": Ball(rng.standard_normal(n) * 0.3, float(rng.uniform(0.5, 2.0))),
            }
            if kind == "zero":
                h, X = Zero(), sets[("full", "box", "ball")[i % 3]]
            elif kind == "l1":
                h, X = L1(float(rng.uniform(0.05, 1.5))), sets[("full", "box", "ball")[i % 3]]
            else:
                h, X = SetIndicator(sets[("box", "ball")[i % 2]]), FullSpace()
            f = LeastSquaresSum(rows=np.eye(n), rhs=np.zeros(n))
            prob = CompositeProblem(f=f, h=h, set=X, x0=X.project(np.zeros(n)))
            g = rng.standard_normal(n)
            y = rng.standard_normal(n)
            y0 = rng.standard_normal(n)
            eta = float(rng.uniform(0.05, 2.0))
            gamma = float(rng.choice([0.0, 0.5, 1.0]))
            z = prox_step(prob, g, y, y0, eta, gamma)
            c = (y + gamma * y0 - eta * g) / (1.0 + gamma)
            z_ref = prox_oracle_numeric(h, X, c, eta / (1.0 + gamma))
            worst = max(worst, float(np.max(np.abs(z - z_ref))))
            cases += 1
    elapsed = time.perf_counter() - t0
    passed = worst <= 1e-8 and elapsed < 5.0
    return CriterionResult(
        "5 prox equals numeric subproblem oracle", passed,
        measured={"instances": cases, "max_abs_diff": worst, "runtime_s": elapsed},
    )


def criterion_6_pairwise_unbiasedness(ctx) -> CriterionResult:
    p = least_squares_instance(dim=4, n_components=15, seed=7)
    x = p.x0
    x2 = p.x0 + 0.4
    n_pairs = 20_000 if ctx.fast else 100_000
    rng = np.random.default_rng(606)
    idx = rng.integers(0, 15, size=2 * n_pairs)
    sigma_est = pairwise_grad_variance(p.f, x, idx, 1.0)
    sigma_exact = p.f.point_variance(x)
    idx2 = rng.integers(0, 15, size=2 * n_pairs)
    v_est = pairwise_smoothness_variance(p.f, x, x2, idx2, 1.0)
    v_exact = p.f.smoothness_variance(x, x2)
    rel_s = abs(sigma_est - sigma_exact) / sigma_exact
    rel_v = abs(v_est - v_exact) / v_exact
    passed = rel_s <= 0.02 and rel_v <= 0.02
    return CriterionResult(
        "6 pairwise estimators unbiased", passed,
        measured={"pairs": n_pairs, "sigma_rel_err": rel_s, "v_rel_err": rel_v},
    )


def criterion_7_stochastic_rate(ctx) -> CriterionResult:
    runs, elapsed = ctx.runs7()
    g30 = np.mean([{r.k: r.gap for r in res.records}[30] for res in runs.values()])
    g60 = np.mean([res.records[-1].gap for res in runs.values()])
    ratio = g60 / g30
    passed = ratio <= 0.5 and elapsed < 60.0
    return CriterionResult(
        "7 stochastic rate scaling (mean gap halves, 30 -> 60)", passed,
        measured={"seeds": len(runs), "mean_gap30": float(g30),
                  "mean_gap60": float(g60), "ratio": ratio, "runtime_s": elapsed},
    )


def criterion_8_scaling_freeness(ctx) -> CriterionResult:
    p = ctx.crit7_problem()
    ps = scale_problem(p, 100.0)
    base = ctx.runs7()[0]
    scaled = ctx.runs8_scaled()
    aborted = sum(1 for res in scaled.values() if res.summary.get("aborted"))
    rel_u = np.mean([res.records[-1].gap for res in base.values()]) / p.metadata["initial_gap"]
    rel_s = np.mean([res.records[-1].gap for res in scaled.values()]) / ps.metadata["initial_gap"]
    factor = rel_s / rel_u
    lhat_u = np.mean([res.summary["l_hat"] for res in base.values()])
    lhat_s = np.mean([res.summary["l_hat"] for res in scaled.values()])
    lhat_ratio = lhat_s / lhat_u
    passed = (aborted == 0 and 1.0 / 3.0 <= factor <= 3.0
              and 90.0 <= lhat_ratio <= 110.0)
    return CriterionResult(
        "8 parameter-freeness under x100 scaling", passed,
        measured={"aborted_runs": aborted, "relative_gap_factor": float(factor),
                  "l_hat_ratio": float(lhat_ratio)},
    )


def criterion_9_horizon_freeness(ctx) -> CriterionResult:
    ga = np.mean([res.records[-1].gap for res in ctx.runs7()[0].values()])
    gb = np.mean([res.records[-1].gap for res in ctx.runs9().values()])
    factor = gb / ga
    passed = factor <= 5.0
    return CriterionResult(
        "9 anchored variant matches fixed-horizon within factor 5", passed,
        measured={"mean_gap_b": float(gb), "mean_gap_a": float(ga),
                  "factor": float(factor)},
    )


def criterion_10_variance_coverage(ctx) -> CriterionResult:
    runs = ctx.runs10()
    covered = 0
    for res in runs.values():
        rows = res.summary["coverage_rows"]
        ok = all(r["sigma_hat_sq"] >= r["sigma_exact_sq"]
                 and r["delta_hat_sq"] >= r["delta_exact_sq"] for r in rows)
        # v-hat_{k-1} vs v_{k-1} applies from k=2 (k=1 compares the seed to itself)
        ok = ok and all(r["v_hat"] >= r["v_exact"] for r in rows[:-1])
        covered += ok
    frac = covered / len(runs)
    return CriterionResult(
        "10 variance-estimate domination frequency", frac >= 0.90,
        measured={"runs": len(runs), "covered_fraction": frac},
    )


def criterion_11_oracle_accounting(ctx) -> CriterionResult:
    mismatches = 0
    worst_rn = 0.0
    first = None
    for name, cfg, res in ctx.all_trajectories():
        s = res.summary
        expected = s["sum_m"] + 2 * s["sum_n"] + 6 * s["sum_r"]
        if res.filtration.total_calls != expected:
            mismatches += 1
            if first is None:
                first = f"{name}: {res.filtration.total_calls} != {expected}"
        if not audit_filtration(res.filtration).passed:
            mismatches += 1
            if first is None:
                first = f"{name}: filtration audit failed"
        # independent recomputation of the trajectory noise-to-smoothness ratio
        lbar_prev = cfg.l_hat_seed()
        total = 0.0
        for rec in res.records:
            total += (rec.v * cfg.d_tilde**2 + rec.delta_sq + rec.sigma_sq) / lbar_prev**2
            lbar_prev = rec.l_bar
        rn = total / len(res.records)
        ref = s["r_n_sq"]
        rel = abs(rn - ref) / max(abs(ref), 1e-300) if ref != rn else 0.0
        worst_rn = max(worst_rn, rel)
    passed = mismatches == 0 and worst_rn <= 1e-12
    return CriterionResult(
        "11 oracle-call identity and R_N^2 recomputation", passed,
        measured={"mismatches": mismatches, "worst_rn_rel_err": worst_rn},
        note=first or "",
    )


def criterion_12_baseline_sanity(ctx) -> CriterionResult:
    p = ctx.crit7_problem()
    cfg = ctx.crit7_cfg()
    base = ctx.runs7()[0]
    ga = np.mean([res.records[-1].gap for res in base.values()])
    # plain SGD at the same call budget: same 60 iterations with the matched
    # per-iteration batch size and the same initial stepsize scale
    g_sgd = []
    for s, res in base.items():
        batch = int(np.ceil(np.mean([r.m + 2 * r.n for r in res.records])))
        sgd = run_baseline(p, "plain_sgd", {"theta": cfg.eta1, "batch": batch},
                           {"iterations": 60}, seed=s)
        g_sgd.append(sgd.records[-1].gap)
    sgd_mean = float(np.mean(g_sgd))

    det = run_baseline(ctx.crit1_problem(), "deterministic_acfgm",
                       {"beta": 0.125, "eta1": 1.0}, {"iterations": 400}, seed=0)
    gaps = {r.k: r.gap for r in det.records}
    det_ratio = gaps[400] / gaps[200]
    passed = ga <= sgd_mean and det_ratio <= 0.35
    return CriterionResult(
        "12 baseline sanity (SGD at equal budget; deterministic ratio)", passed,
        measured={"mean_gap_acfgm": float(ga), "mean_gap_sgd": sgd_mean,
                  "det_gap400_over_gap200": float(det_ratio)},
    )


def criterion_13_replay_determinism(ctx, out_dir=None) -> CriterionResult:
    import tempfile

    p = ctx.crit7_problem()
    cfg = ctx.crit7_cfg()
    r1 = run(p, cfg, {"iterations": 60}, seed=0)
    r2 = run(p, cfg, {"iterations": 60}, seed=0)
    base = Path(out_dir) if out_dir else Path(tempfile.mkdtemp(prefix="acfgm-verify-"))
    base.mkdir(parents=True, exist_ok=True)
    p1 = base / "replay_a.csv"
    p2 = base / "replay_b.csv"
    records_to_csv(r1.records, p1)
    records_to_csv(r2.records, p2)
    identical = p1.read_bytes() == p2.read_bytes()
    return CriterionResult(
        "13 replay determinism (byte-identical CSV)", identical,
        measured={"bytes": p1.stat().st_size, "identical": identical},
    )


CRITERIA = [
    criterion_1_deterministic_rate,
    criterion_2a_stepsize_floor_fixed_horizon,
    criterion_2b_stepsize_floor_anchored,
    criterion_3_stepsize_caps,
    criterion_4_local_smoothness_bound,
    criterion_5_prox_equivalence,
    criterion_6_pairwise_unbiasedness,
    criterion_7_stochastic_rate,
    criterion_8_scaling_freeness,
    criterion_9_horizon_freeness,
    criterion_10_variance_coverage,
    criterion_11_oracle_accounting,
    criterion_12_baseline_sanity,
]


def run_acceptance(fast: bool = False, out_dir: str | None = None) -> list[CriterionResult]:
    """Run every acceptance criterion; returns one result per criterion."""
    ctx = AcceptanceContext(fast=fast)
    results = [fn(ctx) for fn in CRITERIA]
    results.append(criterion_13_replay_determinism(ctx, out_dir=out_dir))
    if out_dir:
        _write_artifacts(ctx, Path(out_dir))
    return results


def _write_artifacts(ctx, out: Path) -> None:
    from .figures import render_figures
    from .plotdata import emit_plotdata
    from .runner import write_summary_json

    out.mkdir(parents=True, exist_ok=True)
    runs, _ = ctx.runs7()
    res0 = runs[0]
    records_to_csv(res0.records, out / "crit7_seed0.csv")
    write_summary_json(res0.summary, out / "crit7_seed0_summary.json")
    by_label = {
        "fixed-horizon": res0.records,
        "anchored": ctx.runs9()[0].records,
        "deterministic": ctx.crit1_run()[0].records,
    }
    emit_plotdata(by_label, out / "plotdata")
    render_figures(by_label, out / "figures")
