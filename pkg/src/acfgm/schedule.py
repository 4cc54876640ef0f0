"""Stepsize recursions and mini-batch sizing across the four regimes.

Variant A fixes the horizon N in advance; B is horizon-free via the anchored
regularizer; C layers pairwise variance estimation on B; HP keeps B's
geometry but swaps in confidence-dependent constants for the batch sizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .errors import BudgetExceededError, ContractViolationError


class Variant(Enum):
    A_FIXED_HORIZON = "a"
    B_HORIZON_FREE = "b"
    C_VARIANCE_ADAPTIVE = "c"
    HP_HIGH_PROBABILITY = "hp"


_ANCHORED = {
    Variant.B_HORIZON_FREE,
    Variant.C_VARIANCE_ADAPTIVE,
    Variant.HP_HIGH_PROBABILITY,
}

DEFAULT_BATCH_CAP = 10_000_000


@dataclass
class ScheduleConfig:
    """Variant selector plus every tunable the schedule formulas consume."""

    variant: Variant = Variant.A_FIXED_HORIZON
    beta: float = 0.125
    eta1: float = 1.0
    d_tilde: float = 1.0
    n: int | None = None
    v0: float = 0.0
    lam: float = 1.0            # confidence parameter, HP only
    inflation: float = 1.5      # variance-estimate inflation, C only
    p_n: float = 0.05           # target failure probability for coverage, C only
    subgauss_proxy: float = 1.0  # scales exact variances into HP proxies
    batch_cap: int = DEFAULT_BATCH_CAP

    def __post_init__(self):
        if isinstance(self.variant, str):
            self.variant = Variant(self.variant.lower())
        self.validate()

    def validate(self) -> None:
        if not self.eta1 > 0:
            raise ContractViolationError("schedule.eta1: must be positive")
        if not self.d_tilde > 0:
            raise ContractViolationError("schedule.d_tilde: must be positive")
        if self.variant is Variant.A_FIXED_HORIZON:
            if not 0 < self.beta <= 0.125:
                raise ContractViolationError(
                    "schedule.beta: variant A requires beta in (0, 1/8]"
                )
            if self.n is None:
                raise ContractViolationError("schedule.n: variant A requires the horizon N")
        else:
            if not 0 < self.beta < 0.125:
                raise ContractViolationError(
                    "schedule.beta: variants B/C/HP require beta in (0, 1/8)"
                )
        if self.n is not None and self.n < 1:
            raise ContractViolationError("schedule.n: must be a positive integer")
        if self.v0 < 0:
            raise ContractViolationError("schedule.v0: must be nonnegative")
        if self.inflation < 1.0:
            raise ContractViolationError("schedule.inflation: must be >= 1")
        if not 0 < self.p_n < 1:
            raise ContractViolationError("schedule.p_n: must lie in (0, 1)")
        if self.variant is Variant.HP_HIGH_PROBABILITY and not self.lam > 0:
            raise ContractViolationError("schedule.lambda: must be positive")
        if self.batch_cap < 1:
            raise ContractViolationError("schedule.batch_cap: must be positive")

    @property
    def anchored(self) -> bool:
        return self.variant in _ANCHORED

    def constants(self) -> tuple[float, float]:
        """Universal constants (c, c_tilde) of the batch-size rules."""
        if self.variant is Variant.A_FIXED_HORIZON:
            return 73.0, 1728.0
        if self.variant is Variant.HP_HIGH_PROBABILITY:
            lam = self.lam
            return 9.0 * (1.0 + lam) + 729.0 * lam * lam, 988.0 * (1.0 + lam)
        return 8.0, 745.0

    def gamma(self, k: int) -> float:
        return 1.0 / k if self.anchored else 0.0

    def tau(self, k: int) -> float:
        if self.anchored:
            return (k + 2 - self.beta) / 2.0
        return k / 2.0

    def beta_k(self, k: int) -> float:
        return 0.0 if k == 1 else self.beta

    def l_hat_seed(self) -> float:
        """Initial value of the running trajectory smoothness max."""
        if self.variant is Variant.A_FIXED_HORIZON:
            return 1.0 / (32.0 * (1.0 - self.beta) * self.eta1)
        return 1.0 / (64.0 * (1.0 - self.beta) * self.eta1)

    def pair_count(self, k: int) -> int:
        """Auxiliary pairs per variance batch at iteration k (variant C)."""
        if self.n is not None:
            return math.ceil(8.0 * math.log(self.n / self.p_n))
        return math.ceil(8.0 * math.log((k + 1) ** 2 / self.p_n))


@dataclass
class ScheduleState:
    """Live schedule quantities, advanced once per iteration by the loop."""

    cfg: ScheduleConfig
    k: int = 0
    eta: float = 0.0
    l_bar_prev: float = 0.0
    v_max_running: float = 0.0
    l_hat_running: float = 0.0
    etas: list[float] = field(default_factory=list)
    l_bars: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.eta = self.cfg.eta1
        self.v_max_running = self.cfg.v0
        self.l_hat_running = self.cfg.l_hat_seed()

    def observe_l_bar(self, l_bar: float) -> None:
        self.l_bar_prev = l_bar
        self.l_bars.append(l_bar)
        self.l_hat_running = max(self.l_hat_running, l_bar)

    def observe_v(self, v: float) -> None:
        self.v_max_running = max(self.v_max_running, v)


def next_stepsize(cfg: ScheduleConfig, k: int, eta_prev: float, l_bar_prev: float) -> float:
    """Stepsize eta_k for k >= 2 from eta_{k-1} and the smoothness estimate.

    A zero l_bar means the curvature cap is dropped (treated as +inf).  The
    fixed-horizon and anchored recursions differ both at k = 2 and in the
    growth ratio.
    """
    if k < 2:
        raise ContractViolationError("stepsize recursion starts at k = 2")
    if eta_prev <= 0 or l_bar_prev < 0:
        raise ContractViolationError("invalid schedule state")
    beta = cfg.beta
    if cfg.anchored:
        if k == 2:
            cands = [2.0 * (1.0 - beta) * cfg.eta1 / (3.0 - beta)]
            if l_bar_prev > 0:
                cands.append(1.0 / (16.0 * l_bar_prev))
        else:
            cands = [(k - 1) * (k + 2 - beta) * eta_prev / (k * k)]
            if l_bar_prev > 0:
                cands.append((k - 1) / (16.0 * l_bar_prev))
    else:
        if k == 2:
            cands = [2.0 * (1.0 - beta) * cfg.eta1, 2.0 * cfg.eta1 / beta]
            if l_bar_prev > 0:
                cands.append(1.0 / (16.0 * l_bar_prev))
        else:
            cands = [k * eta_prev / (k - 1)]
            if l_bar_prev > 0:
                cands.append((k - 1) / (16.0 * l_bar_prev))
    return min(cands)


def _ceil_capped(value: float, cap: int, what: str, k: int) -> int:
    size = max(1, math.ceil(value))
    if size > cap:
        raise BudgetExceededError(
            f"{what} at iteration {k} would need {size} samples, above the cap {cap}; "
            "increase d_tilde or the batch cap"
        )
    return size


def _horizon_factor(cfg: ScheduleConfig, k: int) -> float:
    if cfg.variant is Variant.A_FIXED_HORIZON:
        return cfg.n + 2
    return k + 2


def batch_size_main(cfg: ScheduleConfig, eta_k: float, sigma_prev_sq: float, k: int) -> int:
    """Main-update batch m_k."""
    if eta_k <= 0 or sigma_prev_sq < 0:
        raise ContractViolationError("invalid batch-size inputs")
    c, _ = cfg.constants()
    h = _horizon_factor(cfg, k)
    val = h * eta_k * eta_k / (cfg.beta**2) * c * sigma_prev_sq / (cfg.d_tilde**2)
    return _ceil_capped(val, cfg.batch_cap, "main batch m_k", k)


def batch_size_step(
    cfg: ScheduleConfig,
    eta_k: float,
    v_max_prev: float,
    sigma_prev_sq: float,
    delta_k_sq: float,
    k: int,
) -> int:
    """Stepsize-estimation batch n_k (shared by the grad-diff and Taylor draws)."""
    if eta_k <= 0 or min(v_max_prev, sigma_prev_sq, delta_k_sq) < 0:
        raise ContractViolationError("invalid batch-size inputs")
    c, c_tilde = cfg.constants()
    h = _horizon_factor(cfg, k)
    p = 3 if cfg.variant is Variant.A_FIXED_HORIZON else 4
    term_v = c_tilde * h * eta_k * eta_k * v_max_prev / (cfg.beta**p)
    term_sig = (
        h * eta_k * eta_k / (cfg.beta**2)
        * c * (sigma_prev_sq + delta_k_sq) / (cfg.d_tilde**2)
    )
    return _ceil_capped(max(term_v, term_sig), cfg.batch_cap, "stepsize batch n_k", k)


# ---------------------------------------------------------------------------
# Stepsize floor checks
# ---------------------------------------------------------------------------


@dataclass
class FloorViolation:
    k: int
    eta: float
    bound: float


def stepsize_lower_bound_check(
    cfg: ScheduleConfig,
    etas: list[float],
    l_bars: list[float],
    mode: str = "published",
    rel_slack: float = 1e-12,
) -> list[FloorViolation]:
    """Check eta_k against a trajectory floor built from the running max of
    the smoothness estimates (seeded per variant).

    mode="published" uses the floor k/(32 Lhat_{k-1}) for the fixed-horizon
    variant and (15/16) k/(32 Lhat_{k-1}) for the anchored ones.  The
    anchored form is NOT implied by the anchored stepsize recursion: on a
    constant-curvature trajectory the growth branch multiplies eta by
    (k-1)(k+2-beta)/k^2 per step, which trails the floor's k/(k-1) growth by
    a factor (k-1)^2(k+2-beta)/k^3 < 1, so violations accumulate (first at
    k=3).  mode="provable" instead tracks the floor the recursion actually
    guarantees: q_2 = min(2, 1/(3-beta)) and
    q_k = min(2(k-1), (k-1)(k+2-beta) q_{k-1}/k^2), checking
    eta_k >= q_k/(32 Lhat_{k-1}).  For the fixed-horizon variant both modes
    coincide (q_k = k).

    `etas[i]` is eta_{i+1}; `l_bars[i]` is the smoothness estimate of
    iteration i+1.  Returns the list of violations (empty means pass).
    """
    if mode not in ("published", "provable"):
        raise ContractViolationError(f"unknown check mode {mode!r}")
    violations: list[FloorViolation] = []
    l_hat = cfg.l_hat_seed()
    anchored = cfg.anchored
    beta = cfg.beta
    q = None
    for i in range(1, len(etas)):
        k = i + 1
        l_hat = max(l_hat, l_bars[i - 1])
        if not anchored:
            factor = float(k)
        elif mode == "published":
            factor = (15.0 / 16.0) * k
        else:
            if q is None:
                q = min(2.0, 1.0 / (3.0 - beta))
            else:
                q = min(2.0 * (k - 1), (k - 1) * (k + 2 - beta) * q / (k * k))
            factor = q
        bound = factor / (32.0 * l_hat)
        if etas[i] < bound * (1.0 - rel_slack):
            violations.append(FloorViolation(k=k, eta=etas[i], bound=bound))
    return violations


def stepsize_upper_cap_violations(
    cfg: ScheduleConfig,
    etas: list[float],
    l_bars: list[float],
    rel_slack: float = 1e-12,
) -> list[str]:
    """Check the monotone growth cap and the curvature cap along a trajectory.

    Growth: eta_{k+1} <= (k+1) eta_k / k (fixed horizon) or
    eta_{k+1} <= k (k+3-beta) eta_k / (k+1)^2 (anchored), with the k = 1 case
    taken from the respective eta_2 definition.  Curvature:
    eta_{k+1} * l_bar_k <= k/16 whenever l_bar_k > 0.
    """
    beta = cfg.beta
    issues: list[str] = []
    for i in range(1, len(etas)):
        k = i  # etas[i] is eta_{k+1}
        eta_next, eta_k = etas[i], etas[i - 1]
        if cfg.anchored:
            if k == 1:
                cap = 2.0 * (1.0 - beta) * eta_k / (3.0 - beta)
            else:
                cap = k * (k + 3 - beta) * eta_k / ((k + 1) ** 2)
        else:
            if k == 1:
                cap = 2.0 * (1.0 - beta) * eta_k
            else:
                cap = (k + 1) * eta_k / k
        if eta_next > cap * (1.0 + rel_slack):
            issues.append(f"growth cap broken at k={k + 1}: {eta_next} > {cap}")
        l_bar_k = l_bars[i - 1]
        if l_bar_k > 0 and eta_next * l_bar_k > (k / 16.0) * (1.0 + rel_slack):
            issues.append(
                f"curvature cap broken at k={k + 1}: eta*l_bar = {eta_next * l_bar_k} > {k / 16.0}"
            )
    return issues
