"""Stochastic auto-conditioned fast gradient method for composite convex
optimization: problems, sampling streams, adaptive schedules, the optimizer
loop, baselines, and a verification harness."""

from .errors import BudgetExceededError, ContractViolationError, UnsupportedOperationError
from .optimizer import (
    BaselineKind,
    RunResult,
    TrajectoryRecord,
    evaluate_gap,
    report_summary,
    run,
    run_baseline,
)
from .problems import (
    Ball,
    Box,
    CompositeProblem,
    FullSpace,
    L1,
    LeastSquaresSum,
    LogisticSum,
    QuadraticSum,
    SetIndicator,
    Zero,
    exact_point_variance,
    exact_smoothness_variance,
    generate_problem,
    gradient_mapping,
    lasso_instance,
    least_squares_instance,
    load_problem,
    logistic_ball_instance,
    problem_from_json,
    problem_to_json,
    prox_step,
    quadratic_instance,
    sample_value_grad,
    save_problem,
)
from .sampling import BatchDraw, FiltrationLog, StreamKind, audit_filtration, draw_batch
from .schedule import (
    ScheduleConfig,
    ScheduleState,
    Variant,
    batch_size_main,
    batch_size_step,
    next_stepsize,
    stepsize_lower_bound_check,
    stepsize_upper_cap_violations,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
