"""Batch quantities that drive the adaptive stepsize and batch sizes.

All estimators consume a tagged batch of component indices and evaluate the
finite-sum oracle in a fixed reduction order.  The central quantity is the
local cocoercivity-based smoothness ||dG||^2 / (2 T), computed from two
separate fresh batches: one for the paired gradient difference dG and one for
the first-order Taylor remainder T.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError
from .problems import CompositeProblem, SmoothFiniteSum
from .sampling import BatchDraw, StreamKind

Array = np.ndarray


@dataclass
class BatchGradStats:
    """Mean gradient and value over one main-update batch."""

    mean_grad: Array
    mean_value: float
    batch: BatchDraw


@dataclass
class SmoothnessEstimate:
    delta_g_norm_sq: float
    taylor_remainder: float
    l_bar: float


@dataclass
class VarianceEstimates:
    """Inflated pairwise estimates of the local variance quantities."""

    sigma_hat_sq: float
    v_hat_sq: float
    delta_hat_sq: float
    pair_count: int
    inflation: float


def _require_kind(batch: BatchDraw, kind: StreamKind) -> None:
    if batch.kind != kind:
        raise ContractViolationError(
            f"batch kind {batch.kind.name} where {kind.name} is required"
        )


# fixed block size for batch reductions: keeps peak memory bounded on
# multi-million-sample batches while the summation order stays a pure
# function of the batch size (thread-count independent, replayable)
_CHUNK = 1 << 18


def _chunked_mean(eval_chunk, indices: Array):
    total = None
    m = indices.shape[0]
    for start in range(0, m, _CHUNK):
        part = eval_chunk(indices[start:start + _CHUNK])
        s = part.sum(axis=0)
        total = s if total is None else total + s
    return total / m


def batch_grad(problem: CompositeProblem, x: Array, batch: BatchDraw) -> BatchGradStats:
    """Arithmetic mean of sampled values and gradients at x."""
    if batch.size < 1:
        raise ContractViolationError("empty batch")
    f = problem.f
    mean_grad = _chunked_mean(lambda idx: f.batch_grads(x, idx), batch.indices)
    mean_val = _chunked_mean(lambda idx: f.batch_values(x, idx), batch.indices)
    return BatchGradStats(
        mean_grad=mean_grad, mean_value=float(mean_val), batch=batch
    )


def grad_diff(
    problem: CompositeProblem, x_prev: Array, x_curr: Array, batch: BatchDraw
) -> Array:
    """Paired stochastic gradient difference between consecutive iterates.

    Each sample is evaluated at both points, which is what keeps the
    difference's variance proportional to ||x_curr - x_prev||^2.
    """
    _require_kind(batch, StreamKind.STEP_GRAD_DIFF)
    f = problem.f
    return _chunked_mean(
        lambda idx: f.batch_grads(x_curr, idx) - f.batch_grads(x_prev, idx),
        batch.indices,
    )


def taylor_remainder(
    problem: CompositeProblem, x_prev: Array, x_curr: Array, batch: BatchDraw
) -> float:
    """Batch-mean first-order Taylor remainder, clamped below at zero.

    The remainder F(x_prev) - F(x_curr) - <G(x_curr), x_prev - x_curr> is
    nonnegative for convex components; tiny negative values are floating-point
    noise and are clamped.
    """
    _require_kind(batch, StreamKind.STEP_TAYLOR)
    raw = raw_taylor_remainder(problem.f, x_prev, x_curr, batch.indices)
    return max(raw, 0.0)


def raw_taylor_remainder(
    f: SmoothFiniteSum, x_prev: Array, x_curr: Array, indices: Array
) -> float:
    """Unclamped batch Taylor remainder (exposed for diagnostics/tests)."""
    diff = np.asarray(x_prev, dtype=np.float64) - np.asarray(x_curr, dtype=np.float64)

    def chunk(idx):
        return (f.batch_values(x_prev, idx) - f.batch_values(x_curr, idx)
                - f.batch_grads(x_curr, idx) @ diff)

    return float(_chunked_mean(chunk, indices))


def local_smoothness(
    delta_g: Array,
    taylor: float,
    prev: float = 0.0,
    scale: float = 1.0,
) -> float:
    """Local cocoercivity-based smoothness ||delta_g||^2 / (2 T).

    When both numerator and denominator vanish the 0/0 = 0 convention
    applies.  A zero denominator with a non-negligible numerator cannot occur
    on convex batches; if floating point produces it anyway, keep the previous
    estimate and warn rather than emit an infinite stepsize cap.
    """
    if taylor < 0:
        taylor = 0.0
    num = float(np.dot(delta_g, delta_g))
    if taylor == 0.0:
        if num <= 1e-24 * max(scale, 1.0) ** 2:
            return 0.0
        warnings.warn(
            "Taylor remainder underflowed while the gradient difference did not; "
            "keeping the previous smoothness estimate",
            RuntimeWarning,
        )
        return prev
    return num / (2.0 * taylor)


def smoothness_estimate(
    problem: CompositeProblem,
    x_prev: Array,
    x_curr: Array,
    grad_diff_batch: BatchDraw,
    taylor_batch: BatchDraw,
    prev_l_bar: float = 0.0,
) -> SmoothnessEstimate:
    """Convenience wrapper combining the two stepsize batches into l_bar."""
    dg = grad_diff(problem, x_prev, x_curr, grad_diff_batch)
    t = taylor_remainder(problem, x_prev, x_curr, taylor_batch)
    scale = max(1.0, float(np.linalg.norm(dg)))
    lb = local_smoothness(dg, t, prev=prev_l_bar, scale=scale)
    return SmoothnessEstimate(
        delta_g_norm_sq=float(np.dot(dg, dg)), taylor_remainder=t, l_bar=lb
    )


def _pairwise_mean_sq_diff(values: Array) -> float:
    """(1/2r) sum over pairs (2i-1, 2i) of squared differences.

    `values` holds per-sample scalars or vectors, pairs laid out
    consecutively; the estimator is unbiased for the single-draw variance.
    """
    if values.shape[0] % 2 != 0:
        raise ContractViolationError("pairwise estimator needs an even batch")
    d = values[0::2] - values[1::2]
    return float(np.sum(d * d)) / (2.0 * d.shape[0])


def pairwise_grad_variance(
    f: SmoothFiniteSum, x: Array, indices: Array, inflation: float = 1.0
) -> float:
    """Inflated pairwise estimate of the single-draw gradient variance at x."""
    grads = f.batch_grads(x, indices)
    return inflation * _pairwise_mean_sq_diff(grads)


def pairwise_smoothness_variance(
    f: SmoothFiniteSum, x_prev: Array, x_curr: Array, indices: Array, inflation: float = 1.0
) -> float:
    """Inflated pairwise estimate of the variance of single-sample local
    smoothness values at the pair (x_prev, x_curr)."""
    if np.array_equal(x_prev, x_curr):
        return 0.0
    ell = f.smoothness_values(x_prev, x_curr, indices)
    est = _pairwise_mean_sq_diff(ell)
    # same rounding-noise snap as the exact backdoor: analytically identical
    # per-sample smoothness values must report zero variance
    scale = float(np.max(np.abs(ell))) if ell.size else 0.0
    if est <= (1e-12 * scale) ** 2:
        return 0.0
    return inflation * est


def pairwise_variances(
    problem: CompositeProblem,
    x: Array,
    x_prev: Array | None,
    var_main: BatchDraw,
    var_grad_diff: BatchDraw | None,
    var_taylor: BatchDraw,
    inflation: float = 1.0,
) -> VarianceEstimates:
    """All three pairwise variance estimates from their dedicated batches.

    sigma_hat^2 comes from the Taylor-slot batch at x, delta_hat^2 from the
    main-slot batch at x, and v_hat^2 from the grad-diff-slot batch through
    single-sample smoothness values at (x_prev, x); the latter requires
    x_prev and is 0 when it is absent.
    """
    if inflation < 1.0:
        raise ContractViolationError("inflation factor must be >= 1")
    _require_kind(var_main, StreamKind.VAR_MAIN)
    _require_kind(var_taylor, StreamKind.VAR_TAYLOR)
    f = problem.f
    sigma_hat = pairwise_grad_variance(f, x, var_taylor.indices, inflation)
    delta_hat = pairwise_grad_variance(f, x, var_main.indices, inflation)
    v_hat = 0.0
    pair_count = var_main.size // 2
    if var_grad_diff is not None:
        _require_kind(var_grad_diff, StreamKind.VAR_GRAD_DIFF)
        if x_prev is None:
            raise ContractViolationError("v_hat needs the previous iterate")
        v_hat = pairwise_smoothness_variance(f, x_prev, x, var_grad_diff.indices, inflation)
    return VarianceEstimates(
        sigma_hat_sq=sigma_hat,
        v_hat_sq=v_hat,
        delta_hat_sq=delta_hat,
        pair_count=pair_count,
        inflation=inflation,
    )
