"""Composite convex problems with a finite-sum stochastic oracle.

A problem is Psi = f + h over a closed convex set X, where f is a uniform
average of M smooth convex components exposed through a sampling oracle,
and h is a prox-friendly term (zero, l1, or a set indicator).  Synthetic
instances carry their exact optimum plus exact variance/smoothness
backdoors so that verification code can compare estimators against ground
truth.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractViolationError, UnsupportedOperationError

Array = np.ndarray


def _as_vector(x, dim: int | None = None) -> Array:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ContractViolationError(f"expected a 1-d vector, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise ContractViolationError(f"expected dim {dim}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ContractViolationError("vector has non-finite entries")
    return v


# ---------------------------------------------------------------------------
# Feasible sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FullSpace:
    """X = R^n."""

    def project(self, x: Array) -> Array:
        return x

    def contains(self, x: Array, tol: float = 1e-12) -> bool:
        return True


@dataclass(frozen=True)
class Box:
    """Coordinatewise bounds lower <= x <= upper."""

    lower: Array
    upper: Array

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=np.float64)
        hi = np.asarray(self.upper, dtype=np.float64)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ContractViolationError("box requires lower <= upper coordinatewise")

    def project(self, x: Array) -> Array:
        return np.clip(x, self.lower, self.upper)

    def contains(self, x: Array, tol: float = 1e-12) -> bool:
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))


@dataclass(frozen=True)
class Ball:
    """Euclidean ball of given center and radius."""

    center: Array
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))
        if not self.radius > 0:
            raise ContractViolationError("ball radius must be positive")

    def project(self, x: Array) -> Array:
        d = x - self.center
        nrm = float(np.linalg.norm(d))
        if nrm <= self.radius:
            return x
        return self.center + d * (self.radius / nrm)

    def contains(self, x: Array, tol: float = 1e-12) -> bool:
        return float(np.linalg.norm(x - self.center)) <= self.radius * (1 + tol) + tol


FeasibleSet = FullSpace | Box | Ball


# ---------------------------------------------------------------------------
# Prox terms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Zero:
    """h = 0."""

    def value(self, x: Array) -> float:
        return 0.0


@dataclass(frozen=True)
class L1:
    """h(x) = weight * ||x||_1."""

    weight: float

    def __post_init__(self):
        if self.weight < 0:
            raise ContractViolationError("l1 weight must be nonnegative")

    def value(self, x: Array) -> float:
        return self.weight * float(np.sum(np.abs(x)))


@dataclass(frozen=True)
class SetIndicator:
    """h = indicator of a convex set (0 inside, +inf outside)."""

    set: FeasibleSet

    def value(self, x: Array) -> float:
        return 0.0 if self.set.contains(x, tol=1e-9) else float("inf")


ProxTerm = Zero | L1 | SetIndicator


def min_norm_subgradient(h: ProxTerm, x: Array) -> Array:
    """Minimum-norm element of the subdifferential of h at x.

    For l1 that is weight*sign(x) with zeros kept at zero; for the zero term
    and set indicators (at feasible points) it is the zero vector.
    """
    if isinstance(h, L1):
        return h.weight * np.sign(x)
    return np.zeros_like(np.asarray(x, dtype=np.float64))


def _soft_threshold(x: Array, t: float) -> Array:
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def _variance_with_rounding_floor(values: Array) -> float:
    """Population variance, snapped to exact zero below the rounding floor.

    Per-component local smoothness values that are analytically identical
    still differ by ~eps relative after evaluation through different
    centers; without the snap a "zero variance" problem reports ~1e-30
    instead of 0 and domination checks against it become coin flips.
    """
    var = float(np.mean((values - np.mean(values)) ** 2))
    scale = float(np.max(np.abs(values))) if values.size else 0.0
    if var <= (1e-12 * scale) ** 2:
        return 0.0
    return var


# ---------------------------------------------------------------------------
# Finite sums
# ---------------------------------------------------------------------------


class SmoothFiniteSum:
    """Uniform average of M smooth convex components.

    Subclasses implement the vectorized per-component evaluations; everything
    else (full gradients, exact variances) is derived here.  Batch reductions
    use numpy's fixed left-to-right pairwise order, so results do not depend
    on thread count.
    """

    dim: int

    @property
    def n_components(self) -> int:
        raise NotImplementedError

    def batch_values(self, x: Array, idx: Array) -> Array:
        raise NotImplementedError

    def batch_grads(self, x: Array, idx: Array) -> Array:
        raise NotImplementedError

    def component_smoothness(self) -> Array:
        """Exact per-component gradient Lipschitz constants (verification only)."""
        raise NotImplementedError

    # -- derived -----------------------------------------------------------

    def value_grad(self, x: Array, index: int) -> tuple[float, Array]:
        if not 0 <= index < self.n_components:
            raise ContractViolationError(
                f"component index {index} out of range [0, {self.n_components})"
            )
        x = _as_vector(x, self.dim)
        idx = np.asarray([index], dtype=np.int64)
        return float(self.batch_values(x, idx)[0]), self.batch_grads(x, idx)[0]

    def _all_idx(self) -> Array:
        return np.arange(self.n_components, dtype=np.int64)

    def full_value(self, x: Array) -> float:
        return float(np.mean(self.batch_values(x, self._all_idx())))

    def full_grad(self, x: Array) -> Array:
        return self.batch_grads(x, self._all_idx()).mean(axis=0)

    @property
    def max_smoothness(self) -> float:
        return float(np.max(self.component_smoothness()))

    def point_variance(self, x: Array) -> float:
        """Exact single-draw gradient variance (1/M) sum_i ||G_i - grad f||^2."""
        g = self.batch_grads(x, self._all_idx())
        d = g - g.mean(axis=0)
        return float(np.mean(np.sum(d * d, axis=1)))

    def smoothness_values(self, x_prev: Array, x_curr: Array, idx: Array) -> Array:
        """Per-sample local smoothness l_i = 2*[F_i(x_prev) - F_i(x_curr)
        - <G_i(x_curr), x_prev - x_curr>] / ||x_prev - x_curr||^2.

        The generic path evaluates the oracle at both points; subclasses with
        a cancellation-free form (quadratics) override it, since the generic
        difference loses all precision once the points are close.
        """
        diff = np.asarray(x_prev, dtype=np.float64) - np.asarray(x_curr, dtype=np.float64)
        dsq = float(np.dot(diff, diff))
        if dsq == 0.0:
            return np.zeros(len(idx))
        fp = self.batch_values(x_prev, idx)
        fc = self.batch_values(x_curr, idx)
        gc = self.batch_grads(x_curr, idx)
        return 2.0 * (fp - fc - gc @ diff) / dsq

    def smoothness_variance(self, x_prev: Array, x_curr: Array) -> float:
        """Exact population variance of the per-component local smoothness
        values at the pair, with coincident points giving 0 by convention."""
        if np.array_equal(x_prev, x_curr):
            return 0.0
        ell = self.smoothness_values(x_prev, x_curr, self._all_idx())
        return _variance_with_rounding_floor(ell)


class QuadraticSum(SmoothFiniteSum):
    """Components F_i(x) = 0.5 (x-u_i)' H_i (x-u_i) + d_i.

    The centered storage keeps values exactly nonnegative when d_i = 0, so
    optimality gaps on noise-free instances remain meaningful down to the
    underflow threshold instead of dying at ~1e-16 from cancellation.
    `curvatures` may be a single shared (n, n) matrix or a stack (M, n, n).
    """

    def __init__(self, curvatures: Array, centers: Array, offsets: Array | None = None):
        H = np.asarray(curvatures, dtype=np.float64)
        U = np.asarray(centers, dtype=np.float64)
        if U.ndim != 2:
            raise ContractViolationError("centers must have shape (M, n)")
        m, n = U.shape
        if H.ndim == 2:
            if H.shape != (n, n):
                raise ContractViolationError("shared curvature must be (n, n)")
        elif H.ndim != 3 or H.shape != (m, n, n):
            raise ContractViolationError("curvatures must be (n, n) or (M, n, n)")
        self._H = H
        self._U = U
        self._D = np.zeros(m) if offsets is None else np.asarray(offsets, dtype=np.float64)
        self.dim = n
        self._m = m
        self._smooth_cache: Array | None = None

    @property
    def n_components(self) -> int:
        return self._m

    @property
    def shared_curvature(self) -> bool:
        return self._H.ndim == 2

    def batch_values(self, x: Array, idx: Array) -> Array:
        r = x[None, :] - self._U[idx]
        if self.shared_curvature:
            hr = r @ self._H
        else:
            hr = np.einsum("mij,mj->mi", self._H[idx], r)
        return 0.5 * np.sum(r * hr, axis=1) + self._D[idx]

    def batch_grads(self, x: Array, idx: Array) -> Array:
        r = x[None, :] - self._U[idx]
        if self.shared_curvature:
            return r @ self._H
        return np.einsum("mij,mj->mi", self._H[idx], r)

    def component_smoothness(self) -> Array:
        if self._smooth_cache is None:
            if self.shared_curvature:
                lam = float(np.max(np.linalg.eigvalsh(self._H)))
                self._smooth_cache = np.full(self._m, lam)
            else:
                self._smooth_cache = np.array(
                    [float(np.max(np.linalg.eigvalsh(h))) for h in self._H]
                )
        return self._smooth_cache

    def smoothness_values(self, x_prev: Array, x_curr: Array, idx: Array) -> Array:
        # exact for quadratics: l_i = d'H_i d / ||d||^2, no cancellation
        diff = np.asarray(x_prev, dtype=np.float64) - np.asarray(x_curr, dtype=np.float64)
        dsq = float(np.dot(diff, diff))
        if dsq == 0.0:
            return np.zeros(len(idx))
        if self.shared_curvature:
            q = float(diff @ (self._H @ diff))
            return np.full(len(idx), q / dsq)
        hd = np.einsum("mij,j->mi", self._H[idx], diff)
        return (hd @ diff) / dsq

    def mean_curvature(self) -> Array:
        if self.shared_curvature:
            return self._H
        return self._H.mean(axis=0)


class LeastSquaresSum(SmoothFiniteSum):
    """Components F_i(x) = 0.5 (a_i' x - b_i)^2."""

    def __init__(self, rows: Array, rhs: Array):
        A = np.asarray(rows, dtype=np.float64)
        b = np.asarray(rhs, dtype=np.float64)
        if A.ndim != 2 or b.shape != (A.shape[0],):
            raise ContractViolationError("rows must be (M, n) with rhs of length M")
        self._A = A
        self._b = b
        self.dim = A.shape[1]

    @property
    def n_components(self) -> int:
        return self._A.shape[0]

    def batch_values(self, x: Array, idx: Array) -> Array:
        r = self._A[idx] @ x - self._b[idx]
        return 0.5 * r * r

    def batch_grads(self, x: Array, idx: Array) -> Array:
        r = self._A[idx] @ x - self._b[idx]
        return self._A[idx] * r[:, None]

    def component_smoothness(self) -> Array:
        return np.sum(self._A * self._A, axis=1)


class LogisticSum(SmoothFiniteSum):
    """Components F_i(x) = log(1 + exp(-y_i a_i' x)) with labels y_i in {-1, +1}."""

    def __init__(self, features: Array, labels: Array):
        A = np.asarray(features, dtype=np.float64)
        y = np.asarray(labels, dtype=np.float64)
        if A.ndim != 2 or y.shape != (A.shape[0],):
            raise ContractViolationError("features must be (M, n) with labels of length M")
        if not np.all(np.abs(y) == 1.0):
            raise ContractViolationError("labels must be +/-1")
        self._A = A
        self._y = y
        self.dim = A.shape[1]

    @property
    def n_components(self) -> int:
        return self._A.shape[0]

    def batch_values(self, x: Array, idx: Array) -> Array:
        t = -self._y[idx] * (self._A[idx] @ x)
        # log(1 + e^t), stable for both signs of t
        return np.logaddexp(0.0, t)

    def batch_grads(self, x: Array, idx: Array) -> Array:
        t = -self._y[idx] * (self._A[idx] @ x)
        s = 1.0 / (1.0 + np.exp(-t))  # sigmoid(t)
        return self._A[idx] * (-self._y[idx] * s)[:, None]

    def component_smoothness(self) -> Array:
        return 0.25 * np.sum(self._A * self._A, axis=1)


# ---------------------------------------------------------------------------
# Composite problem
# ---------------------------------------------------------------------------


@dataclass
class CompositeProblem:
    """Psi = f + h over X, with optional exact optimum for verification."""

    f: SmoothFiniteSum
    h: ProxTerm
    set: FeasibleSet
    x0: Array
    optimum: tuple[Array, float] | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x0 = _as_vector(self.x0, self.f.dim)
        if not self.set.contains(self.x0, tol=1e-9):
            raise ContractViolationError("x0 must lie in the feasible set")
        if self.optimum is not None:
            xs, ps = self.optimum
            self.optimum = (_as_vector(xs, self.f.dim), float(ps))

    @property
    def dim(self) -> int:
        return self.f.dim

    def psi(self, x: Array) -> float:
        return self.f.full_value(x) + self.h.value(x)

    @property
    def scale(self) -> float:
        """Magnitude reference for absolute tolerances."""
        return max(1.0, abs(self.f.full_value(self.x0) + self.h.value(self.x0)))

    def evaluate_gap(self, x: Array) -> float:
        """Psi(x) - Psi*, verification-side (full finite sum, not oracle-counted)."""
        if self.optimum is None:
            raise UnsupportedOperationError("problem has no recorded optimum")
        return self.psi(x) - self.optimum[1]

    def initial_subgradient(self) -> Array:
        """Minimum-norm s0 in the subdifferential of h at x0."""
        return min_norm_subgradient(self.h, self.x0)


def sample_value_grad(problem: CompositeProblem, x: Array, index: int) -> tuple[float, Array]:
    """Stochastic oracle: exact value and gradient of component `index` at x."""
    return problem.f.value_grad(x, index)


def exact_point_variance(problem: CompositeProblem, x: Array) -> float:
    return problem.f.point_variance(_as_vector(x, problem.dim))


def exact_smoothness_variance(problem: CompositeProblem, x_prev: Array, x_curr: Array) -> float:
    return problem.f.smoothness_variance(
        _as_vector(x_prev, problem.dim), _as_vector(x_curr, problem.dim)
    )


# ---------------------------------------------------------------------------
# Prox machinery
# ---------------------------------------------------------------------------


def _prox_point(h: ProxTerm, X: FeasibleSet, c: Array, eta_eff: float) -> Array:
    """argmin_{z in X} h(z) + ||z - c||^2 / (2 * eta_eff), by closed form where
    one exists, otherwise by an exact 1-d dual search or Dykstra alternation."""
    if isinstance(h, Zero):
        return X.project(c)
    if isinstance(h, L1):
        t = eta_eff * h.weight
        if isinstance(X, FullSpace):
            return _soft_threshold(c, t)
        if isinstance(X, Box):
            # soft-threshold then clip: exact because both pieces are
            # coordinatewise separable
            return X.project(_soft_threshold(c, t))
        return _l1_ball_prox(c, h.weight, X, eta_eff)
    if isinstance(h, SetIndicator):
        S = h.set
        if isinstance(X, FullSpace):
            return S.project(c)
        if isinstance(S, Box) and isinstance(X, Box):
            inter = Box(np.maximum(S.lower, X.lower), np.minimum(S.upper, X.upper))
            return inter.project(c)
        return _dykstra_projection(c, [S, X])
    raise ContractViolationError(f"unknown prox term {h!r}")


def _l1_ball_prox(c: Array, weight: float, ball: Ball, eta_eff: float) -> Array:
    """Prox of weight*||.||_1 over a ball, via bisection on the constraint
    multiplier (no simple closed form exists for this pairing)."""
    mu = 1.0 / eta_eff

    def candidate(lam: float) -> Array:
        denom = mu + lam
        center = (mu * c + lam * ball.center) / denom
        return _soft_threshold(center, weight / denom)

    z0 = candidate(0.0)
    if float(np.linalg.norm(z0 - ball.center)) <= ball.radius:
        return z0
    lo, hi = 0.0, max(mu, 1.0)
    while float(np.linalg.norm(candidate(hi) - ball.center)) > ball.radius:
        hi *= 2.0
        if hi > 1e300:  # pragma: no cover - defensive
            break
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if float(np.linalg.norm(candidate(mid) - ball.center)) > ball.radius:
            lo = mid
        else:
            hi = mid
    return candidate(hi)


def _dykstra_projection(c: Array, sets: list, iters: int = 4000) -> Array:
    """Projection onto an intersection of convex sets by Dykstra's algorithm."""
    x = c.copy()
    p = [np.zeros_like(c) for _ in sets]
    for _ in range(iters):
        x_before = x
        for j, s in enumerate(sets):
            y = x + p[j]
            x = s.project(y)
            p[j] = y - x
        if float(np.linalg.norm(x - x_before)) < 1e-15:
            break
    return x


def prox_step(
    problem: CompositeProblem,
    g: Array,
    y: Array,
    y0: Array,
    eta: float,
    gamma: float = 0.0,
) -> Array:
    """Anchored prox update used by the optimizer's search-point step.

    Returns the unique minimizer over X of

        <g, z> + h(z) + ||y - z||^2 / (2 eta) + gamma * ||y0 - z||^2 / (2 eta).

    The two quadratics are combined analytically into a single one with
    center c = (y + gamma*y0 - eta*g) / (1 + gamma) and effective stepsize
    eta / (1 + gamma), after which the prox of h (plus projection) applies.
    With gamma = 0 the result does not depend on y0.
    """
    if not eta > 0:
        raise ContractViolationError("eta must be positive")
    if gamma < 0:
        raise ContractViolationError("gamma must be nonnegative")
    g = _as_vector(g, problem.dim)
    y = _as_vector(y, problem.dim)
    if gamma > 0:
        y0 = _as_vector(y0, problem.dim)
        c = (y + gamma * y0 - eta * g) / (1.0 + gamma)
    else:
        c = y - eta * g
    return _prox_point(problem.h, problem.set, c, eta / (1.0 + gamma))


def gradient_mapping(
    problem: CompositeProblem, u: Array, y: Array, c: float
) -> tuple[Array, Array]:
    """Composite stationarity measure at u along the direction y.

    p minimizes <y, x> + h(x) + ||x - u||^2 / (2c) over X; the reduced
    gradient (u - p) / c vanishes exactly at constrained optima.
    """
    if not c > 0:
        raise ContractViolationError("c must be positive")
    p = prox_step(problem, g=y, y=u, y0=u, eta=c, gamma=0.0)
    return p, (u - p) / c


# ---------------------------------------------------------------------------
# Independent numeric subproblem oracle (verification only)
# ---------------------------------------------------------------------------


def _golden_section(compare, lo: float, hi: float, tol: float = 1e-13) -> float:
    """Golden-section search driven by a pairwise comparator.

    `compare(t1, t2)` must return True when the objective at t1 is strictly
    below the objective at t2.  Using a comparator instead of raw values lets
    callers compute the value difference in cancellation-free form, which is
    what pushes the attainable precision from ~sqrt(eps) down to ~eps.
    """
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c1 = b - invphi * (b - a)
    c2 = a + invphi * (b - a)
    while (b - a) > tol:
        if compare(c1, c2):
            b, c2 = c2, c1
            c1 = b - invphi * (b - a)
        else:
            a, c1 = c1, c2
            c2 = a + invphi * (b - a)
    return 0.5 * (a + b)


def _quadratic_l1_comparator(ci: float, eta_eff: float, l1w: float):
    """Stable objective-difference comparator for
    l1w*|t| + (t - ci)^2 / (2 eta_eff)."""

    def compare(t1: float, t2: float) -> bool:
        d = l1w * (abs(t1) - abs(t2)) + (t1 - t2) * (t1 + t2 - 2.0 * ci) / (2.0 * eta_eff)
        return d < 0.0

    return compare


def prox_oracle_numeric(
    h: ProxTerm, X: FeasibleSet, c: Array, eta_eff: float
) -> Array:
    """Slow reference solver for argmin_{z in X} h(z) + ||z-c||^2/(2 eta_eff).

    Deliberately avoids the closed forms used by `prox_step`: separable cases
    run a per-coordinate golden-section search, ball-constrained smooth cases
    run a damped projected-gradient iteration, and l1-over-ball runs proximal
    Dykstra splitting.  Accurate to ~1e-10, used by the prox equivalence
    tests.
    """
    c = np.asarray(c, dtype=np.float64)
    n = c.shape[0]
    sets: list = []
    if isinstance(h, SetIndicator):
        sets.append(h.set)
    if not isinstance(X, FullSpace):
        sets.append(X)
    l1w = h.weight if isinstance(h, L1) else 0.0

    separable = all(isinstance(s, Box) for s in sets)
    if separable:
        lo = np.full(n, -np.inf)
        hi = np.full(n, np.inf)
        for s in sets:
            lo = np.maximum(lo, s.lower)
            hi = np.minimum(hi, s.upper)
        out = np.empty(n)
        span = 10.0 * (1.0 + np.max(np.abs(c)) + eta_eff * l1w)
        for i in range(n):
            a = max(lo[i], c[i] - span)
            b = min(hi[i], c[i] + span)
            if a > b:
                a = b = lo[i]
            out[i] = _golden_section(_quadratic_l1_comparator(c[i], eta_eff, l1w), a, b)
        return out

    if l1w == 0.0:
        # smooth quadratic over an intersection of projectable sets:
        # damped projected gradient, contraction factor 0.5 per sweep
        def project(v: Array) -> Array:
            return _dykstra_projection(v, sets) if len(sets) > 1 else sets[0].project(v)

        z = project(c.copy())
        alpha = 0.5 * eta_eff
        for _ in range(120):
            z = project(z - alpha * (z - c) / eta_eff)
        return z

    # l1 plus ball: proximal Dykstra on the pair (l1 prox, ball projection)
    ball = sets[0]
    x = c.copy()
    p = np.zeros(n)
    q = np.zeros(n)
    for _ in range(6000):
        y = _soft_threshold(x + p, eta_eff * l1w)
        p = x + p - y
        x_new = ball.project(y + q)
        q = y + q - x_new
        if float(np.linalg.norm(x_new - x)) < 1e-15:
            x = x_new
            break
        x = x_new
    return x


def prox_subproblem_value(
    h: ProxTerm,
    X: FeasibleSet,
    z: Array,
    g: Array,
    y: Array,
    y0: Array,
    eta: float,
    gamma: float,
) -> float:
    """Objective of the anchored prox subproblem at z (for optimality tests)."""
    val = float(g @ z) + h.value(z)
    val += float(np.dot(y - z, y - z)) / (2.0 * eta)
    val += gamma * float(np.dot(y0 - z, y0 - z)) / (2.0 * eta)
    if not X.contains(z, tol=1e-9):
        return float("inf")
    return val


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------


def _set_to_json(s: FeasibleSet) -> dict:
    if isinstance(s, FullSpace):
        return {"kind": "full"}
    if isinstance(s, Box):
        return {"kind": "box", "lower": s.lower.tolist(), "upper": s.upper.tolist()}
    return {"kind": "ball", "center": s.center.tolist(), "radius": s.radius}


def _set_from_json(d: dict) -> FeasibleSet:
    kind = d["kind"]
    if kind == "full":
        return FullSpace()
    if kind == "box":
        return Box(np.asarray(d["lower"]), np.asarray(d["upper"]))
    if kind == "ball":
        return Ball(np.asarray(d["center"]), float(d["radius"]))
    raise ContractViolationError(f"unknown set kind {kind!r}")


def problem_to_json(problem: CompositeProblem) -> dict:
    f = problem.f
    if isinstance(f, QuadraticSum):
        comp = {
            "kind": "quadratic",
            "curvatures": f._H.tolist(),
            "centers": f._U.tolist(),
            "offsets": f._D.tolist(),
        }
    elif isinstance(f, LeastSquaresSum):
        comp = {"kind": "least_squares", "rows": f._A.tolist(), "rhs": f._b.tolist()}
    elif isinstance(f, LogisticSum):
        comp = {"kind": "logistic", "features": f._A.tolist(), "labels": f._y.tolist()}
    else:
        raise UnsupportedOperationError(f"cannot serialize {type(f).__name__}")

    if isinstance(problem.h, Zero):
        hdoc = {"kind": "zero"}
    elif isinstance(problem.h, L1):
        hdoc = {"kind": "l1", "weight": problem.h.weight}
    else:
        hdoc = {"kind": "set_indicator", "set": _set_to_json(problem.h.set)}

    doc = {
        "kind": "composite",
        "dim": problem.dim,
        "components": comp,
        "h": hdoc,
        "set": _set_to_json(problem.set),
        "x0": problem.x0.tolist(),
        "optimum": None
        if problem.optimum is None
        else {"x_star": problem.optimum[0].tolist(), "psi_star": problem.optimum[1]},
        "metadata": problem.metadata,
    }
    return doc


def problem_from_json(doc: dict) -> CompositeProblem:
    comp = doc["components"]
    kind = comp["kind"]
    if kind == "quadratic":
        f = QuadraticSum(
            np.asarray(comp["curvatures"]),
            np.asarray(comp["centers"]),
            np.asarray(comp["offsets"]) if comp.get("offsets") is not None else None,
        )
    elif kind == "least_squares":
        f = LeastSquaresSum(np.asarray(comp["rows"]), np.asarray(comp["rhs"]))
    elif kind == "logistic":
        f = LogisticSum(np.asarray(comp["features"]), np.asarray(comp["labels"]))
    else:
        raise ContractViolationError(f"unknown component kind {kind!r}")

    hdoc = doc["h"]
    if hdoc["kind"] == "zero":
        h: ProxTerm = Zero()
    elif hdoc["kind"] == "l1":
        h = L1(float(hdoc["weight"]))
    elif hdoc["kind"] == "set_indicator":
        h = SetIndicator(_set_from_json(hdoc["set"]))
    else:
        raise ContractViolationError(f"unknown prox term kind {hdoc['kind']!r}")

    opt = doc.get("optimum")
    optimum = None if opt is None else (np.asarray(opt["x_star"]), float(opt["psi_star"]))
    return CompositeProblem(
        f=f,
        h=h,
        set=_set_from_json(doc["set"]),
        x0=np.asarray(doc["x0"]),
        optimum=optimum,
        metadata=doc.get("metadata", {}),
    )


def save_problem(problem: CompositeProblem, path: str | Path) -> None:
    Path(path).write_text(json.dumps(problem_to_json(problem)), encoding="utf-8")


def load_problem(path: str | Path) -> CompositeProblem:
    return problem_from_json(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# Synthetic instance generators
# ---------------------------------------------------------------------------


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def _random_orthogonal(n: int, rng: np.random.Generator) -> Array:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def quadratic_instance(
    dim: int,
    n_components: int,
    cond_number: float = 10.0,
    curvature_spread: float = 0.0,
    center_spread: float = 0.0,
    x0_distance: float = 1.0,
    x0_slow_frac: float = 0.0,
    seed: int = 0,
) -> CompositeProblem:
    """Finite-sum quadratic with controllable conditioning and heterogeneity.

    `curvature_spread` scales the per-component Hessians by (1 + u_i) with
    u_i uniform in [-spread, spread] (drives the smoothness variance);
    `center_spread` scatters per-component minimizers (drives the gradient
    variance); `x0_slow_frac` tilts the start offset toward the
    smallest-curvature eigendirection (0 = random direction, 1 = pure slow
    mode).  The exact optimum comes from one linear solve.
    """
    rng = _rng(seed)
    base = np.diag(np.logspace(0.0, np.log10(cond_number), dim))
    Q = _random_orthogonal(dim, rng)
    H = Q @ base @ Q.T
    H = 0.5 * (H + H.T)

    x_ref = rng.standard_normal(dim)
    if curvature_spread > 0:
        scales = 1.0 + curvature_spread * rng.uniform(-1.0, 1.0, size=n_components)
        Hs = H[None, :, :] * scales[:, None, None]
    else:
        Hs = H
    if center_spread > 0:
        centers = x_ref[None, :] + center_spread * rng.standard_normal((n_components, dim))
    else:
        centers = np.tile(x_ref, (n_components, 1))

    f = QuadraticSum(Hs, centers)
    if curvature_spread > 0 or center_spread > 0:
        mean_h = f.mean_curvature()
        if f.shared_curvature:
            rhs = mean_h @ centers.mean(axis=0)
        else:
            rhs = np.einsum("mij,mj->i", f._H, centers) / n_components
        x_star = np.linalg.solve(mean_h, rhs)
    else:
        x_star = x_ref.copy()
    psi_star = f.full_value(x_star)

    direction = rng.standard_normal(dim)
    direction /= np.linalg.norm(direction)
    if x0_slow_frac > 0:
        slow = Q[:, 0]  # eigenvector of the smallest base eigenvalue
        direction = x0_slow_frac * slow + (1.0 - x0_slow_frac) * direction
        direction /= np.linalg.norm(direction)
    x0 = x_star + x0_distance * direction
    problem = CompositeProblem(f=f, h=Zero(), set=FullSpace(), x0=x0, optimum=(x_star, psi_star))
    problem.metadata = {
        "generator": "quadratic",
        "seed": seed,
        "x0_distance": float(np.linalg.norm(x0 - x_star)),
        "initial_gap": problem.evaluate_gap(x0),
        "max_smoothness": f.max_smoothness,
    }
    return problem


def least_squares_instance(
    dim: int,
    n_components: int,
    cond_number: float = 10.0,
    heterogeneity: float = 1.0,
    noise: float = 0.1,
    seed: int = 0,
) -> CompositeProblem:
    """Finite-sum least squares with heterogeneous row norms."""
    if n_components < dim:
        raise ContractViolationError("need at least `dim` components for a unique optimum")
    rng = _rng(seed)
    A = rng.standard_normal((n_components, dim))
    # impose a singular-value profile on the stacked matrix
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    s = np.linspace(1.0, np.sqrt(cond_number), dim)
    A = u @ np.diag(s) @ vt
    if heterogeneity > 0:
        A *= np.exp(heterogeneity * rng.uniform(-1.0, 1.0, size=n_components))[:, None]
    x_ref = rng.standard_normal(dim)
    b = A @ x_ref + noise * rng.standard_normal(n_components)

    x_star = np.linalg.lstsq(A, b, rcond=None)[0]
    f = LeastSquaresSum(A, b)
    psi_star = f.full_value(x_star)
    x0 = x_ref + rng.standard_normal(dim)
    problem = CompositeProblem(f=f, h=Zero(), set=FullSpace(), x0=x0, optimum=(x_star, psi_star))
    problem.metadata = {
        "generator": "least_squares",
        "seed": seed,
        "initial_gap": problem.evaluate_gap(x0),
        "max_smoothness": f.max_smoothness,
    }
    return problem


def _certify_optimum(f: SmoothFiniteSum, h: ProxTerm, X: FeasibleSet, x0: Array,
                     tol: float = 1e-13, max_iter: int = 200_000) -> Array:
    """High-precision accelerated proximal gradient with the exact full-f
    smoothness bound; runs until the fixed-point residual is negligible."""
    L = float(np.mean(f.component_smoothness()))
    L = max(L, 1e-12)

    def prox(v: Array, step: float) -> Array:
        return _prox_point(h, X, v, step)

    x = X.project(np.asarray(x0, dtype=np.float64))
    z = x.copy()
    t = 1.0
    step = 1.0 / L
    scale = max(1.0, float(np.linalg.norm(f.full_grad(x))))
    for it in range(max_iter):
        g = f.full_grad(z)
        x_new = prox(z - step * g, step)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, t = x_new, t_new
        if it % 50 == 0:
            gx = f.full_grad(x)
            res = float(np.linalg.norm(x - prox(x - step * gx, step))) / step
            if res <= tol * scale:
                break
    return x


def lasso_instance(
    dim: int,
    n_components: int,
    l1_weight: float = 0.1,
    cond_number: float = 10.0,
    seed: int = 0,
) -> CompositeProblem:
    """l1-regularized least squares with a numerically certified optimum."""
    base = least_squares_instance(dim, n_components, cond_number, heterogeneity=0.5,
                                  noise=0.5, seed=seed)
    f = base.f
    h = L1(l1_weight)
    x_star = _certify_optimum(f, h, FullSpace(), base.x0)
    psi_star = f.full_value(x_star) + h.value(x_star)
    problem = CompositeProblem(f=f, h=h, set=FullSpace(), x0=base.x0,
                               optimum=(x_star, psi_star))
    problem.metadata = {
        "generator": "lasso",
        "seed": seed,
        "initial_gap": problem.evaluate_gap(base.x0),
        "max_smoothness": f.max_smoothness,
        "optimum_certified": True,
    }
    return problem


def logistic_ball_instance(
    dim: int,
    n_components: int,
    radius: float = 2.0,
    seed: int = 0,
) -> CompositeProblem:
    """Logistic regression constrained to a centered ball, certified optimum."""
    rng = _rng(seed)
    A = rng.standard_normal((n_components, dim))
    w_true = rng.standard_normal(dim)
    margins = A @ w_true + 0.5 * rng.standard_normal(n_components)
    y = np.where(margins >= 0, 1.0, -1.0)
    f = LogisticSum(A, y)
    ball = Ball(np.zeros(dim), radius)
    x0 = np.zeros(dim)
    x_star = _certify_optimum(f, Zero(), ball, x0)
    psi_star = f.full_value(x_star)
    problem = CompositeProblem(f=f, h=Zero(), set=ball, x0=x0, optimum=(x_star, psi_star))
    problem.metadata = {
        "generator": "logistic_ball",
        "seed": seed,
        "initial_gap": problem.evaluate_gap(x0),
        "max_smoothness": f.max_smoothness,
        "optimum_certified": True,
    }
    return problem


def scale_problem(problem: CompositeProblem, s: float) -> CompositeProblem:
    """Multiply every component of f by s > 0 (same iterates' geometry,
    objective and all its derivatives scaled)."""
    if not s > 0:
        raise ContractViolationError("scale factor must be positive")
    f = problem.f
    if isinstance(f, QuadraticSum):
        f2: SmoothFiniteSum = QuadraticSum(f._H * s, f._U.copy(), f._D * s)
    elif isinstance(f, LeastSquaresSum):
        f2 = LeastSquaresSum(f._A * np.sqrt(s), f._b * np.sqrt(s))
    else:
        raise UnsupportedOperationError(f"cannot scale {type(f).__name__}")
    optimum = None
    if problem.optimum is not None:
        optimum = (problem.optimum[0].copy(), problem.optimum[1] * s)
    meta = dict(problem.metadata)
    if "initial_gap" in meta:
        meta["initial_gap"] = meta["initial_gap"] * s
    if "max_smoothness" in meta:
        meta["max_smoothness"] = meta["max_smoothness"] * s
    out = CompositeProblem(f=f2, h=problem.h, set=problem.set, x0=problem.x0.copy(),
                           optimum=optimum)
    out.metadata = meta
    return out


GENERATORS = {
    "quadratic": quadratic_instance,
    "least_squares": least_squares_instance,
    "lasso": lasso_instance,
    "logistic_ball": logistic_ball_instance,
}


def generate_problem(spec: dict) -> CompositeProblem:
    """Build a synthetic instance from a generator spec dictionary."""
    spec = dict(spec)
    name = spec.pop("generator", None)
    if name not in GENERATORS:
        raise ContractViolationError(
            f"problem.generator: unknown generator {name!r}; "
            f"choose one of {sorted(GENERATORS)}"
        )
    return GENERATORS[name](**spec)
