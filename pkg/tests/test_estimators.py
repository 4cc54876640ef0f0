import numpy as np
import pytest

from acfgm import (
    CompositeProblem,
    FullSpace,
    LeastSquaresSum,
    QuadraticSum,
    StreamKind,
    Zero,
    exact_point_variance,
    exact_smoothness_variance,
    least_squares_instance,
)
from acfgm.errors import ContractViolationError
from acfgm.estimators import (
    batch_grad,
    grad_diff,
    local_smoothness,
    pairwise_grad_variance,
    pairwise_smoothness_variance,
    pairwise_variances,
    raw_taylor_remainder,
    smoothness_estimate,
    taylor_remainder,
)
from acfgm.sampling import BatchDraw


def quad_problem(curvatures):
    H = np.array([[[c]] for c in curvatures], dtype=float)
    f = QuadraticSum(H, centers=np.zeros((len(curvatures), 1)))
    return CompositeProblem(f=f, h=Zero(), set=FullSpace(), x0=np.zeros(1))


def forced(kind, indices, iteration=1):
    idx = np.asarray(indices, dtype=np.int64)
    return BatchDraw(kind=kind, iteration=iteration, size=len(idx), indices=idx)


class TestBatchGrad:
    def test_single_sample(self):
        p = quad_problem([2.0, 4.0])
        x = np.array([1.0])
        stats = batch_grad(p, x, forced(StreamKind.MAIN_UPDATE, [1]))
        np.testing.assert_allclose(stats.mean_grad, [4.0])
        assert stats.mean_value == pytest.approx(2.0)

    def test_every_component_once_is_full_gradient(self):
        p = least_squares_instance(dim=3, n_components=8, seed=0)
        x = p.x0
        stats = batch_grad(p, x, forced(StreamKind.MAIN_UPDATE, range(8)))
        np.testing.assert_allclose(stats.mean_grad, p.f.full_grad(x), rtol=1e-12)

    def test_monte_carlo_unbiased(self):
        p = least_squares_instance(dim=3, n_components=10, seed=1)
        x = p.x0 + 0.3
        full = p.f.full_grad(x)
        sigma_sq = exact_point_variance(p, x)
        n_draws = 100_000
        rng = np.random.default_rng(6)
        idx = rng.integers(0, 10, size=n_draws)
        mean = p.f.batch_grads(x, idx).mean(axis=0)
        # componentwise 3-sigma band for the mean of n_draws single draws
        tol = 3.0 * np.sqrt(sigma_sq / n_draws)
        assert np.linalg.norm(mean - full) <= 3.0 * tol


class TestGradDiff:
    def test_same_points_zero(self):
        p = quad_problem([1.0, 3.0])
        x = np.array([0.7])
        d = grad_diff(p, x, x.copy(), forced(StreamKind.STEP_GRAD_DIFF, [0, 1]))
        np.testing.assert_allclose(d, 0.0)

    def test_single_quadratic_exact(self):
        p = quad_problem([2.0])
        d = grad_diff(p, np.array([0.0]), np.array([1.0]),
                      forced(StreamKind.STEP_GRAD_DIFF, [0, 0, 0]))
        np.testing.assert_allclose(d, [2.0])

    def test_two_curvatures_mean(self):
        p = quad_problem([1.0, 3.0])
        d = grad_diff(p, np.array([0.0]), np.array([1.0]),
                      forced(StreamKind.STEP_GRAD_DIFF, [0, 1]))
        np.testing.assert_allclose(d, [2.0])

    def test_kind_checked(self):
        p = quad_problem([1.0])
        with pytest.raises(ContractViolationError):
            grad_diff(p, np.zeros(1), np.ones(1), forced(StreamKind.MAIN_UPDATE, [0]))

    def test_paired_sample_identity(self):
        # same index list evaluated at both points equals the difference of
        # the two batch means
        p = least_squares_instance(dim=4, n_components=12, seed=3)
        rng = np.random.default_rng(0)
        a, b = rng.standard_normal(4), rng.standard_normal(4)
        idx = rng.integers(0, 12, size=7)
        d = grad_diff(p, a, b, forced(StreamKind.STEP_GRAD_DIFF, idx))
        ga = p.f.batch_grads(a, idx).mean(axis=0)
        gb = p.f.batch_grads(b, idx).mean(axis=0)
        np.testing.assert_allclose(d, gb - ga, rtol=1e-12, atol=1e-15)


class TestTaylorRemainder:
    def test_same_points_zero(self):
        p = quad_problem([2.0])
        x = np.array([0.5])
        assert taylor_remainder(p, x, x.copy(), forced(StreamKind.STEP_TAYLOR, [0])) == 0.0

    def test_quadratic_analytic(self):
        # 0.5*2*x^2 between x_prev=1 and x_curr=0: F(1)-F(0)-<G(0),1> = 1
        p = quad_problem([2.0])
        t = taylor_remainder(p, np.array([1.0]), np.array([0.0]),
                             forced(StreamKind.STEP_TAYLOR, [0]))
        assert t == pytest.approx(1.0)

    def test_nonnegative_on_convex_batches(self):
        p = least_squares_instance(dim=5, n_components=15, heterogeneity=1.0, seed=4)
        rng = np.random.default_rng(11)
        for _ in range(10_000):
            a = rng.standard_normal(5)
            b = rng.standard_normal(5)
            idx = rng.integers(0, 15, size=4)
            raw = raw_taylor_remainder(p.f, a, b, idx)
            assert raw >= -1e-10 * p.scale


class TestLocalSmoothness:
    def test_quadratic_curvature_recovered(self):
        assert local_smoothness(np.array([2.0]), 1.0) == pytest.approx(2.0)

    def test_zero_over_zero(self):
        assert local_smoothness(np.zeros(3), 0.0) == 0.0

    def test_degenerate_keeps_previous(self):
        with pytest.warns(RuntimeWarning):
            got = local_smoothness(np.array([1.0]), 0.0, prev=7.0)
        assert got == 7.0

    def test_bounded_by_worst_component_same_batch(self):
        p = least_squares_instance(dim=4, n_components=20, heterogeneity=1.0, seed=5)
        lmax = p.f.max_smoothness
        rng = np.random.default_rng(8)
        for _ in range(10_000):
            a = rng.standard_normal(4)
            b = rng.standard_normal(4)
            idx = rng.integers(0, 20, size=int(rng.integers(1, 7)))
            diff = a - b
            t = float(np.mean(p.f.batch_values(a, idx) - p.f.batch_values(b, idx)
                              - p.f.batch_grads(b, idx) @ diff))
            dg = (p.f.batch_grads(b, idx) - p.f.batch_grads(a, idx)).mean(axis=0)
            l_bar = local_smoothness(dg, t)
            assert l_bar <= lmax * (1 + 1e-6)

    def test_scaling_invariance(self):
        # scaling the components by s scales dG and T by s, hence l_bar by s
        p = least_squares_instance(dim=3, n_components=9, seed=6)
        rows = p.f._A
        rhs = p.f._b
        s = 3.7
        f_scaled = LeastSquaresSum(rows * np.sqrt(s), rhs * np.sqrt(s))
        rng = np.random.default_rng(1)
        a, b = rng.standard_normal(3), rng.standard_normal(3)
        idx = rng.integers(0, 9, size=6)
        dg1 = (p.f.batch_grads(b, idx) - p.f.batch_grads(a, idx)).mean(axis=0)
        t1 = raw_taylor_remainder(p.f, a, b, idx)
        dg2 = (f_scaled.batch_grads(b, idx) - f_scaled.batch_grads(a, idx)).mean(axis=0)
        t2 = raw_taylor_remainder(f_scaled, a, b, idx)
        l1 = local_smoothness(dg1, t1)
        l2 = local_smoothness(dg2, t2)
        assert l2 == pytest.approx(s * l1, rel=1e-10)

    def test_curvature_independent_of_points(self):
        p = quad_problem([5.0])
        rng = np.random.default_rng(2)
        for _ in range(20):
            a, b = rng.standard_normal(1), rng.standard_normal(1)
            if np.allclose(a, b):
                continue
            idx = forced(StreamKind.STEP_GRAD_DIFF, [0, 0])
            dg = grad_diff(p, a, b, idx)
            t = taylor_remainder(p, a, b, forced(StreamKind.STEP_TAYLOR, [0]))
            assert local_smoothness(dg, t) == pytest.approx(5.0, rel=1e-10)

    def test_combined_estimate_wrapper(self):
        p = quad_problem([2.0])
        est = smoothness_estimate(
            p, np.array([1.0]), np.array([0.0]),
            forced(StreamKind.STEP_GRAD_DIFF, [0, 0]),
            forced(StreamKind.STEP_TAYLOR, [0]),
        )
        assert est.l_bar == pytest.approx(2.0)
        assert est.delta_g_norm_sq == pytest.approx(4.0)
        assert est.taylor_remainder == pytest.approx(1.0)


class TestPairwiseVariances:
    def test_arithmetic_example(self):
        # 1-d gradient pairs (1,3) and (0,2) with r=2 pairs -> sigma^2 = 2
        f = LeastSquaresSum(rows=[[1.0]] * 4, rhs=[-1.0, -3.0, 0.0, -2.0])
        # at x = 0 the gradients are (1, 3, 0, 2)
        got = pairwise_grad_variance(f, np.zeros(1), np.array([0, 1, 2, 3]), 1.0)
        assert got == pytest.approx(2.0)

    def test_zero_variance_problem(self):
        p = quad_problem([2.0])
        v = pairwise_variances(
            p, np.ones(1), np.zeros(1),
            var_main=forced(StreamKind.VAR_MAIN, [0, 0]),
            var_grad_diff=forced(StreamKind.VAR_GRAD_DIFF, [0, 0]),
            var_taylor=forced(StreamKind.VAR_TAYLOR, [0, 0]),
        )
        assert v.sigma_hat_sq == 0.0
        assert v.delta_hat_sq == 0.0
        assert v.v_hat_sq == 0.0

    def test_odd_batch_rejected(self):
        p = quad_problem([2.0, 1.0])
        with pytest.raises(ContractViolationError):
            pairwise_grad_variance(p.f, np.zeros(1), np.array([0, 1, 0]), 1.0)

    def test_sigma_unbiased_monte_carlo(self):
        p = least_squares_instance(dim=4, n_components=15, seed=7)
        x = p.x0
        exact = exact_point_variance(p, x)
        rng = np.random.default_rng(42)
        idx = rng.integers(0, 15, size=200_000)  # 1e5 pairs
        est = pairwise_grad_variance(p.f, x, idx, 1.0)
        assert est == pytest.approx(exact, rel=0.02)

    def test_v_unbiased_monte_carlo(self):
        p = least_squares_instance(dim=4, n_components=15, seed=7)
        a, b = p.x0, p.x0 + 0.4
        exact = exact_smoothness_variance(p, a, b)
        rng = np.random.default_rng(43)
        idx = rng.integers(0, 15, size=200_000)
        est = pairwise_smoothness_variance(p.f, a, b, idx, 1.0)
        assert est == pytest.approx(exact, rel=0.02)

    def test_inflation_applied(self):
        p = least_squares_instance(dim=3, n_components=9, seed=8)
        x = p.x0
        idx = np.arange(8)
        base = pairwise_grad_variance(p.f, x, idx, 1.0)
        assert pairwise_grad_variance(p.f, x, idx, 1.5) == pytest.approx(1.5 * base)
