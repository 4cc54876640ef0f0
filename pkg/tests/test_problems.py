import json

import numpy as np
import pytest

from acfgm import (
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
    gradient_mapping,
    lasso_instance,
    least_squares_instance,
    logistic_ball_instance,
    problem_from_json,
    problem_to_json,
    prox_step,
    quadratic_instance,
    sample_value_grad,
)
from acfgm.errors import ContractViolationError, UnsupportedOperationError
from acfgm.problems import (
    _golden_section,
    _quadratic_l1_comparator,
    min_norm_subgradient,
    prox_oracle_numeric,
    prox_subproblem_value,
)


def make_problem(f, h=None, set_=None, x0=None):
    return CompositeProblem(
        f=f,
        h=h or Zero(),
        set=set_ or FullSpace(),
        x0=np.zeros(f.dim) if x0 is None else x0,
    )


class TestSampleValueGrad:
    def test_least_squares_component(self):
        f = LeastSquaresSum(rows=[[1.0, 0.0]], rhs=[1.0])
        p = make_problem(f)
        val, grad = sample_value_grad(p, np.zeros(2), 0)
        assert val == pytest.approx(0.5)
        np.testing.assert_allclose(grad, [-1.0, 0.0])

    def test_zero_residual_gradient(self):
        f = LeastSquaresSum(rows=[[2.0, 1.0]], rhs=[3.0])
        p = make_problem(f)
        x = np.array([1.0, 1.0])  # a'x = 3 = b
        _, grad = sample_value_grad(p, x, 0)
        np.testing.assert_allclose(grad, 0.0, atol=1e-15)

    def test_logistic_at_zero(self):
        f = LogisticSum(features=[[1.0, 1.0]], labels=[1.0])
        p = make_problem(f)
        val, grad = sample_value_grad(p, np.zeros(2), 0)
        assert val == pytest.approx(np.log(2.0))
        np.testing.assert_allclose(grad, [-0.5, -0.5])

    def test_index_out_of_range(self):
        f = LeastSquaresSum(rows=[[1.0]], rhs=[0.0])
        p = make_problem(f)
        with pytest.raises(ContractViolationError):
            sample_value_grad(p, np.zeros(1), 5)

    def test_deterministic(self):
        f = LeastSquaresSum(rows=np.arange(6.0).reshape(3, 2), rhs=[1.0, 2.0, 3.0])
        p = make_problem(f)
        x = np.array([0.3, -0.7])
        a = sample_value_grad(p, x, 1)
        b = sample_value_grad(p, x, 1)
        assert a[0] == b[0]
        np.testing.assert_array_equal(a[1], b[1])


class TestProxStep:
    def test_plain_gradient_step(self):
        f = LeastSquaresSum(rows=[[1.0, 0.0]], rhs=[0.0])
        p = make_problem(f)
        z = prox_step(p, g=np.array([2.0, 2.0]), y=np.array([1.0, 0.0]),
                      y0=np.zeros(2), eta=0.5, gamma=0.0)
        np.testing.assert_allclose(z, [0.0, -1.0])

    def test_anchored_combination(self):
        f = LeastSquaresSum(rows=[[1.0, 0.0]], rhs=[0.0])
        p = make_problem(f)
        z = prox_step(p, g=np.array([2.0, 2.0]), y=np.array([1.0, 0.0]),
                      y0=np.zeros(2), eta=0.5, gamma=1.0)
        np.testing.assert_allclose(z, [0.0, -0.5])

    def test_l1_against_golden_section(self):
        # minimize |z| + (z - 3)^2 / 2; golden-section oracle agrees with the
        # soft-threshold closed form at z = 2
        oracle = _golden_section(
            _quadratic_l1_comparator(3.0, 1.0, 1.0), -10.0, 10.0, tol=1e-13
        )
        assert oracle == pytest.approx(2.0, abs=1e-10)
        f = LeastSquaresSum(rows=[[1.0]], rhs=[0.0])
        p = make_problem(f, h=L1(1.0))
        z = prox_step(p, g=np.zeros(1), y=np.array([3.0]), y0=np.zeros(1), eta=1.0)
        assert z[0] == pytest.approx(2.0, abs=1e-12)

    def test_invalid_eta(self):
        f = LeastSquaresSum(rows=[[1.0]], rhs=[0.0])
        p = make_problem(f)
        with pytest.raises(ContractViolationError):
            prox_step(p, np.zeros(1), np.zeros(1), np.zeros(1), eta=0.0)

    def test_non_finite_rejected(self):
        f = LeastSquaresSum(rows=[[1.0]], rhs=[0.0])
        p = make_problem(f)
        with pytest.raises(ContractViolationError):
            prox_step(p, np.array([np.nan]), np.zeros(1), np.zeros(1), eta=1.0)

    def test_gamma_zero_ignores_anchor(self):
        f = LeastSquaresSum(rows=np.eye(3), rhs=np.zeros(3))
        p = make_problem(f, h=L1(0.3), set_=Box(-np.ones(3), np.ones(3)))
        rng = np.random.default_rng(1)
        g = rng.standard_normal(3)
        y = rng.standard_normal(3)
        z_ref = prox_step(p, g, y, np.zeros(3), eta=0.7, gamma=0.0)
        for _ in range(5):
            z = prox_step(p, g, y, rng.standard_normal(3) * 100, eta=0.7, gamma=0.0)
            np.testing.assert_array_equal(z, z_ref)


def _random_prox_case(rng, h_kind, set_kind):
    n = int(rng.integers(2, 7))
    c_sets = {
        "full": FullSpace(),
        "box": Box(-rng.uniform(0.2, 2.0, n), rng.uniform(0.2, 2.0, n)),
        "ball": Ball(rng.standard_normal(n) * 0.3, float(rng.uniform(0.5, 2.0))),
    }
    hs = {
        "zero": Zero(),
        "l1": L1(float(rng.uniform(0.05, 1.5))),
        "indicator": SetIndicator(c_sets[set_kind]),
    }
    h = hs[h_kind]
    X = FullSpace() if h_kind == "indicator" else c_sets[set_kind]
    g = rng.standard_normal(n)
    y = rng.standard_normal(n)
    y0 = rng.standard_normal(n)
    eta = float(rng.uniform(0.05, 2.0))
    gamma = float(rng.choice([0.0, 0.3, 1.0]))
    return h, X, g, y, y0, eta, gamma


@pytest.mark.parametrize("h_kind,set_kind", [
    ("zero", "full"), ("zero", "box"), ("zero", "ball"),
    ("l1", "full"), ("l1", "box"), ("l1", "ball"),
    ("indicator", "box"), ("indicator", "ball"),
])
def test_prox_matches_numeric_oracle(h_kind, set_kind):
    rng = np.random.default_rng(hash((h_kind, set_kind)) % 2**32)
    for _ in range(25):
        h, X, g, y, y0, eta, gamma = _random_prox_case(rng, h_kind, set_kind)
        n = len(g)
        f = LeastSquaresSum(rows=np.eye(n), rhs=np.zeros(n))
        x0 = X.project(np.zeros(n))
        p = CompositeProblem(f=f, h=h, set=X, x0=x0)
        z = prox_step(p, g, y, y0, eta, gamma)
        c = (y + gamma * y0 - eta * g) / (1.0 + gamma)
        z_num = prox_oracle_numeric(h, X, c, eta / (1.0 + gamma))
        np.testing.assert_allclose(z, z_num, atol=1e-8)
        # the closed form must also not lose to the oracle on objective value
        v_closed = prox_subproblem_value(h, X, z, g, y, y0, eta, gamma)
        v_num = prox_subproblem_value(h, X, z_num, g, y, y0, eta, gamma)
        assert v_closed <= v_num + 1e-9


class TestGradientMapping:
    def test_plain_prox_point(self):
        f = LeastSquaresSum(rows=[[1.0, 0.0]], rhs=[0.0])
        p = make_problem(f)
        pt, red = gradient_mapping(p, u=np.array([1.0, 1.0]), y=np.array([2.0, 0.0]), c=0.5)
        np.testing.assert_allclose(pt, [0.0, 1.0])
        np.testing.assert_allclose(red, [2.0, 0.0])

    def test_zero_direction(self):
        f = LeastSquaresSum(rows=[[1.0, 0.0]], rhs=[0.0])
        p = make_problem(f)
        _, red = gradient_mapping(p, u=np.array([0.3, -0.2]), y=np.zeros(2), c=1.0)
        np.testing.assert_allclose(red, 0.0, atol=1e-15)

    def test_l1_case(self):
        f = LeastSquaresSum(rows=[[1.0]], rhs=[0.0])
        p = make_problem(f, h=L1(1.0))
        pt, red = gradient_mapping(p, u=np.array([2.0]), y=np.zeros(1), c=1.0)
        assert pt[0] == pytest.approx(1.0, abs=1e-12)
        assert red[0] == pytest.approx(1.0, abs=1e-12)

    def test_vanishes_at_optimum(self):
        for maker, seed in [(quadratic_instance, 3), (quadratic_instance, 4)]:
            p = maker(dim=5, n_components=8, cond_number=20,
                      curvature_spread=0.2, center_spread=0.5, seed=seed)
            x_star = p.optimum[0]
            _, red = gradient_mapping(p, x_star, p.f.full_grad(x_star), 0.7)
            assert np.linalg.norm(red) <= 1e-8

    def test_vanishes_at_certified_optimum(self):
        p = lasso_instance(dim=5, n_components=12, l1_weight=0.2, seed=2)
        x_star = p.optimum[0]
        _, red = gradient_mapping(p, x_star, p.f.full_grad(x_star), 0.5)
        assert np.linalg.norm(red) <= 1e-8
        p = logistic_ball_instance(dim=4, n_components=15, radius=1.5, seed=2)
        x_star = p.optimum[0]
        _, red = gradient_mapping(p, x_star, p.f.full_grad(x_star), 0.5)
        assert np.linalg.norm(red) <= 1e-8

    def test_invalid_c(self):
        f = LeastSquaresSum(rows=[[1.0]], rhs=[0.0])
        p = make_problem(f)
        with pytest.raises(ContractViolationError):
            gradient_mapping(p, np.zeros(1), np.zeros(1), c=0.0)


class TestExactVariances:
    def test_single_component_no_variance(self):
        f = LeastSquaresSum(rows=[[1.0, 2.0]], rhs=[0.5])
        p = make_problem(f)
        assert exact_point_variance(p, np.array([0.1, 0.2])) == 0.0

    def test_two_opposite_gradients(self):
        # components 0.5(x - 1)^2 and 0.5(x + 1)^2 at x = 0: gradients -1, +1
        f = LeastSquaresSum(rows=[[1.0], [1.0]], rhs=[1.0, -1.0])
        p = make_problem(f)
        assert exact_point_variance(p, np.zeros(1)) == pytest.approx(1.0)

    def test_matches_monte_carlo(self):
        p = least_squares_instance(dim=4, n_components=20, seed=11)
        x = p.x0
        exact = exact_point_variance(p, x)
        rng = np.random.default_rng(123)
        idx = rng.integers(0, 20, size=1_000_000)
        grads = p.f.batch_grads(x, idx)
        full = p.f.full_grad(x)
        mc = float(np.mean(np.sum((grads - full) ** 2, axis=1)))
        assert mc == pytest.approx(exact, rel=0.01)

    def test_smoothness_variance_single(self):
        f = LeastSquaresSum(rows=[[1.0]], rhs=[0.0])
        p = make_problem(f)
        assert exact_smoothness_variance(p, np.array([0.0]), np.array([1.0])) == 0.0

    def test_smoothness_variance_identical_components(self):
        f = LeastSquaresSum(rows=[[1.0, 0.5], [1.0, 0.5]], rhs=[1.0, 1.0])
        p = make_problem(f)
        a = np.array([0.2, -0.1])
        b = np.array([-0.4, 0.9])
        assert exact_smoothness_variance(p, a, b) == pytest.approx(0.0, abs=1e-14)

    def test_smoothness_variance_two_curvatures(self):
        # quadratics 0.5*1*x^2 and 0.5*3*x^2: per-sample smoothness is the
        # curvature exactly, so the variance is ((1-2)^2 + (3-2)^2)/2 = 1
        H = np.array([[[1.0]], [[3.0]]])
        f = QuadraticSum(H, centers=np.zeros((2, 1)))
        p = make_problem(f)
        for a, b in [(0.0, 1.0), (-2.0, 0.7), (5.0, 5.5)]:
            got = exact_smoothness_variance(p, np.array([a]), np.array([b]))
            assert got == pytest.approx(1.0, rel=1e-12)

    def test_smoothness_variance_coincident_points(self):
        f = LeastSquaresSum(rows=[[1.0], [2.0]], rhs=[0.0, 1.0])
        p = make_problem(f)
        x = np.array([0.3])
        assert exact_smoothness_variance(p, x, x.copy()) == 0.0

    def test_smoothness_variance_matches_monte_carlo(self):
        p = least_squares_instance(dim=4, n_components=20, seed=17)
        a, b = p.x0, p.x0 + 0.5
        exact = exact_smoothness_variance(p, a, b)
        diff = a - b
        dsq = float(diff @ diff)
        rng = np.random.default_rng(99)
        idx = rng.integers(0, 20, size=1_000_000)
        ell = 2.0 * (p.f.batch_values(a, idx) - p.f.batch_values(b, idx)
                     - p.f.batch_grads(b, idx) @ diff) / dsq
        ell_all = 2.0 * (p.f.batch_values(a, np.arange(20)) - p.f.batch_values(b, np.arange(20))
                         - p.f.batch_grads(b, np.arange(20)) @ diff) / dsq
        mc = float(np.mean((ell - np.mean(ell_all)) ** 2))
        assert mc == pytest.approx(exact, rel=0.01)


def test_convexity_sandwich_random_batches():
    # same-batch Taylor remainder and gradient difference obey the
    # cocoercivity-smoothness sandwich with the worst component constant
    p = least_squares_instance(dim=6, n_components=25, heterogeneity=1.0, seed=5)
    lmax = p.f.max_smoothness
    rng = np.random.default_rng(7)
    scale = p.scale
    for _ in range(300):
        x_prev = rng.standard_normal(6)
        x_curr = rng.standard_normal(6)
        idx = rng.integers(0, 25, size=int(rng.integers(1, 9)))
        diff = x_prev - x_curr
        t = float(np.mean(p.f.batch_values(x_prev, idx) - p.f.batch_values(x_curr, idx)
                          - p.f.batch_grads(x_curr, idx) @ diff))
        dg = (p.f.batch_grads(x_curr, idx) - p.f.batch_grads(x_prev, idx)).mean(axis=0)
        assert t >= -1e-12 * max(1.0, abs(scale))
        assert float(dg @ dg) <= 2.0 * lmax * max(t, 0.0) + 1e-9 * scale


class TestOptimumContracts:
    def test_psi_never_below_recorded_optimum(self):
        for p in [
            quadratic_instance(dim=5, n_components=10, curvature_spread=0.3,
                               center_spread=0.8, seed=1),
            least_squares_instance(dim=4, n_components=12, seed=1),
            lasso_instance(dim=4, n_components=10, seed=1),
            logistic_ball_instance(dim=3, n_components=12, seed=1),
        ]:
            rng = np.random.default_rng(0)
            psi_star = p.optimum[1]
            for _ in range(50):
                x = p.set.project(p.optimum[0] + rng.standard_normal(p.dim))
                assert p.psi(x) >= psi_star - 1e-9 * p.scale

    def test_gap_at_optimum(self):
        p = quadratic_instance(dim=6, n_components=5, center_spread=0.5, seed=8)
        assert abs(p.evaluate_gap(p.optimum[0])) <= 1e-12 * p.scale

    def test_initial_gap_metadata(self):
        p = quadratic_instance(dim=6, n_components=5, center_spread=0.5, seed=8)
        assert p.evaluate_gap(p.x0) == pytest.approx(p.metadata["initial_gap"], rel=1e-12)

    def test_gap_requires_optimum(self):
        f = LeastSquaresSum(rows=[[1.0]], rhs=[0.0])
        p = make_problem(f)
        with pytest.raises(UnsupportedOperationError):
            p.evaluate_gap(np.zeros(1))


class TestSubgradient:
    def test_l1_min_norm(self):
        h = L1(2.0)
        x = np.array([1.5, 0.0, -0.2])
        np.testing.assert_allclose(min_norm_subgradient(h, x), [2.0, 0.0, -2.0])

    def test_zero(self):
        np.testing.assert_allclose(min_norm_subgradient(Zero(), np.ones(3)), 0.0)


class TestJsonRoundTrip:
    @pytest.mark.parametrize("maker,kwargs", [
        (quadratic_instance, dict(dim=4, n_components=3, curvature_spread=0.1,
                                  center_spread=0.2, seed=1)),
        (least_squares_instance, dict(dim=3, n_components=6, seed=2)),
        (lasso_instance, dict(dim=3, n_components=5, seed=3)),
        (logistic_ball_instance, dict(dim=3, n_components=8, seed=4)),
    ])
    def test_round_trip(self, maker, kwargs):
        p = maker(**kwargs)
        doc = problem_to_json(p)
        q = problem_from_json(json.loads(json.dumps(doc)))
        x = p.x0 + 0.25
        assert q.psi(x) == pytest.approx(p.psi(x), rel=1e-15)
        np.testing.assert_array_equal(q.x0, p.x0)
        assert q.optimum[1] == pytest.approx(p.optimum[1], rel=1e-15)
        g1 = p.f.full_grad(x)
        g2 = q.f.full_grad(x)
        np.testing.assert_allclose(g1, g2, rtol=1e-15)


class TestSets:
    def test_box_validation(self):
        with pytest.raises(ContractViolationError):
            Box(np.array([1.0]), np.array([0.0]))

    def test_ball_projection(self):
        b = Ball(np.zeros(2), 1.0)
        np.testing.assert_allclose(b.project(np.array([3.0, 4.0])), [0.6, 0.8])
        inside = np.array([0.1, 0.2])
        np.testing.assert_array_equal(b.project(inside), inside)

    def test_x0_must_be_feasible(self):
        f = LeastSquaresSum(rows=[[1.0]], rhs=[0.0])
        with pytest.raises(ContractViolationError):
            CompositeProblem(f=f, h=Zero(), set=Ball(np.zeros(1), 0.5),
                             x0=np.array([2.0]))
