"""Forward/backward correctness of the heteroskedastic network."""

import numpy as np
import pytest

from conftest import central_difference, random_params, relative_errors
from modens.errors import DivergenceError
from modens.network import (ADAM_BETA1, ADAM_BETA2, ADAM_EPS, HeadConfig,
                            NetworkParams, PredictiveParams, backward, flatten,
                            forward, forward_batch, gaussian_nll,
                            gaussian_nll_gradients, gaussian_nll_terms,
                            init_optimizer_state, init_params, input_gradient,
                            optimizer_step, unflatten, zeros_like)

HALF_LOG_2PI = 0.9189385332046727


def zero_params(input_dim=2, hidden=3, heads=None):
    heads = heads or HeadConfig()
    return NetworkParams(np.zeros((hidden, input_dim)), np.zeros(hidden),
                         np.zeros(hidden), np.zeros(()), np.zeros(hidden),
                         np.zeros(()), heads=heads)


class TestForward:
    def test_zero_params_hit_head_midpoints(self):
        pred, _ = forward(zero_params(), np.array([3.0, -7.0]))
        hc = HeadConfig()
        assert pred.mu == pytest.approx(0.5 * (hc.mean_low + hc.mean_high))
        assert pred.sigma2 == pytest.approx(0.5 * (hc.sigma2_min + hc.sigma2_max))

    def test_variance_saturates_at_upper_bound(self):
        p = zero_params()
        p.var_b = np.asarray(1e3)  # sigmoid saturates to 1.0 in float64
        pred, _ = forward(p, np.array([0.0, 0.0]))
        assert pred.sigma2 == HeadConfig().sigma2_max

    def test_matches_straight_line_recomputation(self, rng):
        for _ in range(10):
            p = random_params(rng, input_dim=4, hidden=6)
            x = rng.normal(size=4)
            pred, _ = forward(p, x)
            # independent scalar-loop recomputation of the same formulas
            h = [max(0.0, sum(p.hidden_w[i, j] * x[j] for j in range(4))
                     + p.hidden_b[i]) for i in range(6)]
            a_mu = sum(p.mean_w[i] * h[i] for i in range(6)) + float(p.mean_b)
            a_s2 = sum(p.var_w[i] * h[i] for i in range(6)) + float(p.var_b)
            sig = lambda a: 1.0 / (1.0 + np.exp(-a))
            hc = p.heads
            mu = hc.mean_low + (hc.mean_high - hc.mean_low) * sig(a_mu)
            s2 = hc.sigma2_min + (hc.sigma2_max - hc.sigma2_min) * sig(a_s2)
            assert pred.mu == pytest.approx(mu, rel=1e-12)
            assert pred.sigma2 == pytest.approx(s2, rel=1e-12)

    def test_sigma2_always_within_bounds(self, rng):
        hc = HeadConfig(sigma2_min=1e-4, sigma2_max=0.25)
        for _ in range(20):
            p = random_params(rng, heads=hc)
            X = rng.normal(scale=5.0, size=(50, 3))
            _, s2, _ = forward_batch(p, X)
            assert np.all(s2 >= hc.sigma2_min)
            assert np.all(s2 <= hc.sigma2_max)

    def test_dimension_mismatch_raises(self, rng):
        p = random_params(rng, input_dim=3)
        with pytest.raises(ValueError):
            forward(p, np.zeros(4))

    def test_linear_mean_head(self, rng):
        p = random_params(rng, heads=HeadConfig(linear_mean=True))
        x = rng.normal(size=3)
        pred, _ = forward(p, x)
        h = np.maximum(p.hidden_w @ x + p.hidden_b, 0.0)
        assert pred.mu == pytest.approx(float(h @ p.mean_w + p.mean_b), rel=1e-12)


class TestGaussianNLL:
    def test_standard_normal_at_mode(self):
        assert gaussian_nll(PredictiveParams(0.0, 1.0), 0.0) == pytest.approx(
            HALF_LOG_2PI, abs=1e-12)

    def test_unit_residual(self):
        assert gaussian_nll(PredictiveParams(0.0, 1.0), 1.0) == pytest.approx(
            HALF_LOG_2PI + 0.5, abs=1e-12)

    def test_small_variance_case(self):
        # 0.5*ln(2*pi*0.04) + 0.04/0.08, frozen from a 30-digit evaluation
        assert gaussian_nll(PredictiveParams(0.5, 0.04), 0.7) == pytest.approx(
            -0.190499379229427633, abs=1e-12)

    def test_rejects_nonpositive_variance(self):
        with pytest.raises(ValueError):
            gaussian_nll(PredictiveParams(0.0, 0.0), 1.0)

    def test_proper_penalty_minimized_at_squared_residual(self):
        # grid scan: for fixed residual r, argmin over sigma2 is r^2
        r = 0.37
        factors = np.linspace(0.2, 3.0, 281)  # contains 1.0 exactly
        grid = r * r * factors
        vals = [gaussian_nll(PredictiveParams(0.0, s), r) for s in grid]
        assert factors[int(np.argmin(vals))] == pytest.approx(1.0, abs=1e-12)


class TestBackward:
    def test_zero_upstream_gives_zero_gradient(self, rng):
        p = random_params(rng)
        _, cache = forward(p, rng.normal(size=3))
        g = backward(p, cache, (0.0, 0.0))
        assert np.all(flatten(g) == 0.0)

    @pytest.mark.parametrize("seed", range(4))
    def test_nll_gradient_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        p = random_params(rng, input_dim=4, hidden=6)
        x = rng.normal(size=4)
        y = rng.normal()
        pred, cache = forward(p, x)
        d_mu, d_s2 = gaussian_nll_gradients(
            np.array([pred.mu]), np.array([pred.sigma2]), np.array([y]))
        analytic = flatten(backward(p, cache, (d_mu, d_s2)))

        def objective(v):
            q, _ = forward(unflatten(p, v), x)
            return gaussian_nll(q, y)

        numeric = central_difference(objective, flatten(p))
        mask = np.abs(numeric) > 1e-7
        assert np.max(relative_errors(analytic, numeric)[mask]) < 1e-4

    def test_dead_relu_unit_gets_zero_incoming_gradient(self, rng):
        p = random_params(rng, input_dim=2, hidden=3)
        x = np.array([1.0, 2.0])
        p.hidden_w[1] = np.array([-1.0, -1.0])  # force z_1 < 0
        p.hidden_b[1] = -1.0
        _, cache = forward(p, x)
        assert cache.z[0, 1] < 0
        g = backward(p, cache, (1.0, 1.0))
        assert np.all(g.hidden_w[1] == 0.0)
        assert g.hidden_b[1] == 0.0

    def test_stale_cache_raises(self, rng):
        p = random_params(rng, hidden=5)
        q = random_params(rng, hidden=7)
        _, cache = forward(p, rng.normal(size=3))
        with pytest.raises(ValueError):
            backward(q, cache, (1.0, 0.0))

    def test_batched_backward_sums_pointwise_gradients(self, rng):
        p = random_params(rng)
        X = rng.normal(size=(4, 3))
        _, _, cache = forward_batch(p, X)
        ups = (rng.normal(size=4), rng.normal(size=4))
        total = flatten(backward(p, cache, ups))
        acc = np.zeros_like(total)
        for i in range(4):
            _, ci = forward(p, X[i])
            acc += flatten(backward(p, ci, (float(ups[0][i]), float(ups[1][i]))))
        np.testing.assert_allclose(total, acc, rtol=1e-12, atol=1e-14)


class TestInputGradient:
    def test_zero_upstream(self, rng):
        p = random_params(rng)
        assert np.all(input_gradient(p, rng.normal(size=3), (0.0, 0.0)) == 0.0)

    @pytest.mark.parametrize("seed", range(4))
    def test_matches_finite_differences(self, seed):
        rng = np.random.default_rng(100 + seed)
        p = random_params(rng, input_dim=5, hidden=6)
        x = rng.normal(size=5)
        y = rng.normal()
        pred, _ = forward(p, x)
        d_mu, d_s2 = gaussian_nll_gradients(
            np.array([pred.mu]), np.array([pred.sigma2]), np.array([y]))
        analytic = input_gradient(p, x, (float(d_mu[0]), float(d_s2[0])))

        def objective(v):
            q, _ = forward(p, v)
            return gaussian_nll(q, y)

        numeric = central_difference(objective, x)
        mask = np.abs(numeric) > 1e-7
        assert np.max(relative_errors(analytic, numeric)[mask]) < 1e-4

    def test_duplicate_columns_give_identical_entries(self, rng):
        p = random_params(rng, input_dim=2, hidden=4)
        p.hidden_w[:, 1] = p.hidden_w[:, 0]
        x = np.array([0.4, 0.4])
        g = input_gradient(p, x, (1.0, 0.5))
        assert g[0] == g[1]


class TestOptimizerStep:
    def test_sgd_zero_gradient_is_identity(self, rng):
        p = random_params(rng)
        state = init_optimizer_state(p)
        p2, _ = optimizer_step(p, zeros_like(p), state, lr=0.1, l2=0.0, kind="sgd")
        np.testing.assert_array_equal(flatten(p2), flatten(p))

    def test_sgd_scalar_example(self):
        p = zero_params(input_dim=1, hidden=1)
        p.mean_w = np.array([1.0])
        g = zeros_like(p)
        g.mean_w = np.array([2.0])
        p2, _ = optimizer_step(p, g, init_optimizer_state(p), lr=0.1, kind="sgd")
        assert p2.mean_w[0] == pytest.approx(0.8, abs=1e-15)

    def test_adam_three_steps_match_hand_recurrence(self, rng):
        p = random_params(rng, input_dim=2, hidden=2)
        state = init_optimizer_state(p)
        lr = 0.05
        grads = [random_params(rng, input_dim=2, hidden=2) for _ in range(3)]
        # hand-stepped Adam on the flat vector
        theta = flatten(p)
        m = np.zeros_like(theta)
        v = np.zeros_like(theta)
        for t, grad in enumerate(grads, start=1):
            g = flatten(grad)
            m = ADAM_BETA1 * m + (1 - ADAM_BETA1) * g
            v = ADAM_BETA2 * v + (1 - ADAM_BETA2) * g * g
            m_hat = m / (1 - ADAM_BETA1 ** t)
            v_hat = v / (1 - ADAM_BETA2 ** t)
            theta = theta - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        q = p
        for grad in grads:
            q, state = optimizer_step(q, grad, state, lr=lr, kind="adam")
        np.testing.assert_allclose(flatten(q), theta, rtol=1e-12, atol=1e-15)
        assert state.step_count == 3

    def test_adam_first_step_direction(self, rng):
        p = random_params(rng)
        g = random_params(rng)
        p2, _ = optimizer_step(p, g, init_optimizer_state(p), lr=0.01, kind="adam")
        delta = flatten(p2) - flatten(p)
        gv = flatten(g)
        expected = -0.01 * gv / (np.abs(gv) + ADAM_EPS)
        np.testing.assert_allclose(delta, expected, rtol=1e-6, atol=1e-12)

    def test_l2_applies_to_weights_not_biases(self, rng):
        p = random_params(rng)
        state = init_optimizer_state(p)
        p2, _ = optimizer_step(p, zeros_like(p), state, lr=1.0, l2=0.1, kind="sgd")
        np.testing.assert_allclose(p2.hidden_w, p.hidden_w * 0.9, rtol=1e-12)
        np.testing.assert_array_equal(p2.hidden_b, p.hidden_b)
        np.testing.assert_array_equal(p2.mean_b, p.mean_b)

    def test_nonfinite_gradient_raises_divergence(self, rng):
        p = random_params(rng)
        g = zeros_like(p)
        g.mean_w = np.array([np.nan] * 5)
        with pytest.raises(DivergenceError):
            optimizer_step(p, g, init_optimizer_state(p), lr=0.1, kind="adam")


def test_nll_terms_and_gradients_agree_with_scalar_form(rng):
    mu = rng.normal(size=6)
    s2 = rng.uniform(0.1, 2.0, size=6)
    y = rng.normal(size=6)
    terms = gaussian_nll_terms(mu, s2, y)
    for i in range(6):
        assert terms[i] == pytest.approx(
            gaussian_nll(PredictiveParams(mu[i], s2[i]), y[i]), rel=1e-14)
    d_mu, d_s2 = gaussian_nll_gradients(mu, s2, y)
    h = 1e-6
    num_mu = (gaussian_nll_terms(mu + h, s2, y) - gaussian_nll_terms(mu - h, s2, y)) / (2 * h)
    num_s2 = (gaussian_nll_terms(mu, s2 + h, y) - gaussian_nll_terms(mu, s2 - h, y)) / (2 * h)
    np.testing.assert_allclose(d_mu, num_mu, rtol=1e-6)
    np.testing.assert_allclose(d_s2, num_s2, rtol=1e-5)


def test_init_params_is_seed_deterministic():
    a = init_params(3, 4, np.random.default_rng(7))
    b = init_params(3, 4, np.random.default_rng(7))
    np.testing.assert_array_equal(flatten(a), flatten(b))
