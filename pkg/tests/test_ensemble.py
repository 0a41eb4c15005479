"""Aggregation identities and the model-variance gradient."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_ensemble
from modens.ensemble import (Ensemble, aggregate, aggregate_arrays,
                             ensemble_nll, ensemble_predict, init_ensemble,
                             mod_variance_gradient)
from modens.network import PredictiveParams, flatten, forward, gaussian_nll


def preds(mus, sigma2s):
    return [PredictiveParams(m, s) for m, s in zip(mus, sigma2s)]


class TestAggregate:
    def test_worked_example(self):
        out = aggregate(preds([1, 2, 3, 4], [1, 1, 1, 1]))
        assert out.mu_bar == 2.5
        assert out.sigma2_eps == 1.0
        assert out.sigma2_mod == 1.25
        assert out.sigma2_bar == 2.25

    def test_equal_means_have_zero_model_variance(self):
        out = aggregate(preds([0.7, 0.7, 0.7], [0.1, 0.2, 0.3]))
        assert out.sigma2_mod == 0.0

    def test_two_point_variance(self):
        out = aggregate(preds([0.0, 1.0], [0.5, 0.5]))
        assert out.sigma2_mod == 0.25

    def test_decomposition_is_exact_sum(self, rng):
        for _ in range(50):
            mus = rng.normal(size=5)
            s2s = rng.uniform(0.01, 1.0, size=5)
            out = aggregate(preds(mus, s2s))
            assert out.sigma2_bar == out.sigma2_eps + out.sigma2_mod

    def test_rejects_single_member(self):
        with pytest.raises(ValueError):
            aggregate(preds([1.0], [1.0]))

    @given(st.permutations(list(range(5))))
    @settings(max_examples=30, deadline=None)
    def test_permutation_invariant(self, perm):
        rng = np.random.default_rng(42)
        mus = rng.normal(size=5)
        s2s = rng.uniform(0.1, 1.0, size=5)
        base = aggregate(preds(mus, s2s))
        shuffled = aggregate(preds(mus[perm], s2s[perm]))
        assert shuffled.mu_bar == pytest.approx(base.mu_bar, rel=1e-14)
        assert shuffled.sigma2_bar == pytest.approx(base.sigma2_bar, rel=1e-14)


class TestEnsembleNLL:
    def test_standard_normal_at_mode(self):
        out = aggregate(preds([0.0, 0.0], [1.0, 1.0]))
        assert ensemble_nll(out, 0.0) == pytest.approx(0.9189385332046727, abs=1e-12)

    def test_degenerate_ensemble_matches_single_member(self):
        p = PredictiveParams(0.3, 0.04)
        out = aggregate([p, p, p])
        assert out.sigma2_mod == 0.0
        assert ensemble_nll(out, 0.5) == pytest.approx(gaussian_nll(p, 0.5), rel=1e-14)

    def test_mixed_members_frozen_value(self):
        # sigma2_eps = 0.25, sigma2_mod = popvar([0,1]) = 0.25, so the
        # collapsed distribution is N(0.5, 0.5); at its mean the NLL is
        # 0.5*ln(2*pi*0.5) = 0.5*ln(pi), frozen from a 30-digit evaluation.
        out = aggregate(preds([0.0, 1.0], [0.25, 0.25]))
        assert out.sigma2_bar == 0.5
        assert ensemble_nll(out, 0.5) == pytest.approx(0.572364942924700087, abs=1e-12)

    def test_minimized_at_observed_target(self):
        y = 0.42
        grid = y + np.linspace(-0.5, 0.5, 201)  # contains y exactly
        vals = [ensemble_nll(aggregate(preds([m, m + 0.1], [0.1, 0.1])), y)
                for m in grid - 0.05]  # mu_bar = m + 0.05
        assert grid[int(np.argmin(vals))] == pytest.approx(y, abs=1e-12)


class TestModVarianceGradient:
    def test_worked_example(self):
        np.testing.assert_allclose(mod_variance_gradient(np.array([1.0, 2, 3, 4])),
                                   [-0.75, -0.25, 0.25, 0.75], rtol=1e-15)

    def test_equal_means_give_zero(self):
        assert np.all(mod_variance_gradient(np.full(4, 0.3)) == 0.0)

    def test_entries_sum_to_zero(self, rng):
        for _ in range(20):
            g = mod_variance_gradient(rng.normal(size=6))
            assert abs(g.sum()) < 1e-15

    def test_matches_finite_differences_tightly(self, rng):
        # the function is quadratic, so central differences are near-exact
        def popvar(m):
            return float(np.mean((m - m.mean()) ** 2))

        for _ in range(20):
            mus = rng.normal(size=5)
            analytic = mod_variance_gradient(mus)
            h = 1e-6
            numeric = np.empty(5)
            for i in range(5):
                e = np.zeros(5)
                e[i] = h
                numeric[i] = (popvar(mus + e) - popvar(mus - e)) / (2 * h)
            np.testing.assert_allclose(analytic, numeric, rtol=1e-8, atol=1e-12)

    def test_translation_invariance_of_variance(self, rng):
        mus = rng.normal(size=4)
        _, _, v1, _ = aggregate_arrays(mus[:, None], np.ones((4, 1)))
        _, _, v2, _ = aggregate_arrays((mus + 5.0)[:, None], np.ones((4, 1)))
        assert v1[0] == pytest.approx(v2[0], rel=1e-12)

    def test_batch_shape(self, rng):
        g = mod_variance_gradient(rng.normal(size=(3, 7)))
        assert g.shape == (3, 7)
        np.testing.assert_allclose(g.sum(axis=0), 0.0, atol=1e-15)


class TestEnsembleConstruction:
    def test_requires_two_members(self, rng):
        from conftest import random_params
        with pytest.raises(ValueError):
            Ensemble([random_params(rng)])

    def test_rejects_mismatched_architectures(self, rng):
        from conftest import random_params
        with pytest.raises(ValueError):
            Ensemble([random_params(rng, hidden=4), random_params(rng, hidden=5)])

    def test_init_ensemble_members_differ_but_are_seed_stable(self):
        a = init_ensemble(3, 2, 4, seed=11)
        b = init_ensemble(3, 2, 4, seed=11)
        for ma, mb in zip(a.members, b.members):
            np.testing.assert_array_equal(flatten(ma), flatten(mb))
        assert not np.array_equal(flatten(a.members[0]), flatten(a.members[1]))

    def test_predict_matches_pointwise_aggregation(self, rng):
        ens = random_ensemble(rng, n_members=3, input_dim=2)
        X = rng.normal(size=(4, 2))
        mu_bar, s2_eps, s2_mod, s2_bar = ensemble_predict(ens, X)
        for i in range(4):
            member_preds = [forward(m, X[i])[0] for m in ens.members]
            out = aggregate(member_preds)
            assert mu_bar[i] == pytest.approx(out.mu_bar, rel=1e-14)
            assert s2_bar[i] == pytest.approx(out.sigma2_bar, rel=1e-14)
