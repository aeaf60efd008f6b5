"""Generating-process tests: closed-form checks, moments, and determinism."""

import numpy as np
import pytest

from cdite.simulation import (
    GeneratedData,
    ScenarioConfig,
    gen_covariates,
    gen_scenario,
    mean_surface,
    oracle_ite_width,
    true_propensity,
)


class TestScenarioConfig:
    def test_labels(self):
        assert ScenarioConfig(gamma=1).label == "homoscedastic/no-effect"
        assert (
            ScenarioConfig(sigma_kind="heteroscedastic", gamma=0).label
            == "heteroscedastic/heterogeneous"
        )

    @pytest.mark.parametrize(
        "kwargs",
        [{"n": 0}, {"n_test": 0}, {"d": 1}, {"sigma_kind": "cauchy"}, {"gamma": 2}],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValueError):
            ScenarioConfig(**kwargs)


class TestPropensity:
    def test_closed_form_value(self):
        # (1 + 20 * 0.25 * 0.75^3) / 4 computed by hand
        assert true_propensity(0.25) == pytest.approx(0.77734375)

    def test_boundary_values(self):
        assert true_propensity(0.0) == pytest.approx(0.25)
        assert true_propensity(1.0) == pytest.approx(0.25)

    def test_maximum_at_beta_mode(self):
        xs = np.linspace(0, 1, 2001)
        p = true_propensity(xs)
        assert xs[np.argmax(p)] == pytest.approx(0.25, abs=1e-3)
        assert p.min() >= 0.25 and p.max() <= 0.78

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError, match="0, 1"):
            true_propensity(1.5)


class TestMeanSurface:
    def test_midpoint_and_symmetry(self):
        assert mean_surface(0.5) == pytest.approx(1.0)
        u = np.linspace(0, 0.5, 20)
        np.testing.assert_allclose(mean_surface(0.5 + u) + mean_surface(0.5 - u), 2.0, atol=1e-12)

    def test_range_and_monotone(self):
        xs = np.linspace(0, 1, 100)
        g = mean_surface(xs)
        assert (np.diff(g) > 0).all()
        assert 0.0 < g[0] < 0.01 and 1.99 < g[-1] < 2.0


class TestGenCovariates:
    def test_shape_and_support(self):
        x = gen_covariates(500, 10, seed=0)
        assert x.shape == (500, 10)
        assert x.min() > 0.0 and x.max() < 1.0

    def test_deterministic(self):
        np.testing.assert_array_equal(gen_covariates(50, 3, seed=1), gen_covariates(50, 3, seed=1))


class TestGenScenario:
    def test_shapes(self):
        data = gen_scenario(ScenarioConfig(n=300, n_test=80, gamma=1, seed=0))
        assert isinstance(data, GeneratedData)
        assert data.train.n == 300 and data.test.n == 80
        assert data.true_pi.shape == (300,)

    def test_sutva_consistency(self):
        data = gen_scenario(ScenarioConfig(n=500, gamma=0, seed=1))
        tr = data.train
        np.testing.assert_array_equal(tr.outcome, np.where(tr.treatment == 1, tr.y1, tr.y0))
        np.testing.assert_array_equal(tr.true_ite, tr.y1 - tr.y0)

    def test_true_pi_matches_formula(self):
        data = gen_scenario(ScenarioConfig(n=200, gamma=1, seed=2))
        np.testing.assert_allclose(data.true_pi, true_propensity(data.train.features[:, 0]))

    def test_treatment_rate_near_expected(self):
        # E[pi] = (1 + E[beta(2,4) pdf]) / 4 = 1/2 since the pdf integrates to 1
        data = gen_scenario(ScenarioConfig(n=20000, gamma=1, seed=3))
        assert abs(data.train.treatment.mean() - 0.5) < 0.02

    def test_no_effect_means_centered_ite(self):
        data = gen_scenario(ScenarioConfig(n=20000, gamma=1, seed=4))
        # gamma = 1: ITE is a pure noise difference with variance 2
        assert abs(data.train.true_ite.mean()) < 0.05
        assert abs(data.train.true_ite.var() - 2.0) < 0.1

    def test_heterogeneous_effect_tracks_mean_surface(self):
        data = gen_scenario(ScenarioConfig(n=20000, gamma=0, seed=5))
        x = data.train.features
        m = mean_surface(x[:, 0]) * mean_surface(x[:, 1])
        resid = data.train.true_ite - m
        assert abs(resid.mean()) < 0.05

    def test_heteroscedastic_noise_variance(self):
        # sigma(x) = -log(x1) has E[sigma^2] = 2 under the uniform marginal
        data = gen_scenario(
            ScenarioConfig(n=20000, sigma_kind="heteroscedastic", gamma=1, seed=6)
        )
        noise = data.train.y1 - mean_surface(data.train.features[:, 0]) * mean_surface(
            data.train.features[:, 1]
        )
        assert abs(noise.var() - 2.0) < 0.15

    def test_deterministic_and_seed_sensitive(self):
        a = gen_scenario(ScenarioConfig(n=100, gamma=1, seed=7))
        b = gen_scenario(ScenarioConfig(n=100, gamma=1, seed=7))
        c = gen_scenario(ScenarioConfig(n=100, gamma=1, seed=8))
        np.testing.assert_array_equal(a.train.outcome, b.train.outcome)
        assert not np.array_equal(a.train.outcome, c.train.outcome)


class TestOracleWidth:
    def test_homoscedastic_value(self):
        # 2 * z_{0.95} * sqrt(2) = 4.6527 at the 90% level
        w = oracle_ite_width(ScenarioConfig(gamma=1), alpha=0.1)
        assert w == pytest.approx(4.6527, abs=1e-3)

    def test_heteroscedastic_scales_with_noise(self):
        cfg = ScenarioConfig(sigma_kind="heteroscedastic", gamma=1)
        w = oracle_ite_width(cfg, alpha=0.1, x1=np.array([np.exp(-1.0)]))
        assert w[0] == pytest.approx(4.6527, abs=1e-3)
        with pytest.raises(ValueError, match="x1"):
            oracle_ite_width(cfg, alpha=0.1)

    def test_rejects_bad_alpha(self):
        with pytest.raises(ValueError, match="alpha"):
            oracle_ite_width(ScenarioConfig(gamma=1), alpha=0.0)
