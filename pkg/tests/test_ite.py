"""Two-stage pipeline tests: weights, transforms, variants, determinism."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdite.ite import (
    CONTROL_TO_TREATED,
    TREATED_TO_CONTROL,
    ItePipeline,
    ItePipelineConfig,
    StageOneOutput,
    StageTwoExactFit,
    _split_conformal_quantile,
    counterfactual_weight,
    estimate_propensity,
    ite_interval_from_counterfactual,
    mix_endpoints,
    predict_exact,
    run_pipeline,
    stage_one,
    stage_two_cdx,
    stage_two_exact,
    stage_two_inexact,
    stage_two_naive,
)
from cdite.learners import LearnerConfig, fit_mean
from cdite.tabular import Dataset

CHEAP = LearnerConfig(kind="logistic", iterations=50)


def _sim(n, seed, d=2):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(n, d))
    pi = 0.3 + 0.4 * x[:, 0]
    a = (rng.uniform(size=n) < pi).astype(float)
    y1 = x[:, 0] + 1.0 + rng.normal(size=n) * 0.5
    y0 = x[:, 0] + rng.normal(size=n) * 0.5
    return Dataset(
        features=x, treatment=a, outcome=np.where(a == 1, y1, y0), y1=y1, y0=y0, true_ite=y1 - y0
    )


def _cheap_cfg(**kw):
    base = dict(
        alpha=0.2,
        score_kind="cd",
        variant="exact",
        learner=CHEAP,
        regressor=CHEAP,
        propensity_learner=CHEAP,
        grid_points=256,
    )
    base.update(kw)
    return ItePipelineConfig(**base)


class TestConfig:
    def test_alpha_budget_split(self):
        assert _cheap_cfg(variant="exact").stage_one_alpha == pytest.approx(0.1)
        assert _cheap_cfg(variant="naive").stage_one_alpha == pytest.approx(0.1)
        assert _cheap_cfg(variant="inexact").stage_one_alpha == pytest.approx(0.2)
        assert _cheap_cfg(variant="x").stage_one_alpha == pytest.approx(0.2)
        assert _cheap_cfg(variant="exact").stage_two_gamma == pytest.approx(0.1)

    @pytest.mark.parametrize(
        "kwargs",
        [{"alpha": 0.0}, {"alpha": 1.0}, {"score_kind": "kde"}, {"variant": "bonferroni2"}],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValueError):
            _cheap_cfg(**kwargs)


class TestCounterfactualWeight:
    def test_hand_values(self):
        assert counterfactual_weight(0.25, TREATED_TO_CONTROL) == pytest.approx(3.0)
        assert counterfactual_weight(0.25, CONTROL_TO_TREATED) == pytest.approx(1.0 / 3.0)

    @settings(max_examples=300, deadline=None)
    @given(st.floats(0.01, 0.99))
    def test_reciprocity(self, pi):
        w1 = counterfactual_weight(pi, TREATED_TO_CONTROL)
        w2 = counterfactual_weight(pi, CONTROL_TO_TREATED)
        assert w1 * w2 == pytest.approx(1.0, rel=1e-12)

    def test_rejects_boundary_propensity(self):
        with pytest.raises(ValueError, match="strictly"):
            counterfactual_weight(np.array([0.0, 0.5]), TREATED_TO_CONTROL)
        with pytest.raises(ValueError, match="direction"):
            counterfactual_weight(0.5, "sideways")


class TestIteTransform:
    def test_treated_hand_case(self):
        # Y(1) = 2 observed, counterfactual Y(0) in [0, 1] => ITE in [1, 2]
        lo, hi = ite_interval_from_counterfactual(2.0, 0.0, 1.0, arm=1)
        assert (lo, hi) == (1.0, 2.0)

    def test_control_hand_case(self):
        # Y(0) = 1 observed, counterfactual Y(1) in [2, 4] => ITE in [1, 3]
        lo, hi = ite_interval_from_counterfactual(1.0, 2.0, 4.0, arm=0)
        assert (lo, hi) == (1.0, 3.0)

    def test_width_preserved_exactly_on_dyadics(self):
        # dyadic inputs make every subtraction exact, so width equality is ==
        rng = np.random.default_rng(0)
        vals = rng.integers(-(2**20), 2**20, size=(1000, 3)) / 256.0
        for y, a, b in vals:
            lo, hi = min(a, b), max(a, b)
            for arm in (0, 1):
                c_lo, c_hi = ite_interval_from_counterfactual(y, lo, hi, arm)
                assert c_hi - c_lo == hi - lo

    def test_rejects_bad_arm(self):
        with pytest.raises(ValueError, match="arm"):
            ite_interval_from_counterfactual(0.0, 0.0, 1.0, arm=2)


class TestSplitConformalQuantile:
    def test_matches_counting_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            m = int(rng.integers(1, 40))
            v = rng.normal(size=m)
            gamma = float(rng.uniform(0.02, 0.5))
            got = _split_conformal_quantile(v, gamma)
            # oracle: smallest value with at least ceil((1-gamma)(m+1)) of
            # the scores at or below it, clamped to the sample
            k = int(np.ceil((1.0 - gamma) * (m + 1)))
            k = min(max(k, 1), m)
            assert got == np.sort(v)[k - 1]


class TestStageOne:
    def test_output_shapes_and_order(self):
        ds = _sim(400, 2)
        out = stage_one(ds, _cheap_cfg(), seed=0)
        assert out.n == 200
        assert out.x.shape == (200, 2)
        assert (out.c_lo <= out.c_hi).all()
        assert set(np.unique(out.a)) <= {0, 1}
        assert out.alpha1 == pytest.approx(0.1)

    def test_matches_manual_transform(self):
        # recompute each row from the opposite-arm hulls and the observed y
        ds = _sim(400, 3)
        cfg = _cheap_cfg()
        pipe = ItePipeline(ds, cfg, seed=0)
        out = pipe.stage_one(cfg.stage_one_alpha)
        i2 = pipe.i2
        for arm in (0, 1):
            mask = i2.treatment == arm
            lo, hi = pipe.scorer(1 - arm).interval_hulls(i2.features[mask], cfg.stage_one_alpha)
            exp_lo, exp_hi = ite_interval_from_counterfactual(i2.outcome[mask], lo, hi, arm)
            np.testing.assert_array_equal(out.c_lo[mask], exp_lo)
            np.testing.assert_array_equal(out.c_hi[mask], exp_hi)

    def test_validation(self):
        with pytest.raises(ValueError, match="c_lo <= c_hi"):
            StageOneOutput(
                x=np.zeros((1, 1)),
                c_lo=np.array([1.0]),
                c_hi=np.array([0.0]),
                a=np.array([1]),
                alpha1=0.1,
            )


class TestStageTwo:
    def _s1(self, n=300, seed=4):
        ds = _sim(n, seed)
        return stage_one(ds, _cheap_cfg(), seed=1)

    def test_naive_width_additivity(self):
        rng = np.random.default_rng(5)
        vals = rng.integers(-(2**20), 2**20, size=(1000, 4)) / 256.0
        for a, b, c, d in vals:
            c1 = (min(a, b), max(a, b))
            c0 = (min(c, d), max(c, d))
            lo, hi = stage_two_naive(c1, c0)
            assert hi - lo == (c1[1] - c1[0]) + (c0[1] - c0[0])

    def test_exact_margin_from_counting_rule(self):
        s1 = self._s1()
        fit = stage_two_exact(s1, gamma=0.1, cfg=CHEAP, seed=2)
        assert np.isfinite(fit.eta)
        lo, hi = predict_exact(fit, s1.x[:20])
        assert (lo <= hi).all()

    def test_exact_midpoint_collapse_on_crossing(self):
        # force tau_lo above tau_hi so the interval must collapse
        x = np.random.default_rng(6).uniform(size=(50, 1))
        hi_m = fit_mean(x, np.full(50, -1.0), CHEAP)
        lo_m = fit_mean(x, np.full(50, 1.0), CHEAP)
        fit = StageTwoExactFit(tau_lo=lo_m, tau_hi=hi_m, eta=0.0, gamma=0.1)
        lo, hi = predict_exact(fit, x[:5])
        np.testing.assert_allclose(lo, hi)
        np.testing.assert_allclose(lo, 0.0, atol=1e-6)

    def test_inexact_repairs_crossing(self):
        s1 = self._s1()
        predictor = stage_two_inexact(s1, CHEAP, seed=3)
        lo, hi = predictor(s1.x[:50])
        assert (lo <= hi).all()

    def test_cdx_endpoints_convex(self):
        s1 = self._s1()
        predictor = stage_two_cdx(s1, s1.propensity, CHEAP, seed=3)
        lo, hi = predictor(s1.x[:50])
        assert (lo <= hi).all()

    def test_mix_endpoints_convexity_exact(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            pi = rng.integers(0, 257) / 256.0
            e1, e0 = rng.integers(-(2**18), 2**18, size=2) / 256.0
            m = mix_endpoints(pi, e1, e0)
            assert min(e0, e1) <= m <= max(e0, e1)

    def test_mix_endpoints_rejects_bad_pi(self):
        with pytest.raises(ValueError, match="pi"):
            mix_endpoints(1.5, 0.0, 1.0)


class TestPropensity:
    def test_predictions_clipped(self):
        ds = _sim(500, 8)
        model = estimate_propensity(ds, CHEAP)
        p = model.predict(ds.features)
        assert p.min() >= 0.05 and p.max() <= 0.95

    def test_requires_treatment(self):
        with pytest.raises(ValueError, match="treatment"):
            estimate_propensity(Dataset(features=np.zeros((4, 1))))


class TestPipeline:
    @pytest.mark.parametrize("variant", ["exact", "naive", "inexact", "x"])
    @pytest.mark.parametrize("score_kind", ["cd", "cqr"])
    def test_all_variants_produce_valid_intervals(self, variant, score_kind):
        ds = _sim(400, 9)
        cfg = _cheap_cfg(variant=variant, score_kind=score_kind)
        out = run_pipeline(ds, cfg, ds.features[:30], seed=5)
        assert out.shape == (30, 2)
        assert np.isfinite(out).all()
        assert (out[:, 0] <= out[:, 1]).all()

    def test_deterministic(self):
        ds = _sim(400, 10)
        cfg = _cheap_cfg(variant="inexact")
        a = run_pipeline(ds, cfg, ds.features[:10], seed=6)
        b = run_pipeline(ds, cfg, ds.features[:10], seed=6)
        np.testing.assert_array_equal(a, b)

    def test_seed_matters(self):
        ds = _sim(400, 11)
        cfg = _cheap_cfg(variant="inexact")
        a = run_pipeline(ds, cfg, ds.features[:10], seed=1)
        b = run_pipeline(ds, cfg, ds.features[:10], seed=2)
        assert not np.array_equal(a, b)

    def test_variant_override_shares_stage_one(self):
        ds = _sim(400, 12)
        pipe = ItePipeline(ds, _cheap_cfg(variant="exact"), seed=7)
        out_naive = pipe.predict(ds.features[:5], variant="naive")
        direct = run_pipeline(ds, _cheap_cfg(variant="naive"), ds.features[:5], seed=7)
        np.testing.assert_allclose(out_naive, direct)

    def test_naive_wider_than_inexact_on_average(self):
        # the Bonferroni construction pays for its guarantee with width
        ds = _sim(800, 13)
        pipe = ItePipeline(ds, _cheap_cfg(), seed=8)
        naive = pipe.predict(ds.features[:50], variant="naive")
        inexact = pipe.predict(ds.features[:50], variant="inexact")
        assert (naive[:, 1] - naive[:, 0]).mean() > (inexact[:, 1] - inexact[:, 0]).mean()

    def test_requires_treatment_and_outcome(self):
        with pytest.raises(ValueError, match="treatment"):
            run_pipeline(Dataset(features=np.zeros((10, 1))), _cheap_cfg(), np.zeros((1, 1)), 0)
