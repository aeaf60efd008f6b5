"""Two-stage conformal prediction intervals for individual treatment effects.

Stage 1 runs weighted split-conformal twice: the treated half of the fitting
split trains an outcome model whose intervals are transferred to control
units (and vice versa) using propensity-ratio covariate-shift weights.  Each
calibration-split unit then gets an ITE interval by subtracting its observed
outcome.  Stage 2 removes the dependence on the (unknown) treatment
assignment via one of four variants:

* ``exact``   -- a secondary split-conformal step on the interval endpoints,
* ``naive``   -- a Bonferroni interval difference of per-arm intervals,
* ``inexact`` -- 40%/60% conditional-quantile plug-ins (no guarantee),
* ``x``       -- propensity-mixed per-arm endpoint means (no guarantee).

The guaranteed variants (exact, naive) split the miscoverage budget as
alpha/2 + alpha/2; the heuristic variants spend the full alpha in stage 1.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from cdite.conformal import (
    WeightedCalibration,
    _high_mass_upper_quantiles,
    _low_mass_thresholds,
    default_grid,
    intervals_from_profile,
    weighted_quantile_with_mass,
)
from cdite.density import eval_density, eval_density_profile, fit_conditional_density, make_reference
from cdite.learners import (
    LearnerConfig,
    MeanRegressor,
    ProbClassifier,
    fit_classifier,
    fit_mean,
    fit_quantile,
    repair_crossing,
    _as_matrix,
)
from cdite.rng import child_seed
from cdite.tabular import Dataset, split_random, subset

PROPENSITY_CLIP = (0.05, 0.95)

TREATED_TO_CONTROL = "treated_to_control"
CONTROL_TO_TREATED = "control_to_treated"


@dataclass(frozen=True)
class PropensityModel:
    """Treatment-probability model with outputs clipped away from {0, 1}."""

    classifier: ProbClassifier
    clip: tuple[float, float] = PROPENSITY_CLIP

    def predict(self, X) -> np.ndarray:
        return np.clip(self.classifier.predict_proba(X), self.clip[0], self.clip[1])


@dataclass(frozen=True)
class StageOneOutput:
    """Per-unit ITE intervals on the calibration split, pooled over both arms."""

    x: np.ndarray
    c_lo: np.ndarray
    c_hi: np.ndarray
    a: np.ndarray
    alpha1: float
    propensity: PropensityModel | None = None

    def __post_init__(self) -> None:
        if not (self.c_lo <= self.c_hi).all():
            raise ValueError("stage-one rows must satisfy c_lo <= c_hi")

    @property
    def n(self) -> int:
        return self.a.size


@dataclass(frozen=True)
class StageTwoExactFit:
    """Endpoint regressors plus the secondary conformal margin."""

    tau_lo: MeanRegressor
    tau_hi: MeanRegressor
    eta: float
    gamma: float


@dataclass(frozen=True)
class ItePipelineConfig:
    """End-to-end pipeline settings."""

    alpha: float = 0.1
    score_kind: str = "cd"  # "cd" | "cqr"
    variant: str = "exact"  # "exact" | "naive" | "inexact" | "x"
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    regressor: LearnerConfig = field(default_factory=LearnerConfig)
    propensity_learner: LearnerConfig = field(default_factory=LearnerConfig)
    grid_points: int = 1024
    grid_pad_sd: float = 4.0
    inflation: float = 1.2
    mass_side: str = "low"

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.score_kind not in ("cd", "cqr"):
            raise ValueError(f"unknown score_kind: {self.score_kind!r}")
        if self.variant not in ("exact", "naive", "inexact", "x"):
            raise ValueError(f"unknown variant: {self.variant!r}")

    @property
    def stage_one_alpha(self) -> float:
        # guaranteed variants split the budget; heuristic ones spend it all
        if self.variant in ("exact", "naive"):
            return self.alpha / 2.0
        return self.alpha

    @property
    def stage_two_gamma(self) -> float:
        return self.alpha / 2.0


def estimate_propensity(ds: Dataset, cfg: LearnerConfig | None = None) -> PropensityModel:
    """Fit the treatment-assignment probability on (X, A)."""
    if ds.treatment is None:
        raise ValueError("dataset has no treatment column")
    if ds.treatment.min() == ds.treatment.max():
        raise ValueError("both treatment arms must be present")
    clf = fit_classifier(ds.features, ds.treatment, cfg)
    return PropensityModel(classifier=clf)


def counterfactual_weight(pi_hat, direction: str):
    """Covariate-shift weight for transferring intervals across arms."""
    pi_hat = np.asarray(pi_hat, dtype=np.float64)
    if ((pi_hat <= 0) | (pi_hat >= 1)).any():
        raise ValueError("propensity must lie strictly in (0, 1)")
    if direction == TREATED_TO_CONTROL:
        out = (1.0 - pi_hat) / pi_hat
    elif direction == CONTROL_TO_TREATED:
        out = pi_hat / (1.0 - pi_hat)
    else:
        raise ValueError(f"unknown direction: {direction!r}")
    return float(out) if out.ndim == 0 else out


class _ArmScorer:
    """Per-arm stage-1 machinery: fits on the I1 arm, scores the I2 arm.

    The expensive pieces (density fit, calibration scores) do not depend on
    the miscoverage level, so one scorer serves every stage-2 variant.
    """

    def __init__(self, engine: "ItePipeline", arm: int) -> None:
        self.engine = engine
        self.arm = arm
        self.direction = TREATED_TO_CONTROL if arm == 1 else CONTROL_TO_TREATED
        cfg = engine.cfg
        i1, i2 = engine.i1, engine.i2

        tr_mask = i1.treatment == arm
        if tr_mask.sum() < 2:
            raise ValueError(f"arm {arm} nearly empty in the fitting split")
        self.X_train = i1.features[tr_mask]
        self.y_train = i1.outcome[tr_mask]
        ca_mask = i2.treatment == arm
        if not ca_mask.any():
            raise ValueError(f"arm {arm} empty in the calibration split")
        self.X_cal = i2.features[ca_mask]
        self.y_cal = i2.outcome[ca_mask]

        self.grid_spec = default_grid(self.y_train, cfg.grid_points, cfg.grid_pad_sd)
        self.grid = np.linspace(*self.grid_spec[:2], self.grid_spec[2])
        self.cal_weights = counterfactual_weight(engine.propensity.predict(self.X_cal), self.direction)

        self._cqr_models: dict[float, tuple] = {}
        if cfg.score_kind == "cd":
            ref = make_reference(self.y_train, cfg.inflation)
            self.density = fit_conditional_density(
                self.X_train, self.y_train, ref, cfg.learner, child_seed(engine.seed, "ref", arm)
            )
            self.cal_scores = eval_density(self.density, self.X_cal, self.y_cal)

    def _cqr(self, alpha1: float):
        key = round(alpha1, 12)
        if key not in self._cqr_models:
            cfg = self.engine.cfg
            lo_m = fit_quantile(self.X_train, self.y_train, alpha1 / 2.0, cfg.learner)
            hi_m = fit_quantile(self.X_train, self.y_train, 1.0 - alpha1 / 2.0, cfg.learner)
            from cdite.conformal import cqr_score

            lo_c, hi_c = repair_crossing(lo_m.predict(self.X_cal), hi_m.predict(self.X_cal))
            scores = cqr_score(lo_c, hi_c, self.y_cal)
            self._cqr_models[key] = (lo_m, hi_m, scores)
        return self._cqr_models[key]

    def interval_hulls(self, X, alpha1: float) -> tuple[np.ndarray, np.ndarray]:
        """Counterfactual interval hulls [lo, hi] at each covariate row."""
        X = _as_matrix(X)
        w_test = counterfactual_weight(self.engine.propensity.predict(X), self.direction)
        if self.engine.cfg.score_kind == "cd":
            if self.engine.cfg.mass_side == "low":
                t = _low_mass_thresholds(self.cal_scores, self.cal_weights, w_test, alpha1)
            else:
                t = np.array(
                    [
                        weighted_quantile_with_mass(
                            WeightedCalibration(self.cal_scores, self.cal_weights, float(wt)),
                            alpha1,
                            mass_side="high",
                        ).t_alpha
                        for wt in np.atleast_1d(w_test)
                    ]
                )
            profiles = eval_density_profile(self.density, X, self.grid)
            lo = np.empty(X.shape[0])
            hi = np.empty(X.shape[0])
            for i in range(X.shape[0]):
                iv = intervals_from_profile(profiles[i], self.grid, t[i])
                lo[i], hi[i] = iv.hull
            return lo, hi
        lo_m, hi_m, scores = self._cqr(alpha1)
        q = _high_mass_upper_quantiles(scores, self.cal_weights, w_test, 1.0 - alpha1)
        lo_t, hi_t = repair_crossing(lo_m.predict(X), hi_m.predict(X))
        lo = lo_t - q
        hi = hi_t + q
        inf_mask = ~np.isfinite(q)
        lo[inf_mask] = self.grid_spec[0]
        hi[inf_mask] = self.grid_spec[1]
        return lo, hi


class ItePipeline:
    """Fitted stage-1 state shared by every stage-2 variant.

    Splitting, propensity estimation, and per-arm scorers are computed once;
    stage-1 outputs are cached per miscoverage level.  Everything is a pure
    function of (dataset, config, seed).
    """

    def __init__(self, ds: Dataset, cfg: ItePipelineConfig, seed: int) -> None:
        if ds.treatment is None or ds.outcome is None:
            raise ValueError("dataset needs treatment and outcome columns")
        self.cfg = cfg
        self.seed = seed
        split = split_random(ds.n, [0.5, 0.5], child_seed(seed, "halves"))
        self.i1 = subset(ds, split.parts[0])
        self.i2 = subset(ds, split.parts[1])
        for part, name in ((self.i1, "fitting"), (self.i2, "calibration")):
            if part.treatment.min() == part.treatment.max():
                raise ValueError(f"one treatment arm is empty in the {name} split")
        self.propensity = estimate_propensity(self.i1, cfg.propensity_learner)
        self._scorers: dict[int, _ArmScorer] = {}
        self._stage_one: dict[float, StageOneOutput] = {}

    def scorer(self, arm: int) -> _ArmScorer:
        if arm not in self._scorers:
            self._scorers[arm] = _ArmScorer(self, arm)
        return self._scorers[arm]

    def stage_one(self, alpha1: float) -> StageOneOutput:
        key = round(alpha1, 12)
        if key in self._stage_one:
            return self._stage_one[key]
        i2 = self.i2
        n2 = i2.n
        c_lo = np.empty(n2)
        c_hi = np.empty(n2)
        for arm in (0, 1):
            # units in this arm receive an interval for their counterfactual
            # outcome, produced by the scorer trained on the opposite arm
            mask = i2.treatment == arm
            lo, hi = self.scorer(1 - arm).interval_hulls(i2.features[mask], alpha1)
            y = i2.outcome[mask]
            c_lo[mask], c_hi[mask] = ite_interval_from_counterfactual(y, lo, hi, arm)
        out = StageOneOutput(
            x=i2.features,
            c_lo=c_lo,
            c_hi=c_hi,
            a=i2.treatment.astype(np.int64),
            alpha1=alpha1,
            propensity=self.propensity,
        )
        self._stage_one[key] = out
        return out

    def predict(self, X_test, variant: str | None = None) -> np.ndarray:
        """Dispatch on the stage-2 variant; returns an (n, 2) array.

        ``variant`` overrides the configured one, which lets several variants
        share one fitted stage 1.
        """
        X_test = _as_matrix(X_test)
        cfg = self.cfg
        if variant is None:
            variant = cfg.variant
        if variant != cfg.variant:
            cfg = dataclasses.replace(cfg, variant=variant)
        if variant == "exact":
            s1 = self.stage_one(cfg.stage_one_alpha)
            fit = stage_two_exact(s1, cfg.stage_two_gamma, cfg.regressor, self.seed)
            lo, hi = predict_exact(fit, X_test)
        elif variant == "naive":
            lo1, hi1 = self.scorer(1).interval_hulls(X_test, cfg.stage_one_alpha)
            lo0, hi0 = self.scorer(0).interval_hulls(X_test, cfg.stage_one_alpha)
            lo, hi = lo1 - hi0, hi1 - lo0
        elif variant == "inexact":
            predictor = stage_two_inexact(self.stage_one(cfg.stage_one_alpha), cfg.regressor, self.seed)
            lo, hi = predictor(X_test)
        elif variant == "x":
            predictor = stage_two_cdx(
                self.stage_one(cfg.stage_one_alpha), self.propensity, cfg.regressor, self.seed
            )
            lo, hi = predictor(X_test)
        else:
            raise ValueError(f"unknown variant: {variant!r}")
        return np.column_stack([lo, hi])


def stage_one(ds: Dataset, cfg: ItePipelineConfig, seed: int) -> StageOneOutput:
    """Stage-1 ITE intervals for every calibration-split unit."""
    return ItePipeline(ds, cfg, seed).stage_one(cfg.stage_one_alpha)


def _split_conformal_quantile(scores: np.ndarray, gamma: float) -> float:
    """Finite-sample (1-gamma) quantile with the split-conformal index rule."""
    m = scores.size
    k = math.ceil((1.0 - gamma) * (m + 1))
    k = min(max(k, 1), m)
    return float(np.sort(scores)[k - 1])


def stage_two_exact(
    s1: StageOneOutput, gamma: float, cfg: LearnerConfig | None = None, seed: int = 0
) -> StageTwoExactFit:
    """Secondary split-conformal fit on the stage-1 interval endpoints."""
    if s1.n < 2:
        raise ValueError("need at least 2 stage-one rows")
    split = split_random(s1.n, [0.5, 0.5], child_seed(seed, "stage2"))
    tr, ca = split.parts
    tau_lo = fit_mean(s1.x[tr], s1.c_lo[tr], cfg)
    tau_hi = fit_mean(s1.x[tr], s1.c_hi[tr], cfg)
    v = np.maximum(tau_lo.predict(s1.x[ca]) - s1.c_lo[ca], s1.c_hi[ca] - tau_hi.predict(s1.x[ca]))
    eta = _split_conformal_quantile(v, gamma)
    return StageTwoExactFit(tau_lo=tau_lo, tau_hi=tau_hi, eta=eta, gamma=gamma)


def predict_exact(fit: StageTwoExactFit, X) -> tuple[np.ndarray, np.ndarray]:
    """[tau_lo(x) - eta, tau_hi(x) + eta], collapsed to the midpoint on crossing."""
    X = _as_matrix(X)
    lo = fit.tau_lo.predict(X) - fit.eta
    hi = fit.tau_hi.predict(X) + fit.eta
    crossed = lo > hi
    if crossed.any():
        mid = 0.5 * (lo[crossed] + hi[crossed])
        lo[crossed] = mid
        hi[crossed] = mid
    return lo, hi


def stage_two_naive(c1: tuple[float, float], c0: tuple[float, float]) -> tuple[float, float]:
    """Bonferroni interval difference of per-arm interval hulls."""
    return (c1[0] - c0[1], c1[1] - c0[0])


def ite_interval_from_counterfactual(y, lo, hi, arm: int):
    """ITE interval for a unit from its outcome and counterfactual interval.

    Treated units know Y(1) = y and get [y - hi, y - lo]; control units know
    Y(0) = y and get [lo - y, hi - y].  Width is preserved either way.
    """
    if arm == 1:
        return y - hi, y - lo
    if arm == 0:
        return lo - y, hi - y
    raise ValueError("arm must be 0 or 1")


def mix_endpoints(pi, e1, e0):
    """Propensity-weighted convex combination of per-arm interval endpoints."""
    pi = np.asarray(pi, dtype=np.float64)
    if ((pi < 0) | (pi > 1)).any():
        raise ValueError("pi must lie in [0, 1]")
    return pi * np.asarray(e1, dtype=np.float64) + (1.0 - pi) * np.asarray(e0, dtype=np.float64)


def stage_two_inexact(s1: StageOneOutput, cfg: LearnerConfig | None = None, seed: int = 0):
    """40%/60% conditional-quantile plug-in predictor (no guarantee)."""
    if s1.n < 2:
        raise ValueError("need at least 2 stage-one rows")
    q_lo = fit_quantile(s1.x, s1.c_lo, 0.40, cfg)
    q_hi = fit_quantile(s1.x, s1.c_hi, 0.60, cfg)

    def predict(X):
        X = _as_matrix(X)
        return repair_crossing(q_lo.predict(X), q_hi.predict(X))

    return predict


def stage_two_cdx(
    s1: StageOneOutput,
    prop: PropensityModel,
    cfg: LearnerConfig | None = None,
    seed: int = 0,
):
    """Propensity-mixed per-arm endpoint-mean predictor (no guarantee)."""
    models = {}
    for arm in (0, 1):
        mask = s1.a == arm
        if mask.sum() < 2:
            raise ValueError(f"arm {arm} absent from stage-one rows")
        models[arm] = (
            fit_mean(s1.x[mask], s1.c_lo[mask], cfg),
            fit_mean(s1.x[mask], s1.c_hi[mask], cfg),
        )

    def predict(X):
        X = _as_matrix(X)
        pi = prop.predict(X)
        lo0, hi0 = repair_crossing(models[0][0].predict(X), models[0][1].predict(X))
        lo1, hi1 = repair_crossing(models[1][0].predict(X), models[1][1].predict(X))
        return mix_endpoints(pi, lo1, lo0), mix_endpoints(pi, hi1, hi0)

    return predict


def run_pipeline(ds: Dataset, cfg: ItePipelineConfig, x_test, seed: int) -> np.ndarray:
    """Fit the full two-stage pipeline and predict ITE intervals for x_test."""
    return ItePipeline(ds, cfg, seed).predict(x_test)
