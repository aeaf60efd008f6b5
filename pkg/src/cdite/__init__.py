"""Conformal prediction intervals for individual treatment effects.

Conditional-density conformity scores (estimated with a reference-distribution
classifier), weighted split-conformal calibration under covariate shift, a
two-stage ITE pipeline with four composition variants, and a simulation
benchmark harness.
"""

from cdite.tabular import Dataset, SplitIndex, load_csv, write_csv, split_random, subset
from cdite.learners import LearnerConfig, ProbClassifier, MeanRegressor, QuantileRegressor
from cdite.density import (
    ReferenceDistribution,
    ConditionalDensityModel,
    make_reference,
    sample_reference,
    fit_conditional_density,
    eval_density,
)
from cdite.conformal import (
    WeightedCalibration,
    ConformalThreshold,
    IntervalSet,
    normalize_weights,
    weighted_quantile_with_mass,
    density_superlevel_set,
    wcp_interval_cd,
    wcp_interval_cqr,
    cqr_score,
)
from cdite.ite import (
    ItePipelineConfig,
    PropensityModel,
    StageOneOutput,
    StageTwoExactFit,
    estimate_propensity,
    counterfactual_weight,
    stage_one,
    stage_two_exact,
    predict_exact,
    stage_two_naive,
    stage_two_inexact,
    stage_two_cdx,
    ite_interval_from_counterfactual,
    mix_endpoints,
    run_pipeline,
)
from cdite.simulation import ScenarioConfig, GeneratedData, gen_scenario, oracle_ite_width
from cdite.evaluation import (
    ExperimentConfig,
    MetricsRow,
    empirical_coverage,
    average_length,
    run_experiment,
    write_report,
)

__version__ = "0.1.0"
