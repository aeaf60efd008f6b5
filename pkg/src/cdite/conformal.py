"""Weighted split-conformal machinery.

Covers: normalized covariate-shift weights, the weighted quantile with a
point mass for the (unknown) test score, density superlevel-set prediction
sets, and the CQR-score interval used by the WCP baselines.

Orientation conventions.  Density scores are *conformity* scores (high =
conforms) and the cutoff is the weighted alpha-quantile with the test mass
placed on the lower tail, which is the conservative side for this
orientation.  CQR scores are *nonconformity* scores (high = atypical) and use
the weighted (1-alpha)-quantile with the test mass at +infinity.  The
non-conservative reading for density scores (mass on the upper tail) is
available behind ``mass_side="high"`` for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cdite.density import (
    ConditionalDensityModel,
    eval_density,
    eval_density_profile,
    fit_conditional_density,
    make_reference,
)
from cdite.learners import LearnerConfig, fit_quantile, repair_crossing, _as_matrix
from cdite.tabular import Dataset

DEFAULT_GRID_POINTS = 1024
DEFAULT_GRID_PAD_SD = 4.0


@dataclass(frozen=True)
class WeightedCalibration:
    """Calibration scores with covariate-shift weights and the test weight."""

    scores: np.ndarray
    weights: np.ndarray
    test_weight: float

    def __post_init__(self) -> None:
        scores = np.asarray(self.scores, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if scores.shape != weights.shape or scores.ndim != 1:
            raise ValueError("scores and weights must be equal-length vectors")
        if not (np.isfinite(scores).all() and np.isfinite(weights).all()):
            raise ValueError("scores and weights must be finite")
        if not (weights > 0).all() or not self.test_weight > 0:
            raise ValueError("weights must be strictly positive")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "weights", weights)


@dataclass(frozen=True)
class ConformalThreshold:
    """Weighted-quantile cutoff; -inf means the point mass already covers alpha."""

    t_alpha: float
    alpha: float


@dataclass(frozen=True)
class IntervalSet:
    """Union of disjoint closed intervals on a grid, plus its convex hull."""

    intervals: tuple[tuple[float, float], ...]
    hull: tuple[float, float]
    grid_spec: tuple[float, float, int]

    def __post_init__(self) -> None:
        prev_u = -np.inf
        for lo, hi in self.intervals:
            if lo > hi or lo < prev_u:
                raise ValueError("intervals must be sorted, disjoint, and ordered")
            prev_u = hi
        if self.intervals:
            if self.hull[0] > self.intervals[0][0] or self.hull[1] < self.intervals[-1][1]:
                raise ValueError("hull must contain every interval")

    @property
    def width(self) -> float:
        return sum(hi - lo for lo, hi in self.intervals)

    def contains(self, y: float) -> bool:
        return any(lo <= y <= hi for lo, hi in self.intervals)


def normalize_weights(w, w_test: float) -> tuple[np.ndarray, float]:
    """Normalize calibration weights and the test weight to sum to 1."""
    w = np.asarray(w, dtype=np.float64)
    if not np.isfinite(w).all() or not np.isfinite(w_test):
        raise ValueError("weights must be finite")
    if not (w > 0).all() or not w_test > 0:
        raise ValueError("weights must be strictly positive")
    total = w.sum() + w_test
    return w / total, w_test / total


def _low_mass_thresholds(scores, weights, w_test, alpha: float) -> np.ndarray:
    """Vectorized cutoff for conformity scores, test mass on the lower tail.

    ``w_test`` may be a vector (one test point per entry); returns one cutoff
    per test weight.
    """
    scores = np.asarray(scores, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    w_test = np.atleast_1d(np.asarray(w_test, dtype=np.float64))
    order = np.argsort(scores, kind="stable")
    s = scores[order]
    cw = np.cumsum(weights[order])
    total = cw[-1] + w_test
    out = np.empty(w_test.size)
    for i, (wt, tot) in enumerate(zip(w_test, total)):
        prob = (wt + cw) / tot
        j = int(np.searchsorted(prob >= alpha, True))
        if wt / tot >= alpha:
            out[i] = -np.inf
        elif j >= s.size:
            out[i] = s[-1]
        else:
            out[i] = s[j]
    return out


def _high_mass_upper_quantiles(scores, weights, w_test, level: float) -> np.ndarray:
    """Vectorized (level)-quantile for nonconformity scores, mass at +inf."""
    scores = np.asarray(scores, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    w_test = np.atleast_1d(np.asarray(w_test, dtype=np.float64))
    order = np.argsort(scores, kind="stable")
    s = scores[order]
    cw = np.cumsum(weights[order])
    total = cw[-1] + w_test
    out = np.empty(w_test.size)
    for i, tot in enumerate(total):
        prob = cw / tot
        j = int(np.searchsorted(prob >= level, True))
        out[i] = np.inf if j >= s.size else s[j]
    return out


def weighted_quantile_with_mass(
    cal: WeightedCalibration, alpha: float, mass_side: str = "low"
) -> ConformalThreshold:
    """Weighted alpha-quantile of conformity scores with the test point mass.

    ``mass_side="low"`` (default) places the mass at -inf, the conservative
    side for conformity scores; ``"high"`` places it at +inf.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if mass_side == "low":
        t = _low_mass_thresholds(cal.scores, cal.weights, cal.test_weight, alpha)[0]
    elif mass_side == "high":
        # mass at +inf contributes nothing below any finite score
        scores = cal.scores
        order = np.argsort(scores, kind="stable")
        cw = np.cumsum(cal.weights[order])
        total = cw[-1] + cal.test_weight
        prob = cw / total
        j = int(np.searchsorted(prob >= alpha, True))
        t = np.inf if j >= scores.size else float(scores[order][j])
    else:
        raise ValueError("mass_side must be 'low' or 'high'")
    return ConformalThreshold(t_alpha=float(t), alpha=alpha)


def intervals_from_profile(values: np.ndarray, grid: np.ndarray, t: float) -> IntervalSet:
    """Superlevel-set intervals of a gridded function at threshold t."""
    lo, hi, k = float(grid[0]), float(grid[-1]), grid.size
    spec = (lo, hi, k)
    if t == -np.inf:
        return IntervalSet(intervals=((lo, hi),), hull=(lo, hi), grid_spec=spec)
    mask = values >= t
    if not mask.any():
        # threshold above the grid maximum: degenerate one-step interval at
        # the argmax so downstream interval arithmetic stays finite
        step = (hi - lo) / max(k - 1, 1)
        y_star = float(grid[int(np.argmax(values))])
        iv = (y_star - step / 2.0, y_star + step / 2.0)
        return IntervalSet(intervals=(iv,), hull=iv, grid_spec=spec)
    idx = np.flatnonzero(mask)
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate([[idx[0]], idx[breaks + 1]])
    ends = np.concatenate([idx[breaks], [idx[-1]]])
    intervals = tuple((float(grid[a]), float(grid[b])) for a, b in zip(starts, ends))
    hull = (intervals[0][0], intervals[-1][1])
    return IntervalSet(intervals=intervals, hull=hull, grid_spec=spec)


def density_superlevel_set(
    model: ConditionalDensityModel,
    x,
    t: ConformalThreshold,
    grid: tuple[float, float, int],
) -> IntervalSet:
    """Prediction set {y: f_hat(y|x) >= t} evaluated on a uniform grid."""
    lo, hi, k = grid
    if k < 2 or not lo < hi:
        raise ValueError("grid must satisfy lo < hi and K >= 2")
    ys = np.linspace(lo, hi, k)
    values = eval_density_profile(model, np.atleast_2d(np.asarray(x, dtype=np.float64)), ys)[0]
    return intervals_from_profile(values, ys, t.t_alpha)


def default_grid(y_train, k: int = DEFAULT_GRID_POINTS, pad_sd: float = DEFAULT_GRID_PAD_SD) -> tuple[float, float, int]:
    """Outcome grid covering the training range plus a padding in sd units."""
    y_train = np.asarray(y_train, dtype=np.float64)
    sd = float(y_train.std())
    if sd == 0.0:
        sd = max(abs(float(y_train[0])), 1.0)
    return (float(y_train.min()) - pad_sd * sd, float(y_train.max()) + pad_sd * sd, k)


def _weights_of(weight_fn, X: np.ndarray) -> np.ndarray:
    w = np.asarray([float(weight_fn(row)) for row in X], dtype=np.float64)
    if not (w > 0).all() or not np.isfinite(w).all():
        raise ValueError("weight function must return positive finite values")
    return w


def wcp_interval_cd(
    train: Dataset,
    calib: Dataset,
    x_test,
    alpha: float,
    weight_fn,
    cfg: LearnerConfig | None = None,
    grid: tuple[float, float, int] | None = None,
    seed: int = 0,
    inflation: float = 1.2,
) -> IntervalSet:
    """One-shot weighted split-conformal set with the density score.

    Fits the density model on ``train``, scores ``calib``, and returns the
    superlevel set at ``x_test``.
    """
    if train.n == 0 or calib.n == 0:
        raise ValueError("train and calib must be nonempty")
    if train.outcome is None or calib.outcome is None:
        raise ValueError("train and calib need outcomes")
    ref = make_reference(train.outcome, inflation)
    model = fit_conditional_density(train.features, train.outcome, ref, cfg, seed)
    scores = eval_density(model, calib.features, calib.outcome)
    weights = _weights_of(weight_fn, calib.features)
    w_test = float(weight_fn(np.asarray(x_test, dtype=np.float64)))
    cal = WeightedCalibration(scores=scores, weights=weights, test_weight=w_test)
    t = weighted_quantile_with_mass(cal, alpha)
    if grid is None:
        grid = default_grid(train.outcome)
    return density_superlevel_set(model, x_test, t, grid)


def cqr_score(q_lo, q_hi, y):
    """CQR nonconformity score max(q_lo - y, y - q_hi); negative inside the band."""
    return np.maximum(np.asarray(q_lo) - np.asarray(y), np.asarray(y) - np.asarray(q_hi))


def wcp_interval_cqr(
    train: Dataset,
    calib: Dataset,
    x_test,
    alpha: float,
    weight_fn,
    cfg: LearnerConfig | None = None,
    seed: int = 0,
) -> IntervalSet:
    """Weighted split-conformal interval with the CQR score (baseline)."""
    if train.n == 0 or calib.n == 0:
        raise ValueError("train and calib must be nonempty")
    if train.outcome is None or calib.outcome is None:
        raise ValueError("train and calib need outcomes")
    q_lo_model = fit_quantile(train.features, train.outcome, alpha / 2.0, cfg)
    q_hi_model = fit_quantile(train.features, train.outcome, 1.0 - alpha / 2.0, cfg)
    lo_cal, hi_cal = repair_crossing(
        q_lo_model.predict(calib.features), q_hi_model.predict(calib.features)
    )
    scores = cqr_score(lo_cal, hi_cal, calib.outcome)
    weights = _weights_of(weight_fn, calib.features)
    x_test = np.asarray(x_test, dtype=np.float64)
    w_test = float(weight_fn(x_test))
    q = _high_mass_upper_quantiles(scores, weights, w_test, 1.0 - alpha)[0]
    grid = default_grid(train.outcome)
    x2 = np.atleast_2d(x_test)
    lo_t, hi_t = repair_crossing(q_lo_model.predict(x2), q_hi_model.predict(x2))
    if not np.isfinite(q):
        return IntervalSet(intervals=((grid[0], grid[1]),), hull=(grid[0], grid[1]), grid_spec=grid)
    iv = (float(lo_t[0] - q), float(hi_t[0] + q))
    return IntervalSet(intervals=(iv,), hull=iv, grid_spec=grid)
