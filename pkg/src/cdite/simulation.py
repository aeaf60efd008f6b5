"""Synthetic data-generating process for the benchmark.

A 2x2 factorial design: homoscedastic vs heteroscedastic outcome noise, and
no treatment effect vs heterogeneous effects.  Covariates are uniform on the
unit cube, treatment assignment follows a smooth bounded propensity, and both
potential outcomes are generated so the true ITE is known for every unit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from cdite.rng import make_rng
from cdite.tabular import Dataset

HOMOSCEDASTIC = "homoscedastic"
HETEROSCEDASTIC = "heteroscedastic"


@dataclass(frozen=True)
class ScenarioConfig:
    """One cell of the 2x2 simulation design."""

    n: int = 5000
    n_test: int = 1000
    d: int = 10
    sigma_kind: str = HOMOSCEDASTIC
    gamma: int = 1  # 1 = no effect, 0 = heterogeneous effects
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n < 1 or self.n_test < 1:
            raise ValueError("n and n_test must be >= 1")
        if self.d < 2:
            raise ValueError("d must be >= 2 (mean surface uses x1 and x2)")
        if self.sigma_kind not in (HOMOSCEDASTIC, HETEROSCEDASTIC):
            raise ValueError(f"unknown sigma_kind: {self.sigma_kind!r}")
        if self.gamma not in (0, 1):
            raise ValueError("gamma must be 0 or 1")

    @property
    def label(self) -> str:
        effect = "no-effect" if self.gamma == 1 else "heterogeneous"
        return f"{self.sigma_kind}/{effect}"


@dataclass(frozen=True)
class GeneratedData:
    """Train/test datasets with full potential outcomes and true propensities."""

    train: Dataset
    test: Dataset
    true_pi: np.ndarray


def gen_covariates(n: int, d: int, seed: int) -> np.ndarray:
    """n x d matrix of i.i.d. Uniform[0,1] covariates."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    rng = make_rng(seed, "covariates")
    x = rng.uniform(0.0, 1.0, size=(n, d))
    # keep the first coordinate strictly interior so -log(x1) stays finite
    tiny = np.finfo(np.float64).tiny
    x[:, 0] = np.clip(x[:, 0], tiny, 1.0 - np.finfo(np.float64).epsneg)
    return x


def true_propensity(x1) -> np.ndarray | float:
    """Treatment probability (1 + Beta(2,4) density at x1) / 4; bounded in (0, 0.78)."""
    x1 = np.asarray(x1, dtype=np.float64)
    if ((x1 < 0) | (x1 > 1)).any():
        raise ValueError("x1 must lie in [0, 1]")
    beta_pdf = 20.0 * x1 * (1.0 - x1) ** 3
    out = 0.25 * (1.0 + beta_pdf)
    return float(out) if out.ndim == 0 else out


def mean_surface(u):
    """Logistic ramp 2 / (1 + exp(-12 (u - 0.5))), increasing from 0 to 2."""
    u = np.asarray(u, dtype=np.float64)
    out = 2.0 / (1.0 + np.exp(-12.0 * (u - 0.5)))
    return float(out) if out.ndim == 0 else out


def _noise_scale(x: np.ndarray, sigma_kind: str) -> np.ndarray:
    if sigma_kind == HOMOSCEDASTIC:
        return np.ones(x.shape[0])
    return -np.log(x[:, 0])


def _gen_split(cfg: ScenarioConfig, n: int, tag: str) -> tuple[Dataset, np.ndarray]:
    x = gen_covariates(n, cfg.d, _tag_seed(cfg.seed, tag, "x"))
    rng = make_rng(cfg.seed, tag, "draws")
    pi = true_propensity(x[:, 0])
    a = (rng.uniform(size=n) < pi).astype(np.float64)
    m = mean_surface(x[:, 0]) * mean_surface(x[:, 1])
    sigma = _noise_scale(x, cfg.sigma_kind)
    y1 = m + sigma * rng.normal(size=n)
    y0 = cfg.gamma * m + sigma * rng.normal(size=n)
    y = np.where(a == 1.0, y1, y0)
    ds = Dataset(features=x, treatment=a, outcome=y, y1=y1, y0=y0, true_ite=y1 - y0)
    return ds, pi


def _tag_seed(seed: int, *path) -> int:
    from cdite.rng import child_seed

    return child_seed(seed, *path)


def gen_scenario(cfg: ScenarioConfig) -> GeneratedData:
    """Generate one train/test draw of the scenario."""
    train, pi = _gen_split(cfg, cfg.n, "train")
    test, _ = _gen_split(cfg, cfg.n_test, "test")
    return GeneratedData(train=train, test=test, true_pi=pi)


def oracle_ite_width(cfg: ScenarioConfig, alpha: float, x1=None):
    """Width of the oracle Gaussian ITE interval.

    The ITE is Gaussian with variance 2 sigma(x)^2 around its conditional
    mean, so the shortest (1-alpha) interval has width
    2 z_{1-alpha/2} sqrt(2) sigma(x) regardless of gamma.  Returns a scalar
    in the homoscedastic case; requires x1 otherwise.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    z = norm.ppf(1.0 - alpha / 2.0)
    base = 2.0 * z * math.sqrt(2.0)
    if cfg.sigma_kind == HOMOSCEDASTIC:
        return base
    if x1 is None:
        raise ValueError("heteroscedastic width depends on x1")
    return base * (-np.log(np.asarray(x1, dtype=np.float64)))
