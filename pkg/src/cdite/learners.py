"""Plug-in supervised learners: probabilistic classifier, mean and quantile regressors.

Two model kinds are available everywhere a learner is needed:

* ``boosted-trees`` -- stagewise gradient boosting on shallow, histogram-built
  regression trees.  Fitting is fully deterministic (no subsampling, stable
  tie-breaking), so repeated fits are bit-identical.
* ``logistic`` -- a (generalized) linear model: logistic regression trained by
  full-batch gradient descent for classification, closed-form least squares
  for the mean, and subgradient descent on the pinball loss for quantiles.
  An optional pairwise-product basis expansion is supported.

Tree models trained on features ``[x_0..x_{d-1}, y]`` additionally support a
fast "profile" evaluation over a grid of y values at fixed x: each tree is
piecewise constant in y for a fixed x, so the whole grid costs O(nodes) per
row instead of O(grid * nodes).  Density grid evaluation relies on this.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

_N_BINS = 64
_LAMBDA = 1e-6  # hessian regularizer, guards divisions at tiny leaves


@dataclass(frozen=True)
class LearnerConfig:
    """Hyperparameters shared by all learner kinds."""

    kind: str = "boosted-trees"
    iterations: int = 200
    learning_rate: float = 0.1
    max_depth: int = 2
    probability_clip: float = 0.01
    basis: str = "raw"  # logistic kind only: "raw" or "raw+pairwise"

    def __post_init__(self) -> None:
        if self.kind not in ("boosted-trees", "logistic"):
            raise ValueError(f"unknown learner kind: {self.kind!r}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not 0.0 < self.probability_clip < 0.5:
            raise ValueError("probability_clip must lie in (0, 0.5)")
        if self.basis not in ("raw", "raw+pairwise"):
            raise ValueError(f"unknown basis: {self.basis!r}")


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    return X


def _check_dim(X: np.ndarray, expected: int) -> None:
    if X.shape[1] != expected:
        raise ValueError(f"feature dimension mismatch: got {X.shape[1]}, expected {expected}")


# ---------------------------------------------------------------------------
# Histogram-binned regression trees
# ---------------------------------------------------------------------------


class _Tree:
    """Axis-aligned binary tree stored as flat arrays; leaf values pre-scaled."""

    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self) -> None:
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0])
        stack = [(0, np.arange(X.shape[0]))]
        while stack:
            node, rows = stack.pop()
            if rows.size == 0:
                continue
            f = self.feature[node]
            if f < 0:
                out[rows] = self.value[node]
                continue
            go_left = X[rows, f] <= self.threshold[node]
            stack.append((self.left[node], rows[go_left]))
            stack.append((self.right[node], rows[~go_left]))
        return out

    def add_profile(self, X: np.ndarray, y_col: int, grid: np.ndarray, delta: np.ndarray) -> None:
        """Accumulate this tree's value over a y grid, in difference form.

        ``X`` holds the non-y features (columns 0..y_col-1); ``delta`` has
        shape (m, K+1) and receives +v at the start index and -v past the end
        index of every constant y segment.
        """
        m = X.shape[0]
        stack = [(0, np.arange(m), np.zeros(m, dtype=np.intp), np.full(m, grid.size, dtype=np.intp))]
        while stack:
            node, rows, lo, hi = stack.pop()
            if rows.size == 0:
                continue
            f = self.feature[node]
            if f < 0:
                v = self.value[node]
                delta[rows, lo] += v
                delta[rows, hi] -= v
            elif f == y_col:
                k = int(np.searchsorted(grid, self.threshold[node], side="right"))
                hi_l = np.minimum(hi, k)
                keep = lo < hi_l
                stack.append((self.left[node], rows[keep], lo[keep], hi_l[keep]))
                lo_r = np.maximum(lo, k)
                keep = lo_r < hi
                stack.append((self.right[node], rows[keep], lo_r[keep], hi[keep]))
            else:
                go_left = X[rows, f] <= self.threshold[node]
                stack.append((self.left[node], rows[go_left], lo[go_left], hi[go_left]))
                stack.append((self.right[node], rows[~go_left], lo[~go_left], hi[~go_left]))


def _bin_features(X: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    n, d = X.shape
    binned = np.empty((n, d), dtype=np.int32)
    edges_per_feature: list[np.ndarray] = []
    qs = np.linspace(0.0, 1.0, _N_BINS + 1)[1:-1]
    for f in range(d):
        edges = np.unique(np.quantile(X[:, f], qs))
        # drop the max so the rightmost bin is never empty on the left side
        if edges.size and edges[-1] >= X[:, f].max():
            edges = edges[:-1]
        edges_per_feature.append(edges)
        binned[:, f] = np.searchsorted(edges, X[:, f], side="left")
    return binned, edges_per_feature


def _build_tree(
    tree: _Tree,
    node: int,
    rows: np.ndarray,
    depth: int,
    binned: np.ndarray,
    edges: list[np.ndarray],
    grad: np.ndarray,
    hess: np.ndarray,
    max_depth: int,
    min_leaf: int,
    leaf_assign: np.ndarray,
) -> None:
    g_sum = grad[rows].sum()
    h_sum = hess[rows].sum()
    if depth >= max_depth or rows.size < 2 * min_leaf:
        tree.value[node] = g_sum / (h_sum + _LAMBDA)
        leaf_assign[rows] = node
        return

    parent_score = g_sum * g_sum / (h_sum + _LAMBDA)
    best_gain = 0.0
    best = None  # (feature, bin)
    for f in range(binned.shape[1]):
        e = edges[f]
        if e.size == 0:
            continue
        nb = e.size + 1
        b = binned[rows, f]
        g_hist = np.bincount(b, weights=grad[rows], minlength=nb)
        h_hist = np.bincount(b, weights=hess[rows], minlength=nb)
        c_hist = np.bincount(b, minlength=nb)
        gl = np.cumsum(g_hist)[:-1]
        hl = np.cumsum(h_hist)[:-1]
        cl = np.cumsum(c_hist)[:-1]
        gr = g_sum - gl
        hr = h_sum - hl
        cr = rows.size - cl
        valid = (cl >= min_leaf) & (cr >= min_leaf)
        if not valid.any():
            continue
        gain = gl * gl / (hl + _LAMBDA) + gr * gr / (hr + _LAMBDA) - parent_score
        gain[~valid] = -np.inf
        b_best = int(np.argmax(gain))
        if gain[b_best] > best_gain:
            best_gain = float(gain[b_best])
            best = (f, b_best)

    if best is None:
        tree.value[node] = g_sum / (h_sum + _LAMBDA)
        leaf_assign[rows] = node
        return

    f, b = best
    tree.feature[node] = f
    tree.threshold[node] = float(edges[f][b])
    go_left = binned[rows, f] <= b
    lid = tree._new_node()
    rid = tree._new_node()
    tree.left[node] = lid
    tree.right[node] = rid
    _build_tree(tree, lid, rows[go_left], depth + 1, binned, edges, grad, hess, max_depth, min_leaf, leaf_assign)
    _build_tree(tree, rid, rows[~go_left], depth + 1, binned, edges, grad, hess, max_depth, min_leaf, leaf_assign)


class _BoostedModel:
    """Additive tree ensemble with a constant base score."""

    def __init__(self, base: float, trees: list[_Tree], n_features: int) -> None:
        self.base = base
        self.trees = trees
        self.n_features = n_features

    def raw(self, X: np.ndarray) -> np.ndarray:
        out = np.full(X.shape[0], self.base)
        for tree in self.trees:
            out += tree.predict(X)
        return out

    def raw_profile(self, X_cov: np.ndarray, grid: np.ndarray) -> np.ndarray:
        """Raw scores over a y grid; X_cov lacks the trailing y column."""
        m, k = X_cov.shape[0], grid.size
        delta = np.zeros((m, k + 1))
        y_col = self.n_features - 1
        for tree in self.trees:
            tree.add_profile(X_cov, y_col, grid, delta)
        return self.base + np.cumsum(delta[:, :-1], axis=1)


def _fit_boosted(X: np.ndarray, y: np.ndarray, cfg: LearnerConfig, loss: str, q: float = 0.5) -> _BoostedModel:
    n = X.shape[0]
    min_leaf = max(1, min(5, n // 4))
    binned, edges = _bin_features(X)

    if loss == "logistic":
        p0 = float(np.clip(y.mean(), cfg.probability_clip, 1 - cfg.probability_clip))
        base = float(np.log(p0 / (1 - p0)))
    elif loss == "quantile":
        base = float(np.quantile(y, q))
    else:
        base = float(y.mean())

    pred = np.full(n, base)
    trees: list[_Tree] = []
    for _ in range(cfg.iterations):
        if loss == "logistic":
            p = 1.0 / (1.0 + np.exp(-pred))
            grad = y - p
            hess = p * (1.0 - p)
        elif loss == "quantile":
            grad = q - (y <= pred)
            hess = np.ones(n)
        else:
            grad = y - pred
            hess = np.ones(n)

        tree = _Tree()
        root = tree._new_node()
        leaf_assign = np.empty(n, dtype=np.intp)
        _build_tree(tree, root, np.arange(n), 0, binned, edges, grad, hess, cfg.max_depth, min_leaf, leaf_assign)

        leaf_vals = np.asarray(tree.value)
        step = cfg.learning_rate * leaf_vals[leaf_assign]
        pred += step
        for i in range(len(tree.value)):
            tree.value[i] *= cfg.learning_rate
        trees.append(tree)

    return _BoostedModel(base, trees, X.shape[1])


# ---------------------------------------------------------------------------
# Linear models ("logistic" kind)
# ---------------------------------------------------------------------------


def _expand_basis(X: np.ndarray, basis: str) -> np.ndarray:
    if basis == "raw":
        return X
    d = X.shape[1]
    cols = [X]
    for i in range(d):
        for j in range(i, d):
            cols.append((X[:, i] * X[:, j])[:, None])
    return np.hstack(cols)


class _LinearModel:
    """Standardized linear score w0 + w . phi(x)."""

    def __init__(self, w0: float, w: np.ndarray, mu: np.ndarray, sd: np.ndarray, basis: str, n_features: int) -> None:
        self.w0 = w0
        self.w = w
        self.mu = mu
        self.sd = sd
        self.basis = basis
        self.n_features = n_features

    def raw(self, X: np.ndarray) -> np.ndarray:
        phi = (_expand_basis(X, self.basis) - self.mu) / self.sd
        return self.w0 + phi @ self.w


def _standardize(phi: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mu = phi.mean(axis=0)
    sd = phi.std(axis=0)
    sd[sd == 0] = 1.0
    return (phi - mu) / sd, mu, sd


def _fit_linear_logistic(X: np.ndarray, z: np.ndarray, cfg: LearnerConfig) -> _LinearModel:
    phi_raw = _expand_basis(X, cfg.basis)
    phi, mu, sd = _standardize(phi_raw)
    n, p = phi.shape
    w = np.zeros(p)
    w0 = float(np.log((z.mean() + 1e-12) / (1 - z.mean() + 1e-12)))
    for _ in range(cfg.iterations):
        s = w0 + phi @ w
        prob = 1.0 / (1.0 + np.exp(-s))
        err = z - prob
        w += cfg.learning_rate * (phi.T @ err) / n
        w0 += cfg.learning_rate * err.mean()
    return _LinearModel(w0, w, mu, sd, cfg.basis, X.shape[1])


def _fit_linear_quantile(X: np.ndarray, y: np.ndarray, q: float, cfg: LearnerConfig) -> _LinearModel:
    phi_raw = _expand_basis(X, cfg.basis)
    phi, mu, sd = _standardize(phi_raw)
    n, p = phi.shape
    w = np.zeros(p)
    w0 = float(np.quantile(y, q))
    scale = max(float(np.std(y)), 1e-12)
    for _ in range(cfg.iterations):
        s = w0 + phi @ w
        sub = q - (y <= s)  # pinball subgradient direction
        w += cfg.learning_rate * scale * (phi.T @ sub) / n
        w0 += cfg.learning_rate * scale * sub.mean()
    return _LinearModel(w0, w, mu, sd, cfg.basis, X.shape[1])


# ---------------------------------------------------------------------------
# Public model wrappers
# ---------------------------------------------------------------------------


class ProbClassifier:
    """Binary classifier with probabilities clipped to [eps, 1-eps]."""

    def __init__(self, model, config: LearnerConfig, constant: float | None = None, degenerate: bool = False) -> None:
        self._model = model
        self.config = config
        self._constant = constant
        self.degenerate = degenerate
        self.n_features = model.n_features if model is not None else None

    def predict_proba(self, X) -> np.ndarray:
        X = _as_matrix(X)
        eps = self.config.probability_clip
        if self._constant is not None:
            return np.full(X.shape[0], np.clip(self._constant, eps, 1 - eps))
        _check_dim(X, self.n_features)
        p = 1.0 / (1.0 + np.exp(-self._model.raw(X)))
        return np.clip(p, eps, 1 - eps)

    def predict_proba_one(self, x) -> float:
        return float(self.predict_proba(np.atleast_2d(np.asarray(x, dtype=np.float64)))[0])

    def predict_proba_profile(self, X_cov, grid) -> np.ndarray:
        """Probabilities over a y grid at fixed covariates.

        The classifier must have been trained on features ``[x, y]`` with y as
        the last column; ``X_cov`` holds the x part only.
        """
        X_cov = _as_matrix(X_cov)
        grid = np.asarray(grid, dtype=np.float64)
        eps = self.config.probability_clip
        if self._constant is not None:
            return np.full((X_cov.shape[0], grid.size), np.clip(self._constant, eps, 1 - eps))
        _check_dim(X_cov, self.n_features - 1)
        if isinstance(self._model, _BoostedModel):
            raw = self._model.raw_profile(X_cov, grid)
        else:
            rows = np.hstack(
                [np.repeat(X_cov, grid.size, axis=0), np.tile(grid, X_cov.shape[0])[:, None]]
            )
            raw = self._model.raw(rows).reshape(X_cov.shape[0], grid.size)
        return np.clip(1.0 / (1.0 + np.exp(-raw)), eps, 1 - eps)


class MeanRegressor:
    """Least-squares regressor (boosted trees or linear)."""

    def __init__(self, model, config: LearnerConfig) -> None:
        self._model = model
        self.config = config
        self.n_features = model.n_features

    def predict(self, X) -> np.ndarray:
        X = _as_matrix(X)
        _check_dim(X, self.n_features)
        return self._model.raw(X)


class QuantileRegressor:
    """Pinball-loss regressor at a fixed quantile level."""

    def __init__(self, model, config: LearnerConfig, q: float) -> None:
        self._model = model
        self.config = config
        self.q = q
        self.n_features = model.n_features

    def predict(self, X) -> np.ndarray:
        X = _as_matrix(X)
        _check_dim(X, self.n_features)
        return self._model.raw(X)


def fit_classifier(X, z, cfg: LearnerConfig | None = None) -> ProbClassifier:
    """Fit a probabilistic classifier of binary labels z on features X.

    A single-class input yields a clipped constant-probability model with the
    ``degenerate`` flag set (and a warning).
    """
    cfg = cfg or LearnerConfig()
    X = _as_matrix(X)
    z = np.asarray(z, dtype=np.float64)
    if X.shape[0] != z.size:
        raise ValueError("X and z length mismatch")
    if X.shape[0] < 2:
        raise ValueError("need at least 2 rows to fit a classifier")
    if not np.isin(z, (0.0, 1.0)).all():
        raise ValueError("labels must be 0/1")
    if z.min() == z.max():
        warnings.warn("single-class input; returning constant-probability model", stacklevel=2)
        dummy = _LinearModel(0.0, np.zeros(1), np.zeros(1), np.ones(1), "raw", X.shape[1])
        return ProbClassifier(dummy, cfg, constant=float(z[0]), degenerate=True)
    if cfg.kind == "logistic":
        return ProbClassifier(_fit_linear_logistic(X, z, cfg), cfg)
    return ProbClassifier(_fit_boosted(X, z, cfg, "logistic"), cfg)


def fit_mean(X, y, cfg: LearnerConfig | None = None) -> MeanRegressor:
    """Fit a conditional-mean regressor."""
    cfg = cfg or LearnerConfig()
    X = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] != y.size:
        raise ValueError("X and y length mismatch")
    if X.shape[0] < 2:
        raise ValueError("need at least 2 rows to fit a regressor")
    if cfg.kind == "logistic":
        phi_raw = _expand_basis(X, cfg.basis)
        design = np.hstack([np.ones((X.shape[0], 1)), phi_raw])
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        model = _LinearModel(float(coef[0]), coef[1:], np.zeros(phi_raw.shape[1]), np.ones(phi_raw.shape[1]), cfg.basis, X.shape[1])
        return MeanRegressor(model, cfg)
    return MeanRegressor(_fit_boosted(X, y, cfg, "mean"), cfg)


def fit_quantile(X, y, q: float, cfg: LearnerConfig | None = None) -> QuantileRegressor:
    """Fit a conditional-quantile regressor at level q."""
    cfg = cfg or LearnerConfig()
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie in (0, 1)")
    X = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] != y.size:
        raise ValueError("X and y length mismatch")
    if X.shape[0] < 2:
        raise ValueError("need at least 2 rows to fit a regressor")
    if cfg.kind == "logistic":
        return QuantileRegressor(_fit_linear_quantile(X, y, q, cfg), cfg, q)
    return QuantileRegressor(_fit_boosted(X, y, cfg, "quantile", q=q), cfg, q)


def repair_crossing(lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise min/max repair for crossing interval endpoints."""
    return np.minimum(lo, hi), np.maximum(lo, hi)
