"""Data model, deterministic splitting, and CSV ingestion/emission.

CSV schema: feature columns ``x0..x{d-1}``; optional columns ``a`` (treatment
in {0,1}), ``y`` (observed outcome), ``y1``/``y0`` (potential outcomes), and
``ite``.  Comma separated, header row required, UTF-8, '.' decimal separator.
Rows with non-finite values are rejected, never imputed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from cdite.rng import make_rng


@dataclass(frozen=True)
class Dataset:
    """Immutable feature matrix with optional treatment/outcome columns."""

    features: np.ndarray
    treatment: np.ndarray | None = None
    outcome: np.ndarray | None = None
    y1: np.ndarray | None = None
    y0: np.ndarray | None = None
    true_ite: np.ndarray | None = None

    def __post_init__(self) -> None:
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if not np.isfinite(feats).all():
            raise ValueError("features contain non-finite values")
        object.__setattr__(self, "features", feats)
        n = feats.shape[0]
        for name in ("treatment", "outcome", "y1", "y0", "true_ite"):
            v = getattr(self, name)
            if v is None:
                continue
            v = np.asarray(v, dtype=np.float64)
            if v.shape != (n,):
                raise ValueError(f"column {name!r} has length {v.shape}, expected ({n},)")
            if not np.isfinite(v).all():
                raise ValueError(f"column {name!r} contains non-finite values")
            object.__setattr__(self, name, v)
        if self.treatment is not None and not np.isin(self.treatment, (0.0, 1.0)).all():
            raise ValueError("invalid treatment value: entries must be 0 or 1")
        if self.y1 is not None and self.y0 is not None and self.true_ite is not None:
            if not np.allclose(self.true_ite, self.y1 - self.y0, atol=1e-9, rtol=1e-9):
                raise ValueError("true_ite inconsistent with y1 - y0")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class SplitIndex:
    """Disjoint index sets produced by a seeded random partition."""

    parts: tuple[np.ndarray, ...]
    seed: int

    def __post_init__(self) -> None:
        seen: set[int] = set()
        for p in self.parts:
            ids = set(int(i) for i in p)
            if seen & ids:
                raise ValueError("split parts are not disjoint")
            seen |= ids


_OPTIONAL_COLUMNS = ("a", "y", "y1", "y0", "ite")

_DEFAULT_SCHEMA = {"a": "a", "y": "y", "y1": "y1", "y0": "y0", "ite": "ite"}


def load_csv(path: str, schema: dict[str, str] | None = None) -> Dataset:
    """Load a dataset from CSV.

    ``schema`` maps logical names ('a', 'y', 'y1', 'y0', 'ite') to column
    names; feature columns are all columns named ``x<k>`` by default, or the
    ones listed under schema key 'features'.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    schema = {**_DEFAULT_SCHEMA, **(schema or {})}
    df = pd.read_csv(path)

    feature_cols = schema.get("features")
    if feature_cols is None:
        feature_cols = sorted(
            (c for c in df.columns if c.startswith("x") and c[1:].isdigit()),
            key=lambda c: int(c[1:]),
        )
    if not feature_cols:
        raise ValueError("no feature columns found")

    def numeric(col: str) -> np.ndarray:
        vals = pd.to_numeric(df[col], errors="coerce").to_numpy(dtype=np.float64)
        raw_na = df[col].isna().to_numpy()
        if (np.isnan(vals) & ~raw_na).any():
            raise ValueError(f"non-numeric cell in column {col!r}")
        if np.isnan(vals).any():
            raise ValueError(f"missing value in column {col!r}")
        return vals

    features = np.column_stack([numeric(c) for c in feature_cols])
    cols = {}
    mapping = {"a": "treatment", "y": "outcome", "y1": "y1", "y0": "y0", "ite": "true_ite"}
    for key, field_name in mapping.items():
        col = schema[key]
        if col in df.columns:
            cols[field_name] = numeric(col)
    if "y1" in cols and "y0" in cols and "true_ite" not in cols:
        cols["true_ite"] = cols["y1"] - cols["y0"]
    return Dataset(features=features, **cols)


def write_csv(ds: Dataset, path: str) -> None:
    """Emit a Dataset in the package CSV schema (15 significant digits)."""
    data = {f"x{j}": ds.features[:, j] for j in range(ds.d)}
    for key, col in (("a", ds.treatment), ("y", ds.outcome), ("y1", ds.y1), ("y0", ds.y0), ("ite", ds.true_ite)):
        if col is not None:
            data[key] = col
    pd.DataFrame(data).to_csv(path, index=False, float_format="%.15g")


def split_random(n: int, fractions: list[float], seed: int) -> SplitIndex:
    """Uniformly random partition of 0..n-1 into parts of the given fractions."""
    fractions = list(fractions)
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    if any(f <= 0 for f in fractions):
        raise ValueError("fractions must be positive")
    if n < len(fractions):
        raise ValueError("n must be at least the number of parts")
    rng = make_rng(seed, "split")
    perm = rng.permutation(n)
    # largest-remainder rounding keeps each part within 1 of n * fraction
    raw = np.array([f * n for f in fractions])
    sizes = np.floor(raw).astype(int)
    remainder = n - sizes.sum()
    order = np.argsort(-(raw - sizes), kind="stable")
    for k in range(remainder):
        sizes[order[k]] += 1
    parts = []
    start = 0
    for s in sizes:
        parts.append(np.sort(perm[start : start + s]))
        start += s
    return SplitIndex(parts=tuple(parts), seed=seed)


def subset(ds: Dataset, idx) -> Dataset:
    """Row-restricted copy preserving column presence."""
    idx = np.asarray(sorted(int(i) for i in np.asarray(list(idx), dtype=np.int64)), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= ds.n):
        raise IndexError("subset index out of range")
    take = lambda v: None if v is None else v[idx]
    return Dataset(
        features=ds.features[idx] if idx.size else ds.features[:0],
        treatment=take(ds.treatment),
        outcome=take(ds.outcome),
        y1=take(ds.y1),
        y0=take(ds.y0),
        true_ite=take(ds.true_ite),
    )
