"""Dataset validation, CSV round-trips, and seeded splitting."""

import numpy as np
import pandas as pd
import pytest

from cdite.tabular import Dataset, SplitIndex, load_csv, split_random, subset, write_csv


def _small_ds(n=10, d=3, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(n, d))
    y1 = rng.normal(size=n)
    y0 = rng.normal(size=n)
    a = (rng.uniform(size=n) < 0.5).astype(float)
    return Dataset(
        features=x,
        treatment=a,
        outcome=np.where(a == 1, y1, y0),
        y1=y1,
        y0=y0,
        true_ite=y1 - y0,
    )


class TestDataset:
    def test_basic_properties(self):
        ds = _small_ds(n=12, d=4)
        assert ds.n == 12
        assert ds.d == 4

    def test_features_only(self):
        ds = Dataset(features=np.zeros((5, 2)))
        assert ds.treatment is None and ds.outcome is None

    def test_rejects_1d_features(self):
        with pytest.raises(ValueError, match="2-D"):
            Dataset(features=np.zeros(5))

    def test_rejects_nonfinite_features(self):
        x = np.zeros((3, 2))
        x[1, 0] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            Dataset(features=x)

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError, match="length"):
            Dataset(features=np.zeros((4, 2)), outcome=np.zeros(3))

    def test_rejects_bad_treatment_values(self):
        with pytest.raises(ValueError, match="0 or 1"):
            Dataset(features=np.zeros((3, 2)), treatment=np.array([0.0, 0.5, 1.0]))

    def test_rejects_inconsistent_true_ite(self):
        with pytest.raises(ValueError, match="inconsistent"):
            Dataset(
                features=np.zeros((2, 1)),
                y1=np.array([1.0, 2.0]),
                y0=np.array([0.0, 0.0]),
                true_ite=np.array([5.0, 5.0]),
            )


class TestCsv:
    def test_round_trip(self, tmp_path):
        ds = _small_ds(n=20)
        path = str(tmp_path / "ds.csv")
        write_csv(ds, path)
        back = load_csv(path)
        np.testing.assert_allclose(back.features, ds.features, rtol=1e-12)
        np.testing.assert_allclose(back.outcome, ds.outcome, rtol=1e-12)
        np.testing.assert_array_equal(back.treatment, ds.treatment)
        np.testing.assert_allclose(back.true_ite, ds.true_ite, rtol=1e-12)

    def test_feature_autodetect_order(self, tmp_path):
        # x10 must sort after x2 numerically, not lexically
        path = tmp_path / "wide.csv"
        cols = {f"x{j}": [float(j)] * 3 for j in [0, 2, 10, 1]}
        pd.DataFrame(cols).to_csv(path, index=False)
        ds = load_csv(str(path))
        np.testing.assert_array_equal(ds.features[0], [0.0, 1.0, 2.0, 10.0])

    def test_derives_true_ite_from_potentials(self, tmp_path):
        path = tmp_path / "p.csv"
        pd.DataFrame({"x0": [0.1, 0.2], "y1": [2.0, 3.0], "y0": [1.0, 1.0]}).to_csv(
            path, index=False
        )
        ds = load_csv(str(path))
        np.testing.assert_array_equal(ds.true_ite, [1.0, 2.0])

    def test_missing_file(self):
        with pytest.raises(FileNotFoundError):
            load_csv("/nonexistent/file.csv")

    def test_rejects_non_numeric_cell(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x0,y\n1.0,2.0\noops,3.0\n")
        with pytest.raises(ValueError, match="non-numeric"):
            load_csv(str(path))

    def test_rejects_missing_cell(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x0,y\n1.0,2.0\n,3.0\n")
        with pytest.raises(ValueError, match="missing"):
            load_csv(str(path))

    def test_no_features_error(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("y\n1.0\n")
        with pytest.raises(ValueError, match="feature"):
            load_csv(str(path))

    def test_schema_mapping(self, tmp_path):
        path = tmp_path / "named.csv"
        pd.DataFrame({"x0": [0.1, 0.9], "treat": [0, 1], "resp": [1.5, 2.5]}).to_csv(
            path, index=False
        )
        ds = load_csv(str(path), schema={"a": "treat", "y": "resp"})
        np.testing.assert_array_equal(ds.treatment, [0.0, 1.0])
        np.testing.assert_array_equal(ds.outcome, [1.5, 2.5])


class TestSplit:
    def test_partition_and_sizes(self):
        split = split_random(100, [0.5, 0.5], seed=3)
        assert sorted(np.concatenate(split.parts).tolist()) == list(range(100))
        assert [p.size for p in split.parts] == [50, 50]

    def test_largest_remainder_sizes(self):
        split = split_random(10, [0.26, 0.26, 0.48], seed=0)
        assert sorted(p.size for p in split.parts) == [2, 3, 5]

    def test_deterministic(self):
        a = split_random(50, [0.3, 0.7], seed=11)
        b = split_random(50, [0.3, 0.7], seed=11)
        for pa, pb in zip(a.parts, b.parts):
            np.testing.assert_array_equal(pa, pb)

    def test_seed_changes_split(self):
        a = split_random(50, [0.5, 0.5], seed=1)
        b = split_random(50, [0.5, 0.5], seed=2)
        assert not np.array_equal(a.parts[0], b.parts[0])

    def test_rejects_bad_fractions(self):
        with pytest.raises(ValueError, match="sum to 1"):
            split_random(10, [0.5, 0.4], seed=0)
        with pytest.raises(ValueError, match="positive"):
            split_random(10, [1.5, -0.5], seed=0)

    def test_split_index_rejects_overlap(self):
        with pytest.raises(ValueError, match="disjoint"):
            SplitIndex(parts=(np.array([0, 1]), np.array([1, 2])), seed=0)


class TestSubset:
    def test_subset_preserves_columns(self):
        ds = _small_ds(n=10)
        sub = subset(ds, [2, 5, 7])
        assert sub.n == 3
        np.testing.assert_array_equal(sub.features, ds.features[[2, 5, 7]])
        np.testing.assert_array_equal(sub.outcome, ds.outcome[[2, 5, 7]])

    def test_subset_out_of_range(self):
        ds = _small_ds(n=5)
        with pytest.raises(IndexError):
            subset(ds, [0, 5])

    def test_subset_none_columns_stay_none(self):
        ds = Dataset(features=np.arange(8.0).reshape(4, 2))
        sub = subset(ds, [1, 3])
        assert sub.outcome is None and sub.treatment is None
