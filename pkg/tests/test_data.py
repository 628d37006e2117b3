import numpy as np
import pytest

from suprand.data import (Column, DataError, Dataset, FeatureSchema, Truth, from_matrix,
                          ingest_csv, one_hot_encode, split_folds, write_csv)


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_schema_rejects_duplicate_names():
    with pytest.raises(DataError):
        FeatureSchema((Column("a"), Column("a")))


def test_schema_rejects_bad_levels():
    with pytest.raises(DataError):
        FeatureSchema((Column("c", "categorical", ()),))
    with pytest.raises(DataError):
        FeatureSchema((Column("c", "categorical", ("a", "a")),))


def test_schema_needs_an_observed_column():
    with pytest.raises(DataError):
        FeatureSchema((Column("a"),), (False,))


def test_schema_json_roundtrip(tmp_path, mixed_schema):
    s = mixed_schema.with_hidden(["x"])
    p = tmp_path / "s.json"
    import json
    p.write_text(json.dumps(s.to_dict()))
    assert FeatureSchema.load(p) == s
    assert s.observed_indices().tolist() == [1, 2]


def test_one_hot_examples():
    schema = FeatureSchema((Column("x"), Column("c", "categorical", ("a", "b", "c"))))
    assert one_hot_encode(schema, [2.5, "b"]).tolist() == [2.5, 0, 1, 0]
    with pytest.raises(DataError):
        one_hot_encode(schema, [2.5, "z"])


def test_one_hot_all_numeric_is_identity():
    schema = FeatureSchema((Column("a"), Column("b")))
    assert one_hot_encode(schema, ["1.5", "-3"]).tolist() == [1.5, -3.0]


def test_ingest_three_rows(tmp_path, mixed_schema):
    p = write(tmp_path, "x,c,y\n1.0,a,yes\n2,b,no\n-3.5,a,1\n")
    ds = ingest_csv(p, mixed_schema, "y")
    assert (ds.n, ds.d) == (3, 3)
    assert ds.outcome.tolist() == [1, 0, 1]
    assert np.all(ds.treatment == 0) and np.all(ds.propensity == 0.5) and ds.truth is None


def test_ingest_rejects_non_binary_target_with_row(tmp_path, mixed_schema):
    p = write(tmp_path, "x,c,y\n1.0,a,yes\n2,b,maybe\n")
    with pytest.raises(DataError, match=":3:"):
        ingest_csv(p, mixed_schema, "y")


def test_ingest_errors(tmp_path, mixed_schema):
    with pytest.raises(DataError, match="no such file"):
        ingest_csv(tmp_path / "missing.csv", mixed_schema, "y")
    with pytest.raises(DataError, match="header"):
        ingest_csv(write(tmp_path, "x,k,y\n1,a,1\n"), mixed_schema, "y")
    with pytest.raises(DataError, match=r":2:.*x"):
        ingest_csv(write(tmp_path, "x,c,y\nfoo,a,1\n"), mixed_schema, "y")
    with pytest.raises(DataError, match=":2:"):
        ingest_csv(write(tmp_path, "x,c,y\n1,q,1\n"), mixed_schema, "y")


def test_csv_roundtrip_is_lossless(tmp_path, truth_small):
    rng = np.random.default_rng(0)
    e = rng.uniform(0.05, 0.95, truth_small.n)
    ds = truth_small.with_assignment((rng.random(truth_small.n) < e).astype(int), e)
    p = tmp_path / "rt.csv"
    write_csv(ds, p)
    back = ingest_csv(p, ds.schema)
    assert np.array_equal(back.x, ds.x)
    assert np.array_equal(back.treatment, ds.treatment)
    assert np.array_equal(back.outcome, ds.outcome)
    assert np.array_equal(back.propensity, ds.propensity)
    assert np.array_equal(back.truth.ite, ds.truth.ite)


def test_dataset_invariants(mixed_schema):
    x = np.zeros((2, 3))
    with pytest.raises(DataError):
        Dataset(mixed_schema, x, [0, 1], [0, 1], [0.5, 1.0])
    with pytest.raises(DataError):
        Dataset(mixed_schema, np.full((2, 3), np.nan), [0, 1], [0, 1], [0.5, 0.5])
    with pytest.raises(DataError):
        Dataset(mixed_schema, x, [1, 0], [0, 1], [0.5, 0.5], Truth(np.zeros(2), np.ones(2), np.zeros(2)))


def test_dataset_is_immutable(mixed_schema):
    ds = from_matrix(mixed_schema, np.zeros((2, 3)))
    with pytest.raises(ValueError):
        ds.x[0, 0] = 1.0


@pytest.mark.parametrize("n,k,sizes", [(8, 4, [2, 2, 2, 2]), (10, 4, [3, 3, 2, 2])])
def test_split_folds_sizes(n, k, sizes):
    folds = split_folds(n, k, seed=1)
    assert sorted(len(f) for f in folds) == sorted(sizes)
    assert np.array_equal(np.sort(np.concatenate(folds)), np.arange(n))


def test_split_folds_deterministic():
    a, b = split_folds(100, 4, 7), split_folds(100, 4, 7)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


@pytest.mark.parametrize("k", [0, 11])
def test_split_folds_rejects_bad_k(k):
    with pytest.raises(ValueError):
        split_folds(10, k, 0)
