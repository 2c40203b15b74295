"""Container types, fold construction, and dataset CSV round trips."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvconf.datamodel import (
    Dataset,
    DatasetFormatError,
    DivisibilityError,
    DomainError,
    FittedModel,
    FoldPlan,
    LearnerSpec,
    LossMatrix,
    make_folds,
    load_dataset_csv,
    save_dataset_csv,
    validate_dataset,
)
from cvconf.learners import SgdConfig


def test_make_folds_strict_first_and_last_block():
    plan = make_folds(10, 5)
    assert plan.n == 10 and plan.V == 5
    assert plan.index_sets[0].tolist() == [0, 1]
    assert plan.index_sets[4].tolist() == [8, 9]


def test_make_folds_balanced_sizes_larger_first():
    plan = make_folds(7, 3, mode="balanced")
    assert [len(ix) for ix in plan.index_sets] == [3, 2, 2]


def test_make_folds_strict_rejects_nondivisible():
    with pytest.raises(DivisibilityError):
        make_folds(7, 3)


def test_make_folds_rejects_bad_domain():
    with pytest.raises(DomainError):
        make_folds(1, 2)
    with pytest.raises(DomainError):
        make_folds(10, 1)


@given(st.integers(min_value=2, max_value=12), st.integers(min_value=1, max_value=10))
def test_make_folds_strict_matches_block_formula(V, mult):
    # fold v (1-based) must be exactly {n(v-1)/V + 1, ..., nv/V}
    n = V * mult
    plan = make_folds(n, V)
    for v in range(V):
        lo = n * v // V
        hi = n * (v + 1) // V
        assert plan.index_sets[v].tolist() == list(range(lo, hi))


@given(st.integers(min_value=2, max_value=9), st.integers(min_value=0, max_value=40))
def test_make_folds_balanced_partitions_contiguously(V, extra):
    n = V + extra
    plan = make_folds(n, V, mode="balanced")
    flat = np.concatenate(plan.index_sets)
    assert flat.tolist() == list(range(n))
    sizes = [len(ix) for ix in plan.index_sets]
    assert max(sizes) - min(sizes) <= 1
    assert sorted(sizes, reverse=True) == sizes
    for v in range(V):
        assert np.array_equal(plan.fold_of[plan.index_sets[v]], np.full(sizes[v], v))


def test_make_folds_deterministic():
    a = make_folds(20, 5)
    b = make_folds(20, 5)
    assert np.array_equal(a.fold_of, b.fold_of)


def test_train_indices_is_ascending_complement():
    plan = make_folds(10, 5)
    tr = plan.train_indices(2)
    assert tr.tolist() == [0, 1, 2, 3, 6, 7, 8, 9]


def test_validate_dataset_clean():
    ds = Dataset(np.ones((4, 2)), np.zeros(4))
    assert validate_dataset(ds) == []


def test_validate_dataset_reports_row_mismatch_and_nonfinite():
    ds = Dataset(np.ones((4, 2)), np.zeros(3))
    problems = validate_dataset(ds)
    assert any("row" in p for p in problems)

    bad = np.ones((3, 2))
    bad[1, 0] = np.nan
    ds2 = Dataset(bad, np.array([1.0, np.inf, 0.0]))
    problems2 = validate_dataset(ds2)
    assert any("features" in p for p in problems2)
    assert any("response" in p for p in problems2)


def test_dataset_csv_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    ds = Dataset(rng.normal(size=(5, 3)), rng.normal(size=5))
    path = tmp_path / "data.csv"
    save_dataset_csv(ds, path)
    header = path.read_text().splitlines()[0]
    assert header.split(",") == ["y", "z1", "z2", "z3"]
    back = load_dataset_csv(path)
    assert np.array_equal(back.features, ds.features)
    assert np.array_equal(back.response, ds.response)


def test_dataset_csv_rejects_missing_fields(tmp_path):
    path = tmp_path / "broken.csv"
    path.write_text("y,z1,z2\n1.0,2.0,3.0\n4.0,5.0\n")
    with pytest.raises(DatasetFormatError):
        load_dataset_csv(path)


def test_dataset_csv_requires_response_column(tmp_path):
    path = tmp_path / "nocol.csv"
    path.write_text("resp,z1\n1.0,2.0\n")
    with pytest.raises(DatasetFormatError):
        load_dataset_csv(path)


def test_loss_matrix_rejects_nonfinite_and_row_mismatch():
    plan = make_folds(4, 2)
    vals = np.ones((4, 2))
    LossMatrix(vals, plan, ("a", "b"))
    vals_bad = vals.copy()
    vals_bad[0, 0] = np.nan
    with pytest.raises(DomainError):
        LossMatrix(vals_bad, plan, ("a", "b"))
    with pytest.raises(DomainError):
        LossMatrix(np.ones((3, 2)), plan, ("a", "b"))


def test_learner_spec_validation():
    LearnerSpec("ols").validate()
    LearnerSpec("lasso", lam=0.3).validate()
    LearnerSpec("forward", steps=2).validate()
    LearnerSpec("series", truncation=3).validate()
    with pytest.raises(DomainError):
        LearnerSpec("lasso", lam=-0.1).validate()
    with pytest.raises(DomainError):
        LearnerSpec("forward", steps=-1).validate()
    with pytest.raises(DomainError):
        LearnerSpec("series", truncation=0).validate()
    with pytest.raises(DomainError):
        LearnerSpec("kitchen_sink").validate()
    with pytest.raises(DomainError):
        LearnerSpec("ols", loss="hinge").validate()
    with pytest.raises(DomainError):
        LearnerSpec("sgd").validate()  # needs an attached SgdConfig
    LearnerSpec("sgd", sgd=SgdConfig.for_ridge(lam=0.5, step_exponent=0.6,
                                               radius_x=1.0, radius_theta=1.0)).validate()


def test_learner_spec_is_hashable_value_type():
    a = LearnerSpec("lasso", lam=0.25)
    b = LearnerSpec("lasso", lam=0.25)
    assert a == b and hash(a) == hash(b)
    assert len({a, b}) == 1


def test_fitted_model_predict_is_affine():
    m = FittedModel(family="ols", coef=np.array([2.0, -1.0]), intercept=0.5)
    Z = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 3.0]])
    np.testing.assert_allclose(m.predict(Z), [2.5, -0.5, 1.5])
