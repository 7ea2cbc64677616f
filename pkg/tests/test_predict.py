import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latentgm.data import DataError, MixedDataset, VariableSchema
from latentgm.em import EMConfig, LatentParams
from latentgm.gibbs import GibbsConfig
from latentgm.precision import CLIME, GLASSO
from latentgm.predict import (CVResult, classify_row, classify_rows, covariance_from_precision,
                              cross_validate, fold_assignment, impute_dataset)


def Phi(x):
    return 0.5 * math.erfc(-x / math.sqrt(2))


def two_column(x, y, target_levels=2, cuts=(0.0,)):
    schema = (VariableSchema.continuous("x"), VariableSchema.categorical("y", target_levels))
    thr = {1: np.array([-np.inf, *cuts, np.inf])}
    ds = MixedDataset(schema, [[x, y]])
    return ds, thr, schema


def test_identity_covariance_gives_marginal_masses():
    ds, thr, schema = two_column(2.0, 0, target_levels=3, cuts=(-0.5, 1.0))
    params = LatentParams(np.zeros(2), np.eye(2), thr, schema)
    cfg = GibbsConfig(50, 20_000, seed=4)
    label, probs = classify_row(0, 1, ds, params, np.eye(2), cfg)
    expected = np.array([Phi(-0.5), Phi(1.0) - Phi(-0.5), 1 - Phi(1.0)])
    assert np.max(np.abs(probs - expected)) < 0.01
    assert label == int(np.argmax(expected))
    assert probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_correlated_feature_shifts_probability():
    ds, thr, schema = two_column(1.0, 0)
    sigma = np.array([[1, 0.8], [0.8, 1]])
    params = LatentParams(np.zeros(2), sigma, thr, schema)
    label, probs = classify_row(0, 1, ds, params, np.linalg.inv(sigma),
                                GibbsConfig(50, 20_000, seed=1))
    assert probs[1] == pytest.approx(Phi(0.8 / math.sqrt(0.36)), abs=0.01)
    assert label == 1


def test_missing_features_reduce_to_marginal():
    ds, thr, schema = two_column(np.nan, np.nan, target_levels=3, cuts=(-1.0, -0.5))
    sigma = np.array([[1, 0.6], [0.6, 1]])
    params = LatentParams(np.zeros(2), sigma, thr, schema)
    label, probs = classify_row(0, 1, ds, params, np.linalg.inv(sigma),
                                GibbsConfig(50, 20_000, seed=2))
    expected = np.array([Phi(-1.0), Phi(-0.5) - Phi(-1.0), 1 - Phi(-0.5)])
    assert np.max(np.abs(probs - expected)) < 0.015
    assert label == 2


def test_ties_break_toward_smallest_level():
    schema = (VariableSchema.continuous("x"), VariableSchema.categorical("y", 4))
    ds = MixedDataset(schema, [[0.0, 0]])
    # two equal-mass levels, the other two empty
    params = LatentParams(np.zeros(2), np.eye(2),
                          {1: np.array([-np.inf, -np.inf, 0.0, np.inf, np.inf])}, schema)
    ties = 0
    for seed in range(20):
        labels, probs = classify_rows(ds, 1, params, np.eye(2), GibbsConfig(0, 2, seed=seed))
        if probs[0, 1] == probs[0, 2] == 0.5:
            ties += 1
            assert labels[0] == 1
    assert ties > 0


def test_continuous_target_rejected():
    ds, thr, schema = two_column(0.0, 0)
    params = LatentParams(np.zeros(2), np.eye(2), thr, schema)
    with pytest.raises(DataError):
        classify_row(0, 0, ds, params, np.eye(2))


def test_singular_precision_rejected():
    with pytest.raises(np.linalg.LinAlgError):
        covariance_from_precision(np.ones((2, 2)))


@settings(max_examples=10, deadline=None)
@given(st.permutations(range(4)))
def test_label_invariant_to_feature_order(perm):
    # target first in the canonical order; features strongly tied to it
    schema = (VariableSchema.categorical("y", 2),) + tuple(
        VariableSchema.continuous(f"x{k}") for k in range(3))
    sigma = np.full((4, 4), 0.5) + 0.5 * np.eye(4)
    thr = {0: np.array([-np.inf, 0.1, np.inf])}
    values = np.array([[0, 1.2, 0.4, np.nan], [1, -1.5, -0.3, -1.0]])
    cfg = GibbsConfig(50, 4000, seed=8)
    base = classify_rows(MixedDataset(schema, values), 0,
                         LatentParams(np.zeros(4), sigma, thr, schema), sigma, cfg)
    perm = np.asarray(perm)
    inv = np.argsort(perm)
    schema_p = tuple(schema[k] for k in perm)
    params_p = LatentParams(np.zeros(4), sigma[np.ix_(perm, perm)], {int(inv[0]): thr[0]},
                            schema_p)
    moved = classify_rows(MixedDataset(schema_p, values[:, perm]), int(inv[0]), params_p,
                          sigma[np.ix_(perm, perm)], cfg)
    assert np.array_equal(base[0], moved[0])
    assert np.max(np.abs(base[1] - moved[1])) < 0.05


def test_no_missing_cells_is_copy():
    ds, thr, schema = two_column(0.3, 1)
    params = LatentParams(np.zeros(2), np.eye(2), thr, schema)
    out = impute_dataset(ds, params, draws=3)
    assert len(out) == 3
    assert all(np.array_equal(o.values, ds.values) for o in out)


def test_impute_binary_frequency():
    schema = (VariableSchema.continuous("x"), VariableSchema.categorical("y", 2))
    thr = {1: np.array([-np.inf, 0.4, np.inf])}
    ds = MixedDataset(schema, [[0.7, np.nan]])
    params = LatentParams(np.zeros(2), np.eye(2), thr, schema)
    draws = impute_dataset(ds, params, GibbsConfig(50, 1, seed=3), draws=10_000)
    ones = np.mean([d.values[0, 1] for d in draws])
    p = 1 - Phi(0.4)
    assert abs(ones - p) < 3 * math.sqrt(p * (1 - p) / 10_000)
    assert all(d.values[0, 0] == 0.7 for d in draws)


def test_impute_continuous_conditional_mean():
    schema = (VariableSchema.continuous("a"), VariableSchema.continuous("b"))
    ds = MixedDataset(schema, [[1.0, np.nan]])
    params = LatentParams(np.zeros(2), np.array([[1, 0.8], [0.8, 1]]), {}, schema)
    draws = impute_dataset(ds, params, GibbsConfig(50, 1, seed=5), draws=10_000)
    assert np.mean([d.values[0, 1] for d in draws]) == pytest.approx(0.8, abs=0.02)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_imputation_preserves_observed_and_levels(seed):
    rng = np.random.default_rng(seed)
    schema = (VariableSchema.continuous("a"), VariableSchema.categorical("b", 3),
              VariableSchema.categorical("c", 2))
    values = np.column_stack([rng.standard_normal(8), rng.integers(0, 3, 8),
                              rng.integers(0, 2, 8)]).astype(float)
    values[rng.random((8, 3)) < 0.3] = np.nan
    ds = MixedDataset(schema, values)
    thr = {1: np.array([-np.inf, -0.3, 0.5, np.inf]), 2: np.array([-np.inf, 0.0, np.inf])}
    sigma = np.array([[1, 0.3, 0.2], [0.3, 1, 0.4], [0.2, 0.4, 1]])
    out = impute_dataset(ds, LatentParams(np.zeros(3), sigma, thr, schema),
                         GibbsConfig(10, 1, seed=seed), draws=2)
    for o in out:
        assert not o.missing.any()
        observed = ~ds.missing
        assert np.array_equal(o.values[observed], ds.values[observed])
        assert set(np.unique(o.values[:, 1])) <= {0, 1, 2}
        assert set(np.unique(o.values[:, 2])) <= {0, 1}


def test_imputation_independent_of_threads():
    schema = (VariableSchema.continuous("a"), VariableSchema.categorical("b", 2))
    values = np.array([[np.nan, 1], [0.4, np.nan], [np.nan, np.nan], [1.0, 0]])
    ds = MixedDataset(schema, values)
    params = LatentParams(np.zeros(2), np.array([[1, 0.5], [0.5, 1]]),
                          {1: np.array([-np.inf, 0.0, np.inf])}, schema)
    a = impute_dataset(ds, params, GibbsConfig(10, 1, seed=1), draws=3, threads=1)
    b = impute_dataset(ds, params, GibbsConfig(10, 1, seed=1), draws=3, threads=4)
    assert all(np.array_equal(x.values, y.values) for x, y in zip(a, b))


def small_mixed(seed, n=40):
    rng = np.random.default_rng(seed)
    cov = np.array([[1.0, 0.7, 0.2], [0.7, 1.0, 0.1], [0.2, 0.1, 1.0]])
    z = rng.multivariate_normal(np.zeros(3), cov, size=n)
    values = z.copy()
    values[:, 0] = (z[:, 0] > 0).astype(float)
    schema = (VariableSchema.categorical("y", 2), VariableSchema.continuous("a"),
              VariableSchema.continuous("b"))
    return MixedDataset(schema, values)


FAST_EM = EMConfig(max_iters=2, gibbs=GibbsConfig(10, 30))


def test_fold_assignment_balanced_and_seeded():
    a = fold_assignment(23, 5, seed=1)
    assert sorted(np.bincount(a)) == [4, 4, 5, 5, 5]
    assert np.array_equal(a, fold_assignment(23, 5, seed=1))


@pytest.mark.parametrize("method", [GLASSO, CLIME])
def test_cross_validate_shapes_and_selection(method):
    ds = small_mixed(0)
    res = cross_validate(ds, "y", lambdas=[0.5, 0.1, 0.01], method=method, folds=4,
                         cfg=GibbsConfig(10, 50), em_cfg=FAST_EM, seed=3)
    assert res.errors.shape == (4, 3)
    assert np.all((res.errors >= 0) & (res.errors <= 1))
    assert res.best_error == pytest.approx(res.mean.min())
    # correlated feature should beat chance
    assert res.best_error < 0.4


def test_cross_validate_leave_one_out():
    ds = small_mixed(1, n=8)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = cross_validate(ds, 0, lambdas=[0.2], folds=8, cfg=GibbsConfig(5, 20),
                             em_cfg=FAST_EM)
    assert res.errors.shape == (8, 1)
    assert set(np.unique(res.errors)) <= {0.0, 1.0}


def test_cross_validate_skips_unlabelled_rows():
    ds = small_mixed(2, n=30)
    values = ds.values.copy()
    values[:10, 0] = np.nan
    res = cross_validate(ds.with_values(values), 0, lambdas=[0.3], folds=3,
                         cfg=GibbsConfig(5, 20), em_cfg=FAST_EM)
    assert np.all(np.isfinite(res.errors))


def test_single_class_training_fold_warns():
    ds = small_mixed(3, n=12)
    values = ds.values.copy()
    values[:, 0] = 0.0
    values[0, 0] = 1.0
    with pytest.warns(RuntimeWarning, match="single class"):
        cross_validate(ds.with_values(values), 0, lambdas=[0.3], folds=12,
                       cfg=GibbsConfig(5, 20), em_cfg=FAST_EM)


def test_cross_validate_argument_checks():
    ds = small_mixed(0, n=10)
    with pytest.raises(DataError):
        cross_validate(ds, "a", lambdas=[0.1])
    with pytest.raises(ValueError):
        cross_validate(ds, "y", lambdas=[0.1], folds=1)


def test_cv_result_tie_prefers_larger_lambda(tmp_path):
    res = CVResult(np.array([0.5, 0.2, 0.1]), np.array([[0.3, 0.2, 0.2], [0.3, 0.2, 0.2]]),
                   GLASSO)
    assert res.best_index == 1 and res.best_lambda == 0.2
    res.write_csv(tmp_path / "cv.csv")
    lines = (tmp_path / "cv.csv").read_text().splitlines()
    assert lines[0] == "lambda,mean_error,sd_error,selected"
    assert lines[2].endswith(",1")
