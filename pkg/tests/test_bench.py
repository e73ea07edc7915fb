import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oromet import bench
from oromet.bench import (
    COMBINATIONS,
    LabeledFeatureTable,
    balanced_weights,
    gmean,
    logistic_objective,
    minmax,
    normalize,
    repeated_cv,
    run_experiment,
    stratified_folds,
    train_logistic,
)
from oromet.errors import UndefinedMetricError, ValidationError
from oromet.metric import MetricDataset
from oromet.orometry import enrich

from conftest import synthetic_municipalities


def test_minmax_examples(caplog):
    assert minmax([10, 20, 30]).tolist() == [0, 0.5, 1]
    assert minmax([5, 5, 5]).tolist() == [0, 0, 0]
    assert "constant" in caplog.text


def test_minmax_keeps_zero_pattern():
    col = np.array([0, 0, 3, 0, 7, 0, 0, 1.5])
    out = minmax(col)
    assert np.count_nonzero(out) == 3
    assert np.array_equal(np.argsort(out, kind="stable"), np.argsort(col, kind="stable"))


@given(st.lists(st.integers(0, 2**20), min_size=2, max_size=50), st.integers(-10, 10), st.integers(-1000, 1000))
def test_minmax_invariant_under_exact_affine_maps(xs, k, b):
    x = np.array(xs, dtype=float)
    if x.min() == x.max():
        return
    assert np.array_equal(minmax(x * 2.0**k + b * 2.0**k), minmax(x))


@given(st.lists(st.floats(0, 1e6), min_size=2, max_size=50))
def test_minmax_hits_endpoints(xs):
    out = minmax(xs)
    if min(xs) != max(xs):
        assert out.min() == 0.0 and out.max() == 1.0


def test_gmean_examples():
    a, b, g = gmean(tp=2, fp=2, tn=8, fn=2)
    assert (a, b) == (0.5, 0.8)
    assert g == pytest.approx(math.sqrt(0.4)) and g == pytest.approx(0.63246, abs=1e-5)
    assert gmean(5, 0, 5, 0) == (1.0, 1.0, 1.0)
    assert gmean(0, 0, 10, 3) == (0.0, 1.0, 0.0)
    with pytest.raises(UndefinedMetricError):
        gmean(0, 1, 1, 0)
    with pytest.raises(UndefinedMetricError):
        gmean(1, 0, 0, 1)


@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
def test_gmean_between_class_accuracies(tp, fp, tn, fn):
    if tp + fn == 0 or tn + fp == 0:
        return
    a, b, g = gmean(tp, fp, tn, fn)
    assert min(a, b) - 1e-15 <= g <= max(a, b) + 1e-15
    assert g == gmean(tn, fn, tp, fp)[2]


def test_balanced_weights():
    assert balanced_weights([1, 0, 0, 0]) == (2.0, 4 / 6)


def _fd_grad(params, X, y, sw, C, h=1e-5):
    g = np.zeros_like(params)
    for k in range(len(params)):
        e = np.zeros_like(params)
        e[k] = h
        g[k] = (logistic_objective(params + e, X, y, sw, C)[0] - logistic_objective(params - e, X, y, sw, C)[0]) / (2 * h)
    return g


@pytest.mark.parametrize("seed", range(10))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    X = rng.random((20, 3))
    y = (rng.random(20) < rng.uniform(0.1, 0.5)).astype(int)
    y[:2] = [0, 1]
    sw = np.where(y == 1, *balanced_weights(y))
    params = rng.normal(0, 2, 4)
    C = float(rng.uniform(0.1, 10))
    assert np.max(np.abs(logistic_objective(params, X, y, sw, C)[1] - _fd_grad(params, X, y, sw, C))) < 1e-6


def test_separable_data():
    X = np.array([[1.0]] * 10 + [[0.0]] * 30)
    y = np.array([1] * 10 + [0] * 30)
    m = train_logistic(X, y)
    assert np.array_equal(m.predict(X), y)


def test_symmetric_data_gives_zero_bias():
    X = np.array([[0.1], [0.3], [0.4], [0.9], [0.7], [0.6]])
    y = np.array([0, 0, 0, 1, 1, 1])
    # mirror around 0.5 and centre so the symmetric optimum has bias 0
    m = train_logistic(X - 0.5, y)
    assert abs(m.bias) < 1e-6
    acc = bench.gmean(*bench.confusion(y, m.predict(X - 0.5)))
    assert acc[0] == acc[1]


def test_matches_reference_solver():
    sklearn = pytest.importorskip("sklearn.linear_model")
    rng = np.random.default_rng(11)
    X = rng.random((500, 3))
    y = (rng.random(500) < 0.05 + 0.3 * X[:, 0] ** 2).astype(int)
    ours = train_logistic(X, y, C=1.0)
    ref = sklearn.LogisticRegression(C=1.0, class_weight="balanced", tol=1e-12, max_iter=10_000).fit(X, y)
    assert np.allclose(ours.weights, ref.coef_[0], atol=1e-5)
    assert ours.bias == pytest.approx(ref.intercept_[0], abs=1e-5)


def test_train_rejects_bad_input():
    with pytest.raises(ValidationError):
        train_logistic([[0.0], [1.0]], [1, 1])
    with pytest.raises(ValidationError):
        train_logistic([[0.0], [1.0]], [0, 1], C=0)


@pytest.mark.parametrize("n_pos, n, folds", [(92, 2063, 5), (164, 2863, 5), (7, 40, 3), (5, 5 + 50, 5)])
def test_stratified_folds(n_pos, n, folds):
    y = np.array([1] * n_pos + [0] * (n - n_pos))
    parts = stratified_folds(y, folds, np.random.default_rng(0))
    assert sorted(np.concatenate(parts).tolist()) == list(range(n))
    for p in parts:
        assert abs(np.sum(y[p] == 1) - n_pos / folds) <= 1
        assert abs(len(p) - n / folds) <= 2


def _table(n=400, seed=3):
    ds = MetricDataset.geodesic(synthetic_municipalities(n, seed))
    return normalize(ds, enrich(ds))


def test_normalize_table():
    t = _table()
    for name in ("iso", "pr", "po"):
        assert t.columns[name].min() == 0 and t.columns[name].max() == 1
    with pytest.raises(ValidationError):
        t.matrix([])
    with pytest.raises(ValidationError):
        t.matrix(["height"])


def test_table_needs_both_classes():
    with pytest.raises(ValidationError):
        LabeledFeatureTable({"po": np.array([0.0, 1.0])}, np.array([0, 0]))


def test_majority_predictor_scores_zero(monkeypatch):
    t = _table()
    monkeypatch.setattr(bench.LogisticModel, "predict", lambda self, X: np.zeros(len(X), dtype=int))
    res = repeated_cv(t, ["po"], repeats=2, folds=5, seed=1)
    assert res.mean().tolist() == [0.0, 1.0, 0.0]


def test_repeated_cv_deterministic_and_thread_independent():
    t = _table()
    a = repeated_cv(t, ["iso", "po"], repeats=4, folds=5, seed=9)
    b = repeated_cv(t, ["iso", "po"], repeats=4, folds=5, seed=9, threads=3)
    assert a.scores.shape == (20, 3)
    assert np.array_equal(a.scores, b.scores)
    c = repeated_cv(t, ["iso", "po"], repeats=4, folds=5, seed=10)
    assert not np.array_equal(a.scores, c.scores)


def test_repeated_cv_argument_checks():
    with pytest.raises(ValidationError):
        repeated_cv(_table(), ["iso"], repeats=0)
    with pytest.raises(ValidationError):
        repeated_cv(_table(), ["iso"], folds=1)


def test_run_experiment_shape_and_csv():
    rep = run_experiment(_table(), repeats=2, folds=3, seed=0)
    assert [r.features for r in rep.results] == list(COMBINATIONS)
    assert [("+".join(c)) for c in COMBINATIONS] == ["iso", "pr", "po", "iso+pr", "iso+po", "pr+po", "iso+pr+po"]
    lines = rep.to_csv().splitlines()
    assert lines[0] == "features,metric,mean,std"
    assert len(lines) == 1 + 7 * 3
    for r in rep.results:
        assert np.all((r.scores >= 0) & (r.scores <= 1))
        assert np.allclose(r.scores[:, 2], np.sqrt(r.scores[:, 0] * r.scores[:, 1]))
    assert "iso+pr+po" in rep.to_text()
    assert rep.gmean_of("iso+po") == rep.row(("iso", "po")).mean()[2]


def test_std_is_between_repeats():
    t = _table()
    res = repeated_cv(t, ["iso"], repeats=6, folds=4, seed=2)
    per_repeat = res.scores.reshape(6, 4, 3).mean(axis=1)
    assert np.array_equal(res.repeat_means(), per_repeat)
    assert np.allclose(res.std(), per_repeat.std(axis=0))
    assert np.allclose(res.mean(), per_repeat.mean(axis=0))
    assert np.allclose(res.fold_std(), res.scores.std(axis=0))
    assert repeated_cv(t, ["iso"], repeats=1, folds=4, seed=2).std().tolist() == [0, 0, 0]
