import numpy as np
import pytest

from demtd.errors import BadParam, DimMismatch, EmptyTrainSet, SingleClass
from demtd.evaluation import auc_score
from demtd.forest import ForestModel, ForestParams, predict_rf, train_rf, tree_streams


def clusters(rng, n=100, p=5, shift=3.0):
    X = rng.normal(size=(2 * n, p))
    y = np.repeat([0, 1], n)
    X[y == 1] += shift
    return X, y


def test_default_mtry():
    assert ForestParams().resolve_mtry(364) == 19
    assert ForestParams().resolve_mtry(10) == 3
    assert ForestParams().n_trees == 5000
    with pytest.raises(BadParam):
        ForestParams(mtry=11).resolve_mtry(10)


def test_separated_clusters_out_of_sample(rng):
    X, y = clusters(rng)
    Xt, yt = clusters(rng)
    model = train_rf(X, y, ForestParams(n_trees=200, seed=1))
    assert auc_score(predict_rf(model, Xt), yt) >= 0.99


def test_determinism_and_serialisation(rng):
    X, y = clusters(rng, 40, 4, 1.0)
    params = ForestParams(n_trees=50, seed=7)
    a = train_rf(X, y, params)
    b = train_rf(X, y, params)
    assert np.array_equal(predict_rf(a, X), predict_rf(b, X))
    assert a.to_bytes() == b.to_bytes()
    back = ForestModel.from_bytes(a.to_bytes())
    assert np.array_equal(predict_rf(back, X), predict_rf(a, X))
    assert back.params == params
    other = train_rf(X, y, ForestParams(n_trees=50, seed=8))
    assert not np.array_equal(predict_rf(other, X), predict_rf(a, X))


def test_tree_prefix_independent_of_forest_size(rng):
    X, y = clusters(rng, 30, 3, 1.0)
    small = train_rf(X, y, ForestParams(n_trees=10, seed=3))
    big = train_rf(X, y, ForestParams(n_trees=40, seed=3))
    w = small.feature.shape[1]
    assert np.array_equal(small.feature, big.feature[:10, :w])
    assert np.array_equal(small.threshold, big.threshold[:10, :w])


def test_sample_order_invariance(rng):
    X, y = clusters(rng, 30, 4, 1.0)
    params = ForestParams(n_trees=30, seed=5)
    boot, _ = tree_streams(params.seed, params.n_trees, y.size)
    perm = rng.permutation(y.size)
    inv = np.argsort(perm)
    a = train_rf(X, y, params, boot=boot)
    b = train_rf(X[perm], y[perm], params, boot=inv[boot])
    Xt = rng.normal(size=(50, 4))
    assert np.array_equal(predict_rf(a, Xt), predict_rf(b, Xt))


def test_scores_and_training_fit(rng):
    X, y = clusters(rng, 20, 3, 0.5)
    model = train_rf(X, y, ForestParams(n_trees=101, seed=0))
    s = predict_rf(model, X)
    assert np.all((s >= 0) & (s <= 1))
    assert np.all(s[y == 1] >= 0.5)
    assert np.all(s[y == 0] < 0.5)


def test_unanimous_and_split_votes():
    X = np.array([[0.0], [1.0]])
    y = np.array([0, 1])
    model = train_rf(X, y, ForestParams(n_trees=20, bootstrap=False))
    assert predict_rf(model, [[5.0]])[0] == 1.0
    assert predict_rf(model, [[-5.0]])[0] == 0.0
    # hand-built two-tree forest voting opposite ways
    model.leaf_vote[:] = 0
    model.leaf_vote[0] = 1
    model.feature[:] = -1
    assert predict_rf(model, [[0.3]])[0] == 1 / 20


def test_gini_importance_points_at_signal(rng):
    X = rng.normal(size=(200, 6))
    y = (X[:, 2] > 0).astype(int)
    model = train_rf(X, y, ForestParams(n_trees=100, seed=0))
    assert np.argmax(model.gini_importance) == 2
    assert np.all(model.gini_importance >= 0)


def test_class_balance_runs(rng):
    X = rng.normal(size=(60, 3))
    y = np.r_[np.zeros(50, int), np.ones(10, int)]
    X[y == 1] += 2
    model = train_rf(X, y, ForestParams(n_trees=50, class_balance=True))
    assert predict_rf(model, X).shape == (60,)


def test_errors(rng):
    X = rng.normal(size=(10, 3))
    with pytest.raises(SingleClass):
        train_rf(X, np.zeros(10, int), ForestParams(n_trees=5))
    with pytest.raises(EmptyTrainSet):
        train_rf(np.zeros((0, 3)), np.zeros(0, int), ForestParams(n_trees=5))
    y = np.r_[np.zeros(5, int), np.ones(5, int)]
    model = train_rf(X, y, ForestParams(n_trees=5))
    with pytest.raises(DimMismatch):
        predict_rf(model, np.zeros((2, 4)))
    with pytest.raises(BadParam):
        ForestModel.from_bytes(b"garbage")
