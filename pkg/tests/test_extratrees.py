import json

import numpy as np
import pytest

from prime_estate import extratrees as et
from prime_estate.errors import DimensionMismatch, EmptyTrainingSet
from prime_estate.extratrees import ExtraTreesConfig, Forest


def _data(n=150, d=6, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = X[:, 0] ** 2 + np.sin(X[:, 1]) + rng.normal(0, 0.1, n)
    return X, y


@pytest.mark.parametrize("criterion", ["mse", "mae"])
def test_interpolates_training_rows(criterion):
    X, y = _data()
    forest = et.fit(X, y, ExtraTreesConfig(5, criterion, bootstrap=False, seed=3))
    pred = et.predict(forest, X)
    ss_res = np.sum((y - pred) ** 2)
    assert 1 - ss_res / np.sum((y - y.mean()) ** 2) == 1.0


def test_thresholds_lie_strictly_inside_node_ranges():
    X, y = _data(80, 3)
    X[:, 2] = np.round(X[:, 2])  # repeated values
    forest = et.fit(X, y, ExtraTreesConfig(3, "mse", False, seed=1))
    for t in forest.trees:
        def walk(node, rows):
            if t.feature[node] < 0:
                assert len(rows) == t.n_samples[node]
                vals = y[rows]
                assert t.value[node] == (vals[0] if np.all(vals == vals[0]) else vals.mean())
                return
            f, thr = t.feature[node], t.threshold[node]
            col = X[rows, f]
            assert col.min() < thr < col.max()
            walk(t.left[node], rows[col <= thr])
            walk(t.right[node], rows[col > thr])

        walk(0, np.arange(80))


def test_scale_equivariance():
    X, y = _data(200, 5, seed=4)
    scale = np.array([1e-3, 2.0, 7.5, 1e4, 0.3])
    Q = np.random.default_rng(5).normal(size=(50, 5))
    for criterion in ("mse", "mae"):
        cfg = ExtraTreesConfig(10, criterion, True, seed=11)
        a = et.predict(et.fit(X, y, cfg), Q)
        b = et.predict(et.fit(X * scale, y, cfg), Q * scale)
        assert np.max(np.abs(a - b)) <= 1e-9


def test_same_seed_same_forest():
    X, y = _data()
    cfg = ExtraTreesConfig(4, "mae", True, seed=42)
    a, b = et.fit(X, y, cfg), et.fit(X, y, cfg)
    assert a.to_dict() == b.to_dict()
    c = et.fit(X, y, ExtraTreesConfig(4, "mae", True, seed=43))
    assert c.to_dict() != a.to_dict()


def test_trees_are_independent_streams():
    # growing more trees does not change the earlier ones
    X, y = _data()
    small = et.fit(X, y, ExtraTreesConfig(2, seed=7))
    big = et.fit(X, y, ExtraTreesConfig(5, seed=7))
    assert [t.to_dict() for t in small.trees] == [t.to_dict() for t in big.trees[:2]]


def test_json_round_trip():
    X, y = _data()
    forest = et.fit(X, y, ExtraTreesConfig(3, "mse", True, seed=2))
    back = Forest.from_dict(json.loads(json.dumps(forest.to_dict())))
    assert np.array_equal(et.predict(back, X), et.predict(forest, X))


def test_constant_target_gives_single_leaf():
    X, _ = _data(30)
    forest = et.fit(X, np.full(30, 2.5), ExtraTreesConfig(2))
    assert all(t.node_count == 1 for t in forest.trees)
    assert np.all(et.predict(forest, X) == 2.5)


def test_constant_features_give_single_leaf():
    X = np.ones((20, 3))
    y = np.arange(20.0)
    forest = et.fit(X, y, ExtraTreesConfig(1))
    assert forest.trees[0].node_count == 1
    assert et.predict(forest, X[:1])[0] == pytest.approx(y.mean())


def test_more_trees_reduce_spread():
    X, y = _data(300, 4, seed=8)
    Q = np.random.default_rng(9).normal(size=(100, 4))
    spreads = []
    for n in (2, 32):
        preds = [et.predict(et.fit(X, y, ExtraTreesConfig(n, "mse", True, seed=s)), Q) for s in range(8)]
        spreads.append(np.mean(np.var(preds, axis=0)))
    assert spreads[1] < spreads[0]


def test_absolute_deviation_helper():
    rng = np.random.default_rng(3)
    for n in (1, 2, 5, 10):
        v = rng.normal(size=n)
        assert et._abs_dev_sum(v.copy(), n) == pytest.approx(np.abs(v - np.median(v)).sum())


def test_errors():
    with pytest.raises(EmptyTrainingSet):
        et.fit(np.zeros((0, 2)), np.zeros(0))
    forest = et.fit(np.eye(3), np.arange(3.0), ExtraTreesConfig(1))
    with pytest.raises(DimensionMismatch):
        et.predict(forest, np.zeros((1, 2)))
    with pytest.raises(ValueError):
        ExtraTreesConfig(criterion="gini")
