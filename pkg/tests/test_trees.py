import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cfbwp import _tree_py, trees
from cfbwp.trees import (Tree, TreeEnsemble, TreeParamError, TreeParams, fit_boosted,
                         fit_random_forest, fit_tree)

try:
    from cfbwp import _tree_ext
except ImportError:  # extension not built
    _tree_ext = None

needs_ext = pytest.mark.skipif(_tree_ext is None, reason="compiled kernel not built")


def toy(n=400, p=5, seed=0, noise=0.3):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    X[:, 1] = np.round(X[:, 1] * 2)  # ties
    y = np.sin(X[:, 0]) + (X[:, 1] > 0) * 2 + noise * rng.normal(size=n)
    return X, y


def grow(core, X, y, max_depth, min_leaf, k, seed):
    X = np.ascontiguousarray(X, dtype=np.float64)
    order = np.empty((X.shape[1] + 1, X.shape[0]), dtype=np.int64)
    for f in range(X.shape[1]):
        order[f] = np.argsort(X[:, f], kind="stable")
    order[-1] = np.arange(X.shape[0])
    return core.grow_tree(X, np.ascontiguousarray(y, dtype=np.float64), order, max_depth,
                          min_leaf, k, np.random.default_rng(seed))


@needs_ext
@pytest.mark.parametrize("max_depth, min_leaf, k", [(-1, 1, 5), (4, 20, 5), (-1, 5, 2), (0, 1, 5)])
def test_backends_bit_identical(max_depth, min_leaf, k):
    X, y = toy()
    a = grow(_tree_py, X, y, max_depth, min_leaf, k, 7)
    b = grow(_tree_ext, X, y, max_depth, min_leaf, k, 7)
    for u, v in zip(a, b):
        assert u.dtype == v.dtype
        assert np.array_equal(u, v)
    probe = np.ascontiguousarray(toy(1000, seed=9)[0])
    pa = _tree_py.predict_tree(probe, *a[:5])
    pb = _tree_ext.predict_tree(probe, *b[:5])
    assert np.array_equal(pa, pb)


@needs_ext
@settings(max_examples=30, deadline=None)
@given(st.integers(2, 60), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_backends_agree_on_random_data(n, min_leaf, seed):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 4, size=(n, 3)).astype(float)
    y = rng.normal(size=n)
    a = grow(_tree_py, X, y, -1, min_leaf, 2, seed)
    b = grow(_tree_ext, X, y, -1, min_leaf, 2, seed)
    assert all(np.array_equal(u, v) for u, v in zip(a, b))


def test_backend_named():
    assert trees.BACKEND in ("compiled", "python")


def test_fully_grown_tree_memorizes():
    X, y = toy(noise=1.0)
    X[:, 2] = np.arange(len(y))  # guarantees distinct rows
    t = fit_tree(X, y, TreeParams(max_depth=None, min_leaf_size=1))
    assert np.array_equal(t.predict(X), y)


def test_constant_response():
    X, _ = toy()
    y = np.full(len(X), 3.25)
    for params in (TreeParams(None, 1), TreeParams(3, 10, 2, 1.0)):
        f = fit_random_forest(X, y, n_trees=5, params=params)
        assert np.all(f.predict(X) == 3.25)


def leaf_rows(tree, X):
    node = np.zeros(len(X), dtype=int)
    while True:
        f = tree.feature[node]
        if np.all(f < 0):
            return node
        inner = f >= 0
        go = X[inner, f[inner]] <= tree.threshold[node[inner]]
        node[inner] = np.where(go, tree.left[node[inner]], tree.right[node[inner]])


def test_leaf_sizes_and_strict_impurity_reduction():
    X, y = toy()
    t = fit_tree(X, y, TreeParams(max_depth=None, min_leaf_size=7))
    leaves = leaf_rows(t, X)
    counts = np.bincount(leaves, minlength=len(t.feature))
    assert np.all(counts[t.feature < 0] >= 7)
    assert np.array_equal(counts[t.feature < 0], t.n_node[t.feature < 0])

    def sse(rows):
        return float(np.sum((y[rows] - y[rows].mean()) ** 2)) if len(rows) else 0.0

    def members(node):
        out = []
        stack = [node]
        while stack:
            k = stack.pop()
            if t.feature[k] < 0:
                out.extend(np.nonzero(leaves == k)[0])
            else:
                stack += [t.left[k], t.right[k]]
        return np.array(out, dtype=int)

    for k in np.nonzero(t.feature >= 0)[0]:
        assert sse(members(t.left[k])) + sse(members(t.right[k])) < sse(members(k))


def test_max_depth_respected():
    X, y = toy()
    t = fit_tree(X, y, TreeParams(max_depth=3, min_leaf_size=1))
    depth = np.zeros(len(t.feature), dtype=int)
    for k in range(len(t.feature)):
        if t.feature[k] >= 0:
            depth[t.left[k]] = depth[t.right[k]] = depth[k] + 1
    assert depth.max() <= 3


@pytest.mark.parametrize("params", [TreeParams(-1, 1), TreeParams(3, 0), TreeParams(3, 1000),
                                    TreeParams(3, 1, 9), TreeParams(3, 1, None, 0.0)])
def test_bad_params(params):
    X, y = toy()
    with pytest.raises(TreeParamError):
        fit_tree(X, y, params)


def test_ensemble_arg_checks():
    X, y = toy()
    with pytest.raises(TreeParamError):
        fit_boosted(X, y, eta=0.0)
    with pytest.raises(TreeParamError):
        fit_boosted(X, y, eta=1.5)
    with pytest.raises(TreeParamError):
        fit_random_forest(X, y, n_trees=0)


# -- forests -----------------------------------------------------------------

def test_forest_deterministic_and_order_invariant():
    X, y = toy()
    a = fit_random_forest(X, y, n_trees=20, seed=3)
    b = fit_random_forest(X, y, n_trees=20, seed=3)
    assert np.array_equal(a.predict(X), b.predict(X))
    rev = TreeEnsemble(a.kind, a.trees[::-1], a.params, a.eta, a.seed, a.n_features)
    assert np.array_equal(a.predict(X), rev.predict(X))
    perm = np.random.default_rng(0).permutation(a.n_trees)
    shuffled = TreeEnsemble(a.kind, [a.trees[i] for i in perm], a.params)
    assert np.array_equal(a.predict(X), shuffled.predict(X))


def test_forest_beats_single_tree_mostly():
    wins = 0
    for seed in range(10):
        X, y = toy(200, seed=seed, noise=1.0)
        Xt, yt = toy(500, seed=100 + seed, noise=1.0)
        params = TreeParams(None, 3, 3, 1.0)
        one = fit_random_forest(X, y, 1, params, seed)
        many = fit_random_forest(X, y, 50, params, seed)
        wins += np.mean(np.abs(many.predict(Xt) - yt)) <= np.mean(np.abs(one.predict(Xt) - yt))
    assert wins >= 6


# -- boosting ----------------------------------------------------------------

def test_boost_single_exact_tree_zero_residual():
    X, y = toy()
    m = fit_boosted(X, y, eta=1.0, n_trees=1, params=TreeParams(None, 1))
    assert np.array_equal(y - m.predict(X), np.zeros_like(y))
    assert m.train_mse == [0.0]


def test_boost_training_mse_nonincreasing():
    X, y = toy()
    m = fit_boosted(X, y, eta=0.1, n_trees=50, params=TreeParams(3, 10))
    assert all(b <= a for a, b in zip(m.train_mse, m.train_mse[1:]))


def test_boost_prediction_is_sum_of_trees():
    X, y = toy()
    m = fit_boosted(X, y, eta=0.2, n_trees=15, params=TreeParams(3, 10))
    d = json.loads(json.dumps(m.to_dict()))

    def walk(tree, x):
        k = 0
        while tree["feature"][k] >= 0:
            k = tree["left"][k] if x[tree["feature"][k]] <= tree["threshold"][k] else tree["right"][k]
        return tree["value"][k]

    for x, p in zip(X[:50], m.predict(X[:50])):
        total = 0.0
        for t in d["trees"]:
            total = total + d["eta"] * walk(t, x)
        assert total == p


def test_serialization_round_trip_bitwise():
    X, y = toy()
    probe = toy(1000, seed=42)[0]
    for m in (fit_random_forest(X, y, 10, seed=1), fit_boosted(X, y, 0.1, 20, seed=1)):
        back = TreeEnsemble.from_dict(json.loads(json.dumps(m.to_dict())))
        assert np.array_equal(back.predict(probe), m.predict(probe))
        assert back.params == m.params
    t = fit_tree(X, y, TreeParams(4, 5))
    assert np.array_equal(Tree.from_dict(t.to_dict()).predict(probe), t.predict(probe))
