"""Regression trees, random forests and shrunken boosted ensembles.

The split search runs in the compiled ``_tree_ext`` kernel when it is built
and importable, otherwise in the numpy twin ``_tree_py``. Set
``CFBWP_PURE_PYTHON=1`` to force the fallback. ``BACKEND`` names the one
in use.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import _tree_py

if os.environ.get("CFBWP_PURE_PYTHON") == "1":
    _core = _tree_py
    BACKEND = "python"
else:
    try:
        from . import _tree_ext as _core
        BACKEND = "compiled"
    except ImportError:  # extension not built
        _core = _tree_py
        BACKEND = "python"


class TreeParamError(ValueError):
    pass


@dataclass(frozen=True)
class TreeParams:
    """Per-tree growth controls.

    ``max_depth=None`` grows until ``min_leaf_size`` or purity stops it.
    ``features_per_split=None`` examines every feature at every node.
    ``sample_fraction`` is the bootstrap size relative to the data; ``None``
    trains on the rows as given (no resampling).
    """

    max_depth: int | None = 6
    min_leaf_size: int = 20
    features_per_split: int | None = None
    sample_fraction: float | None = None

    def validate(self, n_rows: int, n_features: int) -> None:
        if self.max_depth is not None and self.max_depth < 0:
            raise TreeParamError(f"max_depth must be >= 0, got {self.max_depth}")
        if self.min_leaf_size < 1:
            raise TreeParamError(f"min_leaf_size must be >= 1, got {self.min_leaf_size}")
        if self.min_leaf_size > n_rows:
            raise TreeParamError(
                f"min_leaf_size={self.min_leaf_size} exceeds the {n_rows} training rows"
            )
        k = self.features_per_split
        if k is not None and not 1 <= k <= n_features:
            raise TreeParamError(f"features_per_split must be in [1, {n_features}], got {k}")
        if self.sample_fraction is not None and not self.sample_fraction > 0:
            raise TreeParamError(f"sample_fraction must be positive, got {self.sample_fraction}")


@dataclass
class Tree:
    """Flat binary regression tree; ``feature[i] == -1`` marks leaf ``i``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_node: np.ndarray

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _core.predict_tree(X, self.feature, self.threshold, self.left,
                                  self.right, self.value)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_node": self.n_node.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=np.asarray(d["threshold"], dtype=np.float64),
            left=np.asarray(d["left"], dtype=np.int64),
            right=np.asarray(d["right"], dtype=np.int64),
            value=np.asarray(d["value"], dtype=np.float64),
            n_node=np.asarray(d["n_node"], dtype=np.int64),
        )


def fit_tree(X, y, params: TreeParams, rng: np.random.Generator | None = None) -> Tree:
    """Grow one tree on ``(X, y)``, bootstrapping first if the params ask for it."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n, p = X.shape
    if n == 0:
        raise TreeParamError("cannot fit a tree on zero rows")
    params.validate(n, p)
    if rng is None:
        rng = np.random.default_rng(0)
    if params.sample_fraction is not None:
        m = max(int(round(params.sample_fraction * n)), params.min_leaf_size, 1)
        rows = rng.integers(0, n, size=m)
        X = np.ascontiguousarray(X[rows])
        y = np.ascontiguousarray(y[rows])
    m = X.shape[0]
    order = np.empty((p + 1, m), dtype=np.int64)
    for f in range(p):
        order[f] = np.argsort(X[:, f], kind="stable")
    order[p] = np.arange(m)
    max_depth = -1 if params.max_depth is None else params.max_depth
    k = p if params.features_per_split is None else params.features_per_split
    return Tree(*_core.grow_tree(X, y, order, max_depth, params.min_leaf_size, k, rng))


@dataclass
class TreeEnsemble:
    """A random forest (mean of trees) or boosted model (sum of eta * tree)."""

    kind: str
    trees: list[Tree]
    params: TreeParams
    eta: float = 1.0
    seed: int = 0
    n_features: int = 0
    train_mse: list[float] = field(default_factory=list)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def tree_predictions(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return np.stack([t.predict(X) for t in self.trees])

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if self.kind == "random_forest":
            # sorting per column makes the mean independent of tree order
            per_tree = np.sort(self.tree_predictions(X), axis=0)
            return per_tree.sum(axis=0) / len(self.trees)
        out = np.zeros(X.shape[0])
        for t in self.trees:
            out = out + self.eta * t.predict(X)
        return out

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "eta": self.eta,
            "seed": self.seed,
            "n_features": self.n_features,
            "params": {
                "max_depth": self.params.max_depth,
                "min_leaf_size": self.params.min_leaf_size,
                "features_per_split": self.params.features_per_split,
                "sample_fraction": self.params.sample_fraction,
            },
            "train_mse": list(self.train_mse),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeEnsemble":
        return cls(
            kind=d["kind"],
            trees=[Tree.from_dict(t) for t in d["trees"]],
            params=TreeParams(**d["params"]),
            eta=float(d["eta"]),
            seed=int(d["seed"]),
            n_features=int(d["n_features"]),
            train_mse=[float(v) for v in d.get("train_mse", [])],
        )


DEFAULT_FOREST_PARAMS = TreeParams(max_depth=6, min_leaf_size=20, features_per_split=3,
                                   sample_fraction=1.0)
DEFAULT_BOOST_PARAMS = TreeParams(max_depth=4, min_leaf_size=20)


def fit_random_forest(X, y, n_trees: int = 500, params: TreeParams = DEFAULT_FOREST_PARAMS,
                      seed: int = 0) -> TreeEnsemble:
    """Average of ``n_trees`` trees, each grown on its own seeded bootstrap sample.

    Tree ``b`` draws from a generator spawned off ``seed``, so any tree can be
    regrown in isolation and the result does not depend on training order.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if n_trees < 1:
        raise TreeParamError(f"n_trees must be >= 1, got {n_trees}")
    if X.shape[0] == 0:
        raise TreeParamError("cannot fit a forest on zero rows")
    params.validate(X.shape[0], X.shape[1])
    children = np.random.SeedSequence(seed).spawn(n_trees)
    trees = [fit_tree(X, y, params, np.random.default_rng(s)) for s in children]
    return TreeEnsemble("random_forest", trees, params, eta=1.0, seed=seed,
                        n_features=X.shape[1])


def fit_boosted(X, y, eta: float = 0.1, n_trees: int = 200,
                params: TreeParams = DEFAULT_BOOST_PARAMS, seed: int = 0) -> TreeEnsemble:
    """Shrunken stagewise fit: start from zero, fit each tree to the residuals.

    ``train_mse[b]`` is the training mean squared residual after ``b + 1`` trees.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if not 0.0 < eta <= 1.0:
        raise TreeParamError(f"eta must be in (0, 1], got {eta}")
    if n_trees < 1:
        raise TreeParamError(f"n_trees must be >= 1, got {n_trees}")
    if X.shape[0] == 0:
        raise TreeParamError("cannot fit a boosted model on zero rows")
    params.validate(X.shape[0], X.shape[1])
    rng = np.random.default_rng(seed)
    resid = y.copy()
    trees, mse = [], []
    for _ in range(n_trees):
        tree = fit_tree(X, resid, params, rng)
        resid = resid - eta * tree.predict(X)
        trees.append(tree)
        mse.append(float(np.mean(resid * resid)))
    return TreeEnsemble("boosted", trees, params, eta=eta, seed=seed,
                        n_features=X.shape[1], train_mse=mse)
