"""Time the compiled tree kernel against the numpy fallback.

    python benchmarks/bench_tree.py [--rows 5000] [--repeat 3]

Both backends grow the same trees from the same inputs, so the script also
checks that their outputs agree before reporting timings.
"""

import argparse
import time

import numpy as np

from cfbwp import _tree_py, trees

try:
    from cfbwp import _tree_ext
except ImportError:  # extension not built
    _tree_ext = None


def sorted_order(X):
    order = np.empty((X.shape[1] + 1, X.shape[0]), dtype=np.int64)
    for f in range(X.shape[1]):
        order[f] = np.argsort(X[:, f], kind="stable")
    order[-1] = np.arange(X.shape[0])
    return order


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_grow(core, X, y, max_depth, min_leaf, k, repeat):
    def run():
        return core.grow_tree(X, y, sorted_order(X), max_depth, min_leaf, k,
                              np.random.default_rng(0))
    return best_of(run, repeat)


def bench_forest(core, X, y, n_trees, repeat):
    saved = trees._core
    trees._core = core
    try:
        return best_of(lambda: trees.fit_random_forest(X, y, n_trees, seed=0).predict(X), repeat)
    finally:
        trees._core = saved


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--rows", type=int, default=5000)
    ap.add_argument("--features", type=int, default=9)
    ap.add_argument("--forest-trees", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    a = ap.parse_args()

    rng = np.random.default_rng(0)
    X = np.ascontiguousarray(rng.normal(size=(a.rows, a.features)))
    X[:, 1] = np.round(X[:, 1] * 3)
    y = np.sin(X[:, 0]) * 3 + X[:, 1] * X[:, 2] + rng.normal(size=a.rows)

    backends = [("python", _tree_py)] + ([("compiled", _tree_ext)] if _tree_ext else [])
    print(f"rows={a.rows} features={a.features} default backend={trees.BACKEND}")
    cases = [
        ("full tree", lambda c: bench_grow(c, X, y, -1, 1, a.features, a.repeat)),
        ("depth 6, leaf 20", lambda c: bench_grow(c, X, y, 6, 20, a.features, a.repeat)),
        ("mtry 3, leaf 5", lambda c: bench_grow(c, X, y, -1, 5, 3, a.repeat)),
        (f"forest x{a.forest_trees}", lambda c: bench_forest(c, X, y, a.forest_trees, a.repeat)),
    ]
    print(f"{'case':<20}" + "".join(f"{name:>12}" for name, _ in backends) + f"{'speedup':>10}")
    for label, fn in cases:
        results = [fn(core) for _, core in backends]
        outs = [r[1] for r in results]
        if isinstance(outs[0], tuple):
            same = all(np.array_equal(u, v) for u, v in zip(outs[0], outs[-1]))
        else:
            same = np.array_equal(outs[0], outs[-1])
        row = f"{label:<20}" + "".join(f"{r[0] * 1e3:>10.1f}ms" for r in results)
        if len(results) > 1:
            row += f"{results[0][0] / results[-1][0]:>9.1f}x"
        print(row + ("" if same else "  MISMATCH"))


if __name__ == "__main__":
    main()
