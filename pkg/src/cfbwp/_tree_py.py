"""Pure numpy regression-tree kernels.

Reference implementation for the compiled ``_tree_ext`` module; both grow
bit-identical trees from the same inputs. Keep the two in lock step:
summation order, tie-breaking and RNG calls all matter.
"""

import numpy as np

MIN_GAIN_REL = 1e-12


def grow_tree(X, y, order, max_depth, min_leaf, max_features, rng):
    """Grow one CART regression tree by exhaustive variance-reduction splits.

    Parameters
    ----------
    X : (m, p) float64, C-contiguous
    y : (m,) float64
    order : (p + 1, m) int64
        Row ``f`` holds ``0..m-1`` stably sorted by ``X[:, f]``; the last row
        is the identity permutation. Modified in place.
    max_depth : int
        Negative means unlimited.
    min_leaf : int
    max_features : int
        Features examined per split; ``p`` disables sampling.
    rng : numpy.random.Generator
        Only consulted when ``max_features < p``.

    Returns
    -------
    feature, threshold, left, right, value, n_node : ndarray
        Flat node arrays; ``feature == -1`` marks a leaf.
    """
    m, p = X.shape
    cap = max(2 * m - 1, 1)
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap, dtype=np.float64)
    n_node = np.zeros(cap, dtype=np.int64)

    n_nodes = 1
    stack = [(0, 0, m, 0)]
    while stack:
        node, start, end, depth = stack.pop()
        n = end - start
        rows = order[p, start:end]
        ys = y[rows]
        total = np.cumsum(ys)[-1]
        sumsq = np.cumsum(ys * ys)[-1]
        value[node] = total / n
        n_node[node] = n

        if (max_depth >= 0 and depth >= max_depth) or n < 2 * min_leaf:
            continue

        if max_features < p:
            feats = np.sort(rng.choice(p, size=max_features, replace=False))
        else:
            feats = range(p)

        best_gain = 0.0
        best_f = -1
        best_i = -1
        best_thr = 0.0
        parent = total * total / n
        for f in feats:
            seg = order[f, start:end]
            xs = X[seg, f]
            lefts = np.cumsum(y[seg])[:-1]
            nl = np.arange(1, n, dtype=np.float64)
            nr = n - nl
            gain = lefts * lefts / nl + (total - lefts) * (total - lefts) / nr - parent
            ok = (xs[:-1] < xs[1:]) & (nl >= min_leaf) & (nr >= min_leaf)
            if not ok.any():
                continue
            gain = np.where(ok, gain, -np.inf)
            i = int(np.argmax(gain))
            if gain[i] > best_gain:
                best_gain = gain[i]
                best_f = int(f)
                best_i = i
                thr = (xs[i] + xs[i + 1]) / 2.0
                best_thr = thr if thr < xs[i + 1] else xs[i]

        if best_f < 0 or not best_gain > MIN_GAIN_REL * sumsq:
            continue

        go_left = X[order[best_f, start:end], best_f] <= best_thr
        nl_best = int(go_left.sum())
        for f in range(p + 1):
            seg = order[f, start:end].copy()
            mask = X[seg, best_f] <= best_thr
            order[f, start:start + nl_best] = seg[mask]
            order[f, start + nl_best:end] = seg[~mask]

        lchild, rchild = n_nodes, n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = lchild
        right[node] = rchild
        stack.append((rchild, start + nl_best, end, depth + 1))
        stack.append((lchild, start, start + nl_best, depth + 1))

    k = n_nodes
    return (feature[:k].copy(), threshold[:k].copy(), left[:k].copy(),
            right[:k].copy(), value[:k].copy(), n_node[:k].copy())


def predict_tree(X, feature, threshold, left, right, value):
    node = np.zeros(X.shape[0], dtype=np.int64)
    active = feature[node] >= 0
    while active.any():
        idx = np.nonzero(active)[0]
        nd = node[idx]
        f = feature[nd]
        go_left = X[idx, f] <= threshold[nd]
        node[idx] = np.where(go_left, left[nd], right[nd])
        active = feature[node] >= 0
    return value[node]
