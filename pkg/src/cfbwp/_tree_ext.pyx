# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled regression-tree kernels.

Mirrors ``cfbwp._tree_py`` operation for operation so both backends grow
bit-identical trees.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef double MIN_GAIN_REL = 1e-12


def grow_tree(const double[:, ::1] X, const double[::1] y, long long[:, ::1] order,
              long max_depth, long min_leaf, long max_features, rng):
    cdef Py_ssize_t m = X.shape[0]
    cdef Py_ssize_t p = X.shape[1]
    cdef Py_ssize_t cap = 2 * m - 1 if m > 0 else 1

    feature_a = np.full(cap, -1, dtype=np.int64)
    threshold_a = np.zeros(cap, dtype=np.float64)
    left_a = np.full(cap, -1, dtype=np.int64)
    right_a = np.full(cap, -1, dtype=np.int64)
    value_a = np.zeros(cap, dtype=np.float64)
    n_node_a = np.zeros(cap, dtype=np.int64)
    cdef long long[::1] feature = feature_a
    cdef double[::1] threshold = threshold_a
    cdef long long[::1] left = left_a
    cdef long long[::1] right = right_a
    cdef double[::1] value = value_a
    cdef long long[::1] n_node = n_node_a

    tmp_a = np.empty(max(m, 1), dtype=np.int64)
    cdef long long[::1] tmp = tmp_a
    feats_all = np.arange(p, dtype=np.int64)
    cdef long long[::1] feats

    # explicit LIFO stack of (node, start, end, depth)
    stack_a = np.empty((cap + 1, 4), dtype=np.int64)
    cdef long long[:, ::1] stack = stack_a
    cdef Py_ssize_t top = 0
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = m
    stack[0, 3] = 0
    top = 1

    cdef Py_ssize_t n_nodes = 1
    cdef Py_ssize_t node, start, end, depth, n, i, j, k, fi, nf, f, row, nl_best, a, b
    cdef double total, sumsq, yi, lft, nl, nr, gain, parent, best_gain, best_thr, thr, xa, xb
    cdef Py_ssize_t best_f, best_i

    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        n = end - start

        total = 0.0
        sumsq = 0.0
        for i in range(start, end):
            yi = y[order[p, i]]
            total += yi
            sumsq += yi * yi
        value[node] = total / n
        n_node[node] = n

        if (max_depth >= 0 and depth >= max_depth) or n < 2 * min_leaf:
            continue

        if max_features < p:
            feats = np.sort(rng.choice(p, size=max_features, replace=False)).astype(np.int64)
        else:
            feats = feats_all
        nf = feats.shape[0]

        best_gain = 0.0
        best_f = -1
        best_i = -1
        best_thr = 0.0
        parent = total * total / n
        for fi in range(nf):
            f = feats[fi]
            lft = 0.0
            for i in range(n - 1):
                row = order[f, start + i]
                lft += y[row]
                nl = <double>(i + 1)
                nr = n - nl
                if nl < min_leaf:
                    continue
                if nr < min_leaf:
                    break
                xa = X[row, f]
                xb = X[order[f, start + i + 1], f]
                if not (xa < xb):
                    continue
                gain = lft * lft / nl + (total - lft) * (total - lft) / nr - parent
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    best_i = i
                    thr = (xa + xb) / 2.0
                    best_thr = thr if thr < xb else xa

        if best_f < 0 or not (best_gain > MIN_GAIN_REL * sumsq):
            continue

        nl_best = 0
        for f in range(p + 1):
            a = 0
            b = 0
            # stable partition: left rows in place, right rows buffered
            for i in range(start, end):
                row = order[f, i]
                if X[row, best_f] <= best_thr:
                    order[f, start + a] = row
                    a += 1
                else:
                    tmp[b] = row
                    b += 1
            for i in range(b):
                order[f, start + a + i] = tmp[i]
            nl_best = a

        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1

        stack[top, 0] = n_nodes + 1
        stack[top, 1] = start + nl_best
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = n_nodes
        stack[top, 1] = start
        stack[top, 2] = start + nl_best
        stack[top, 3] = depth + 1
        top += 1
        n_nodes += 2

    k = n_nodes
    return (feature_a[:k].copy(), threshold_a[:k].copy(), left_a[:k].copy(),
            right_a[:k].copy(), value_a[:k].copy(), n_node_a[:k].copy())


def predict_tree(const double[:, ::1] X, const long long[::1] feature,
                 const double[::1] threshold, const long long[::1] left,
                 const long long[::1] right, const double[::1] value):
    cdef Py_ssize_t n = X.shape[0]
    out_a = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_a
    cdef Py_ssize_t i
    cdef long long node
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out_a
