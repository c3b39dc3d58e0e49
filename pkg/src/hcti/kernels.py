"""Hot numeric kernels: Gini split search, forest traversal, Lloyd k-means.

Each kernel exists twice: a loop form compiled with numba when available,
and a vectorized numpy form.  The active path is chosen at import time;
set HCTI_DISABLE_NUMBA=1 to force the numpy path.  Both paths perform the
same IEEE operations in the same order (integer counts reduced exactly,
sequential accumulation across trees/dimensions), so results are
bit-identical and model training is reproducible regardless of path.

bench/benchmark_kernels.py times the two paths against each other.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("HCTI_DISABLE_NUMBA", "").lower() in ("1", "true", "yes")

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap

USE_NUMBA = HAVE_NUMBA and not _DISABLED


# -- Gini split search -----------------------------------------------------
#
# Inputs: X (n, m) float64, y (n,) int64 in {0, 1}, min_leaf.
# Returns (feature, threshold, impurity); feature == -1 when no valid split.
# Candidate thresholds are midpoints of adjacent distinct sorted values;
# ties in impurity resolve to the lowest feature index, then lowest
# threshold, via ascending iteration with strict improvement.

def _best_split_loops(X, y, min_leaf):
    n, m = X.shape
    total_pos = 0
    for i in range(n):
        total_pos += y[i]
    best_feature = -1
    best_threshold = 0.0
    best_impurity = np.inf
    if total_pos == 0 or total_pos == n:
        return best_feature, best_threshold, best_impurity
    n_f = float(n)
    for f in range(m):
        order = np.argsort(X[:, f])
        cum_pos = 0
        for i in range(1, n):
            cum_pos += y[order[i - 1]]
            lo = X[order[i - 1], f]
            hi = X[order[i], f]
            if lo == hi:
                continue
            if i < min_leaf or n - i < min_leaf:
                continue
            threshold = (lo + hi) / 2.0
            if not (lo < threshold < hi):
                continue
            n_l = float(i)
            n_r = float(n - i)
            pos_l = float(cum_pos)
            pos_r = float(total_pos - cum_pos)
            p1l = pos_l / n_l
            p0l = (n_l - pos_l) / n_l
            g_l = 1.0 - p1l * p1l - p0l * p0l
            p1r = pos_r / n_r
            p0r = (n_r - pos_r) / n_r
            g_r = 1.0 - p1r * p1r - p0r * p0r
            impurity = (n_l * g_l + n_r * g_r) / n_f
            if impurity < best_impurity:
                best_feature = f
                best_threshold = threshold
                best_impurity = impurity
    return best_feature, best_threshold, best_impurity


def _best_split_numpy(X, y, min_leaf):
    n, m = X.shape
    total_pos = int(y.sum())
    best_feature = -1
    best_threshold = 0.0
    best_impurity = np.inf
    if total_pos == 0 or total_pos == n:
        return best_feature, best_threshold, best_impurity
    n_f = float(n)
    sizes = np.arange(1, n)
    size_ok = (sizes >= min_leaf) & ((n - sizes) >= min_leaf)
    for f in range(m):
        order = np.argsort(X[:, f])
        sv = X[order, f]
        sy = y[order]
        thresholds = (sv[:-1] + sv[1:]) / 2.0
        valid = size_ok & (sv[:-1] < thresholds) & (thresholds < sv[1:])
        if not valid.any():
            continue
        pos_l = np.cumsum(sy)[:-1].astype(np.float64)
        n_l = sizes.astype(np.float64)
        n_r = n_f - n_l
        pos_r = float(total_pos) - pos_l
        p1l = pos_l / n_l
        p0l = (n_l - pos_l) / n_l
        g_l = 1.0 - p1l * p1l - p0l * p0l
        p1r = pos_r / n_r
        p0r = (n_r - pos_r) / n_r
        g_r = 1.0 - p1r * p1r - p0r * p0r
        impurity = (n_l * g_l + n_r * g_r) / n_f
        impurity = np.where(valid, impurity, np.inf)
        j = int(np.argmin(impurity))
        if impurity[j] < best_impurity:
            best_feature = f
            best_threshold = float(thresholds[j])
            best_impurity = float(impurity[j])
    return best_feature, best_threshold, best_impurity


# -- forest traversal ------------------------------------------------------
#
# A forest is flattened into parallel node arrays plus per-tree root offsets.
# Leaves have feature == -1 and carry the positive fraction in values.

def _forest_predict_loops(features, thresholds, lefts, rights, values,
                          tree_roots, X):
    n = X.shape[0]
    n_trees = tree_roots.shape[0]
    out = np.zeros(n, dtype=np.float64)
    for t in range(n_trees):
        root = tree_roots[t]
        for i in range(n):
            node = root
            while features[node] >= 0:
                if X[i, features[node]] <= thresholds[node]:
                    node = lefts[node]
                else:
                    node = rights[node]
            out[i] += values[node]
    for i in range(n):
        out[i] /= n_trees
    return out


def _forest_predict_numpy(features, thresholds, lefts, rights, values,
                          tree_roots, X):
    n = X.shape[0]
    out = np.zeros(n, dtype=np.float64)
    for root in tree_roots:
        cur = np.full(n, root, dtype=np.int64)
        active = features[cur] >= 0
        while active.any():
            idx = np.nonzero(active)[0]
            node = cur[idx]
            go_left = X[idx, features[node]] <= thresholds[node]
            cur[idx] = np.where(go_left, lefts[node], rights[node])
            active = features[cur] >= 0
        out += values[cur]
    out /= len(tree_roots)
    return out


# -- Lloyd k-means ---------------------------------------------------------
#
# Initial centers are chosen by the caller (seeded); the kernel runs
# assignment/update rounds until labels stabilize or max_iter is hit.
# Empty clusters keep their previous center.

def _kmeans_loops(X, centers, max_iter):
    n, d = X.shape
    k = centers.shape[0]
    centers = centers.copy()
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        changed = False
        for i in range(n):
            best = 0
            best_dist = np.inf
            for j in range(k):
                dist = 0.0
                for dim in range(d):
                    diff = X[i, dim] - centers[j, dim]
                    dist += diff * diff
                if dist < best_dist:
                    best_dist = dist
                    best = j
            if labels[i] != best:
                changed = True
            labels[i] = best
        sums = np.zeros((k, d), dtype=np.float64)
        counts = np.zeros(k, dtype=np.int64)
        for i in range(n):
            counts[labels[i]] += 1
            for dim in range(d):
                sums[labels[i], dim] += X[i, dim]
        for j in range(k):
            if counts[j] > 0:
                for dim in range(d):
                    centers[j, dim] = sums[j, dim] / counts[j]
        if not changed:
            break
    return labels, centers


def _kmeans_numpy(X, centers, max_iter):
    n, d = X.shape
    k = centers.shape[0]
    centers = centers.copy()
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        dists = np.zeros((n, k), dtype=np.float64)
        for j in range(k):
            acc = np.zeros(n, dtype=np.float64)
            for dim in range(d):
                diff = X[:, dim] - centers[j, dim]
                acc += diff * diff
            dists[:, j] = acc
        new_labels = np.argmin(dists, axis=1)
        changed = bool((new_labels != labels).any())
        labels = new_labels
        counts = np.bincount(labels, minlength=k)
        for dim in range(d):
            sums = np.bincount(labels, weights=X[:, dim], minlength=k)
            for j in range(k):
                if counts[j] > 0:
                    centers[j, dim] = sums[j] / counts[j]
        if not changed:
            break
    return labels, centers


if HAVE_NUMBA:
    _best_split_nb = njit(cache=True)(_best_split_loops)
    _forest_predict_nb = njit(cache=True)(_forest_predict_loops)
    _kmeans_nb = njit(cache=True)(_kmeans_loops)

if USE_NUMBA:
    best_split = _best_split_nb
    forest_predict = _forest_predict_nb
    kmeans_run = _kmeans_nb
else:
    best_split = _best_split_numpy
    forest_predict = _forest_predict_numpy
    kmeans_run = _kmeans_numpy


def implementations() -> dict:
    """Both paths by name, for benchmarks and equivalence tests."""
    paths = {
        "numpy": {
            "best_split": _best_split_numpy,
            "forest_predict": _forest_predict_numpy,
            "kmeans_run": _kmeans_numpy,
        }
    }
    if HAVE_NUMBA:
        paths["numba"] = {
            "best_split": _best_split_nb,
            "forest_predict": _forest_predict_nb,
            "kmeans_run": _kmeans_nb,
        }
    return paths
