"""Bagged decision-tree ensemble with Gini splits, plus self-training.

Trees are grown depth-first in Python; the split search and batch traversal
run through the compiled kernels.  Everything is reproducible from
(training set, hyperparameters, seed): bag draws come from one seeded
generator, split ties break toward the lowest feature index then lowest
threshold, and the kernels are bit-identical across the numba and numpy
paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import kernels
from ..errors import ValidationError

N_FEATURES = 15


@dataclass(frozen=True)
class Hyperparams:
    n_trees: int = 100
    max_depth: int = 8
    min_leaf: int = 5
    bag_fraction: float = 0.8
    seed: int = 20240501

    def to_dict(self) -> dict:
        return {"n_trees": self.n_trees, "max_depth": self.max_depth,
                "min_leaf": self.min_leaf, "bag_fraction": self.bag_fraction,
                "seed": self.seed}

    @staticmethod
    def from_dict(data: dict) -> "Hyperparams":
        return Hyperparams(**{k: data[k] for k in
                              ("n_trees", "max_depth", "min_leaf",
                               "bag_fraction", "seed") if k in data})


class _TreeBuilder:
    def __init__(self, max_depth: int, min_leaf: int):
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.features: list[int] = []
        self.thresholds: list[float] = []
        self.lefts: list[int] = []
        self.rights: list[int] = []
        self.values: list[float] = []

    def _add_node(self) -> int:
        self.features.append(-1)
        self.thresholds.append(0.0)
        self.lefts.append(-1)
        self.rights.append(-1)
        self.values.append(0.0)
        return len(self.features) - 1

    def grow(self, X: np.ndarray, y: np.ndarray, depth: int = 0) -> int:
        node = self._add_node()
        n = y.shape[0]
        pos = int(y.sum())
        self.values[node] = pos / n
        if depth >= self.max_depth or n < 2 * self.min_leaf or pos in (0, n):
            return node
        feature, threshold, _ = kernels.best_split(X, y, self.min_leaf)
        if feature < 0:
            return node
        mask = X[:, feature] <= threshold
        left = self.grow(X[mask], y[mask], depth + 1)
        right = self.grow(X[~mask], y[~mask], depth + 1)
        self.features[node] = int(feature)
        self.thresholds[node] = float(threshold)
        self.lefts[node] = left
        self.rights[node] = right
        return node


@dataclass
class TreeEnsemble:
    """Flattened forest: parallel node arrays plus per-tree root offsets."""

    features: np.ndarray
    thresholds: np.ndarray
    lefts: np.ndarray
    rights: np.ndarray
    values: np.ndarray
    tree_roots: np.ndarray
    hyperparams: Hyperparams
    train_X: Optional[np.ndarray] = field(default=None, repr=False)
    train_y: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n_trees(self) -> int:
        return int(self.tree_roots.shape[0])

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
        if X.shape[1] != N_FEATURES:
            raise ValidationError("features",
                                  f"expected {N_FEATURES} columns, got {X.shape[1]}")
        return kernels.forest_predict(self.features, self.thresholds,
                                      self.lefts, self.rights, self.values,
                                      self.tree_roots, X)

    def to_dict(self) -> dict:
        """Portable form: node records with thresholds as decimal text."""
        trees = []
        roots = list(self.tree_roots) + [len(self.features)]
        for t in range(self.n_trees):
            start, end = int(roots[t]), int(roots[t + 1])
            nodes = []
            for i in range(start, end):
                nodes.append({
                    "feature": int(self.features[i]),
                    "threshold": repr(float(self.thresholds[i])),
                    "left": int(self.lefts[i] - start) if self.lefts[i] >= 0 else -1,
                    "right": int(self.rights[i] - start) if self.rights[i] >= 0 else -1,
                    "value": repr(float(self.values[i])),
                })
            trees.append(nodes)
        return {"hyperparams": self.hyperparams.to_dict(), "trees": trees}

    @staticmethod
    def from_dict(data: dict) -> "TreeEnsemble":
        features, thresholds, lefts, rights, values, roots = [], [], [], [], [], []
        offset = 0
        for nodes in data["trees"]:
            roots.append(offset)
            for node in nodes:
                features.append(node["feature"])
                thresholds.append(float(node["threshold"]))
                lefts.append(node["left"] + offset if node["left"] >= 0 else -1)
                rights.append(node["right"] + offset if node["right"] >= 0 else -1)
                values.append(float(node["value"]))
            offset = len(features)
        return TreeEnsemble(
            features=np.asarray(features, dtype=np.int64),
            thresholds=np.asarray(thresholds, dtype=np.float64),
            lefts=np.asarray(lefts, dtype=np.int64),
            rights=np.asarray(rights, dtype=np.int64),
            values=np.asarray(values, dtype=np.float64),
            tree_roots=np.asarray(roots, dtype=np.int64),
            hyperparams=Hyperparams.from_dict(data["hyperparams"]),
        )


def _train_arrays(X: np.ndarray, y: np.ndarray,
                  params: Hyperparams) -> TreeEnsemble:
    n = X.shape[0]
    bag_n = max(1, int(params.bag_fraction * n))
    rng = np.random.default_rng(params.seed)
    features: list[int] = []
    thresholds: list[float] = []
    lefts: list[int] = []
    rights: list[int] = []
    values: list[float] = []
    roots: list[int] = []
    for _ in range(params.n_trees):
        idx = np.sort(rng.choice(n, size=bag_n, replace=False))
        builder = _TreeBuilder(params.max_depth, params.min_leaf)
        builder.grow(np.ascontiguousarray(X[idx]), y[idx])
        offset = len(features)
        roots.append(offset)
        features.extend(builder.features)
        thresholds.extend(builder.thresholds)
        lefts.extend(l + offset if l >= 0 else -1 for l in builder.lefts)
        rights.extend(r + offset if r >= 0 else -1 for r in builder.rights)
        values.extend(builder.values)
    return TreeEnsemble(
        features=np.asarray(features, dtype=np.int64),
        thresholds=np.asarray(thresholds, dtype=np.float64),
        lefts=np.asarray(lefts, dtype=np.int64),
        rights=np.asarray(rights, dtype=np.int64),
        values=np.asarray(values, dtype=np.float64),
        tree_roots=np.asarray(roots, dtype=np.int64),
        hyperparams=params,
        train_X=X,
        train_y=y,
    )


def train_ensemble(windows, hyperparams: Optional[Hyperparams] = None,
                   stores=None) -> TreeEnsemble:
    """Fit the bagged ensemble on labeled windows.

    Requires at least 20 windows covering both outcome classes; a
    single-class set is rejected with advice to use the heuristic fallback
    predictor instead.
    """
    params = hyperparams or Hyperparams()
    if len(windows) < 20:
        raise ValidationError("windows", "need at least 20 labeled windows")
    X = np.ascontiguousarray(
        np.stack([w.materialize(stores) for w in windows]), dtype=np.float64)
    y = np.asarray([1 if w.outcome else 0 for w in windows], dtype=np.int64)
    if y.min() == y.max():
        raise ValidationError(
            "windows",
            "single-class training set; use the fallback predictor instead")
    if not np.isfinite(X).all():
        raise ValidationError("features", "non-finite feature value")
    return _train_arrays(X, y, params)


def self_train(ensemble: TreeEnsemble, unlabeled: np.ndarray,
               confidence_threshold: float = 0.9,
               max_rounds: int = 3) -> TreeEnsemble:
    """Self-training rounds: adopt confident pseudo-labels, retrain, repeat.

    Stops early when no unlabeled point crosses the confidence threshold.
    Original labels are never overwritten; adopted points leave the pool
    with their pseudo-label fixed.
    """
    if ensemble.train_X is None:
        raise ValidationError("ensemble", "was not trained in this process")
    pool = np.asarray(unlabeled, dtype=np.float64)
    if pool.size == 0:
        return ensemble
    pool = np.ascontiguousarray(np.atleast_2d(pool))
    X = ensemble.train_X
    y = ensemble.train_y
    current = ensemble
    for _ in range(max_rounds):
        if pool.shape[0] == 0:
            break
        proba = current.predict(pool)
        confident = (proba >= confidence_threshold) | (proba <= 1.0 - confidence_threshold)
        if not confident.any():
            break
        pseudo_y = (proba[confident] >= confidence_threshold).astype(np.int64)
        X = np.ascontiguousarray(np.vstack([X, pool[confident]]))
        y = np.concatenate([y, pseudo_y])
        pool = pool[~confident]
        current = _train_arrays(X, y, ensemble.hyperparams)
    return current
