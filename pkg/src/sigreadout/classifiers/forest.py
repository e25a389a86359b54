"""Random forest of Gini-impurity decision trees.

Trees use axis-aligned splits ``x[f] <= threshold`` with thresholds at the
midpoint between consecutive distinct training values. Each tree sees a
bootstrap sample and considers ``floor(sqrt(d))`` randomly chosen features
per node. The tree's randomness comes from its own stream derived from
``(seed, tree_index)``, so a forest is reproducible regardless of how its
trees are scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from ..errors import InvalidInputError

FORMAT_VERSION = 1


@numba.njit(cache=True)
def _grow(Xt, y, idx, n_classes, max_depth, min_samples_split, min_samples_leaf, mtry, seed):
    np.random.seed(seed)
    n, d = idx.shape[0], Xt.shape[0]
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros((cap, n_classes))

    stack = np.empty((cap, 4), dtype=np.int64)  # start, end, depth, node
    stack[0, 0], stack[0, 1], stack[0, 2], stack[0, 3] = 0, n, 0, 0
    top, n_nodes = 1, 1
    features = np.arange(d)
    vals = np.empty(n)
    counts = np.zeros(n_classes)
    lcounts = np.zeros(n_classes)

    while top > 0:
        top -= 1
        start, end, depth, node = stack[top, 0], stack[top, 1], stack[top, 2], stack[top, 3]
        m = end - start
        counts[:] = 0.0
        for i in range(start, end):
            counts[y[idx[i]]] += 1.0
        value[node, :] = counts
        n_present = 0
        for c in range(n_classes):
            if counts[c] > 0:
                n_present += 1
        if depth >= max_depth or m < min_samples_split or n_present < 2 or m < 2 * min_samples_leaf:
            continue

        best_score = -1.0
        best_feature = -1
        best_threshold = 0.0
        # partial Fisher-Yates draw of mtry candidate features
        for j in range(mtry):
            r = j + np.random.randint(0, d - j)
            features[j], features[r] = features[r], features[j]
        for j in range(mtry):
            f = features[j]
            for i in range(m):
                vals[i] = Xt[f, idx[start + i]]
            order = np.argsort(vals[:m], kind="quicksort")
            lcounts[:] = 0.0
            for p in range(m - 1):
                lcounts[y[idx[start + order[p]]]] += 1.0
                n_left = p + 1
                n_right = m - n_left
                v, v_next = vals[order[p]], vals[order[p + 1]]
                if v_next <= v or n_left < min_samples_leaf or n_right < min_samples_leaf:
                    continue
                sl, sr = 0.0, 0.0
                for c in range(n_classes):
                    sl += lcounts[c] * lcounts[c]
                    rc = counts[c] - lcounts[c]
                    sr += rc * rc
                # maximizing this minimizes the weighted child Gini impurity
                score = sl / n_left + sr / n_right
                if score > best_score + 1e-12:
                    best_score = score
                    best_feature = f
                    t = 0.5 * (v + v_next)
                    best_threshold = v if t >= v_next else t
        if best_feature < 0:
            continue

        # partition idx[start:end] in place
        lo, hi = start, end - 1
        while lo <= hi:
            if Xt[best_feature, idx[lo]] <= best_threshold:
                lo += 1
            else:
                idx[lo], idx[hi] = idx[hi], idx[lo]
                hi -= 1
        feature[node] = best_feature
        threshold[node] = best_threshold
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack[top, 0], stack[top, 1], stack[top, 2], stack[top, 3] = start, lo, depth + 1, n_nodes
        top += 1
        stack[top, 0], stack[top, 1], stack[top, 2], stack[top, 3] = lo, end, depth + 1, n_nodes + 1
        top += 1
        n_nodes += 2

    return feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


@numba.njit(cache=True)
def _apply(X, feature, threshold, left, right, value, out):
    for r in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r, :] += value[node, :]


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # per-node class frequencies, rows sum to 1

    @property
    def depth(self) -> int:
        depth = np.zeros(len(self.feature), dtype=int)
        for node in range(len(self.feature)):
            if self.feature[node] >= 0:
                depth[self.left[node]] = depth[self.right[node]] = depth[node] + 1
        return int(depth.max())

    def to_dict(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            np.asarray(doc["feature"], dtype=np.int64),
            np.asarray(doc["threshold"], dtype=np.float64),
            np.asarray(doc["left"], dtype=np.int64),
            np.asarray(doc["right"], dtype=np.int64),
            np.asarray(doc["value"], dtype=np.float64).reshape(len(doc["feature"]), -1),
        )


@dataclass
class ForestHyperparams:
    n_trees: int = 100
    max_depth: int = 10
    min_samples_split: int = 2
    min_samples_leaf: int = 1

    def validate(self):
        for name in ("n_trees", "max_depth", "min_samples_split", "min_samples_leaf"):
            if int(getattr(self, name)) < 1:
                raise InvalidInputError(f"{name} must be >= 1")
        if self.min_samples_split < 2:
            raise InvalidInputError("min_samples_split must be >= 2")


@dataclass
class ForestModel:
    trees: list
    hyperparams: ForestHyperparams
    seed: int
    n_classes: int
    n_features: int
    leaf_counts: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return {
            "format": "sigreadout.forest",
            "version": FORMAT_VERSION,
            "seed": int(self.seed),
            "n_classes": self.n_classes,
            "n_features": self.n_features,
            "hyperparams": vars(self.hyperparams).copy(),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, doc):
        if doc.get("version") != FORMAT_VERSION:
            raise InvalidInputError(f"unsupported forest model version {doc.get('version')!r}")
        return cls(
            trees=[Tree.from_dict(t) for t in doc["trees"]],
            hyperparams=ForestHyperparams(**doc["hyperparams"]),
            seed=doc["seed"],
            n_classes=doc["n_classes"],
            n_features=doc["n_features"],
        )


def tree_seeds(seed: int, tree_index: int):
    """Bootstrap generator and integer seed for the tree's split sampling."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(tree_index)]))
    return rng, int(rng.integers(0, 2**31 - 1))


def rf_fit(features, labels, hyperparams: ForestHyperparams | dict | None = None, seed: int = 0) -> ForestModel:
    X = np.ascontiguousarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise InvalidInputError("features must be (n, d) with one label per row")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("features must be finite")
    if np.any(y < 0):
        raise InvalidInputError("labels must be nonnegative class indices")
    if len(np.unique(y)) < 2:
        raise InvalidInputError("random forest needs at least two classes")
    hp = ForestHyperparams(**hyperparams) if isinstance(hyperparams, dict) else (hyperparams or ForestHyperparams())
    hp.validate()
    n, d = X.shape
    n_classes = int(y.max()) + 1
    mtry = max(1, int(math.isqrt(d)))
    Xt = np.ascontiguousarray(X.T)
    trees, leaf_counts = [], []
    for t in range(hp.n_trees):
        rng, split_seed = tree_seeds(seed, t)
        idx = rng.integers(0, n, size=n).astype(np.int64)
        f, thr, lft, rgt, counts = _grow(
            Xt, y, idx, n_classes, hp.max_depth, hp.min_samples_split, hp.min_samples_leaf, mtry, split_seed
        )
        totals = counts.sum(axis=1, keepdims=True)
        trees.append(Tree(f, thr, lft, rgt, counts / totals))
        leaf_counts.append(totals[f < 0, 0])
    return ForestModel(trees, hp, int(seed), n_classes, d, leaf_counts)


def rf_predict_proba(model: ForestModel, features) -> np.ndarray:
    X = np.ascontiguousarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise InvalidInputError(f"expected {model.n_features} features, got shape {X.shape}")
    out = np.zeros((X.shape[0], model.n_classes))
    for t in model.trees:
        _apply(X, t.feature, t.threshold, t.left, t.right, t.value, out)
    out /= len(model.trees)
    return out


def rf_predict(model: ForestModel, features):
    """Labels (argmax, ties to the lowest class index) and class probabilities."""
    proba = rf_predict_proba(model, features)
    return np.argmax(proba, axis=1), proba
