"""Random forest with subsampling without replacement and class-balanced Gini.

Each tree is grown by scikit-learn's CART implementation and then stored as
plain node arrays; prediction walks those arrays in a compiled loop.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit
from sklearn.tree import DecisionTreeClassifier

from .core import InputError

N_TREES = 255
SAMPLE_FRACTION = 0.7


@dataclass
class ForestParams:
    n_trees: int = N_TREES
    sample_fraction: float = SAMPLE_FRACTION
    max_features: int | None = None  # None: floor(sqrt(D))
    balanced: bool = True


@dataclass
class Tree:
    """Node arrays; ``feature < 0`` marks a leaf whose ``value`` is P(merge)."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=np.float64),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=np.float64),
        )

    def predict_one(self, x) -> float:
        x = np.asarray(x, dtype=np.float32).astype(np.float64)
        node = 0
        while self.feature[node] >= 0:
            node = self.left[node] if x[self.feature[node]] <= self.threshold[node] else self.right[node]
        return float(self.value[node])


def leaf_tree(p: float) -> Tree:
    return Tree(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]), np.array([float(p)]))


@dataclass
class RandomForest:
    trees: list[Tree]
    n_features: int
    params: ForestParams = field(default_factory=ForestParams)
    seed: int = 0
    degenerate: bool = False

    def __post_init__(self):
        self._flat = None

    def _flatten(self):
        if self._flat is None:
            offsets = np.cumsum([0] + [t.feature.size for t in self.trees[:-1]])
            feat = np.concatenate([t.feature for t in self.trees])
            thr = np.concatenate([t.threshold for t in self.trees])
            left = np.concatenate([np.where(t.left >= 0, t.left + o, -1) for t, o in zip(self.trees, offsets)])
            right = np.concatenate([np.where(t.right >= 0, t.right + o, -1) for t, o in zip(self.trees, offsets)])
            value = np.concatenate([t.value for t in self.trees])
            self._flat = (offsets.astype(np.int64), feat, thr, left, right, value)
        return self._flat

    def predict_proba(self, X) -> np.ndarray:
        """Mean over trees of the leaf merge probability, one value per row."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float32)).astype(np.float64)
        if X.shape[1] != self.n_features:
            raise InputError(f"expected {self.n_features} features, got {X.shape[1]}")
        out = np.empty(X.shape[0])
        _predict_flat(np.ascontiguousarray(X), *self._flatten(), out)
        return out

    def to_dict(self) -> dict:
        return {
            "n_features": self.n_features,
            "params": asdict(self.params),
            "seed": self.seed,
            "degenerate": self.degenerate,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RandomForest":
        return cls(
            trees=[Tree.from_dict(t) for t in d["trees"]],
            n_features=int(d["n_features"]),
            params=ForestParams(**d["params"]),
            seed=int(d["seed"]),
            degenerate=bool(d["degenerate"]),
        )


def class_weights(y: np.ndarray) -> dict[int, float]:
    """Per-class weight n / (2 * count), i.e. reciprocal to class frequency."""
    n = y.size
    return {int(c): n / (2.0 * int((y == c).sum())) for c in np.unique(y)}


def _to_tree(clf: DecisionTreeClassifier) -> Tree:
    t = clf.tree_
    feature = np.where(t.children_left >= 0, t.feature, -1).astype(np.int64)
    value = t.value[:, 0, :]
    classes = list(clf.classes_)
    if 1 in classes:
        pos = value[:, classes.index(1)] / value.sum(axis=1)
    else:
        pos = np.zeros(value.shape[0])
    return Tree(feature, t.threshold.astype(np.float64), t.children_left.astype(np.int64),
                t.children_right.astype(np.int64), pos.astype(np.float64))


def train_forest(X, y, params: ForestParams | None = None, seed: int = 0) -> RandomForest:
    """Grow a forest on samples ``X`` with labels ``y`` in {+1, -1}.

    Every tree sees a fraction of the samples drawn without replacement and
    considers floor(sqrt(D)) candidate features per split.  A single-class
    training set yields a degenerate forest that always predicts that class.
    """
    params = params or ForestParams()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    if X.ndim != 2 or X.shape[0] != y.size or y.size == 0:
        raise InputError("need a non-empty (n, D) sample matrix with n labels")
    if not np.isin(y, (-1, 1)).all():
        raise InputError("labels must be +1 or -1")
    d = X.shape[1]
    classes = np.unique(y)
    if classes.size == 1:
        return RandomForest([leaf_tree(1.0 if classes[0] == 1 else 0.0)], d, params, seed, degenerate=True)

    weights = class_weights(y) if params.balanced else {-1: 1.0, 1: 1.0}
    sw = np.where(y == 1, weights[1], weights[-1])
    max_features = params.max_features or max(1, int(math.isqrt(d)))
    trees = []
    for idx, state in subsamples(y.size, params, seed):
        clf = DecisionTreeClassifier(criterion="gini", max_features=max_features, random_state=state)
        clf.fit(X[idx], y[idx], sample_weight=sw[idx])
        trees.append(_to_tree(clf))
    return RandomForest(trees, d, params, seed)


def subsamples(n: int, params: ForestParams, seed: int):
    """Per tree: sorted training-row indices (drawn without replacement) and a split-search seed."""
    n_sub = max(1, min(n, int(round(params.sample_fraction * n))))
    for child in np.random.SeedSequence(seed).spawn(params.n_trees):
        rng = np.random.default_rng(child)
        idx = np.sort(rng.choice(n, size=n_sub, replace=False))
        yield idx, int(rng.integers(2**31 - 1))


def oob_accuracy(forest: RandomForest, X, y) -> float:
    """Accuracy on the training rows, each voted only by trees that did not see it."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    votes = np.zeros(y.size)
    counts = np.zeros(y.size)
    for tree, (idx, _) in zip(forest.trees, subsamples(y.size, forest.params, forest.seed)):
        out = np.ones(y.size, dtype=bool)
        out[idx] = False
        for i in np.flatnonzero(out):
            votes[i] += tree.predict_one(X[i])
            counts[i] += 1
    seen = counts > 0
    if not seen.any():
        raise InputError("no out-of-bag rows")
    pred = np.where(votes[seen] / counts[seen] > 0.5, 1, -1)
    return float((pred == y[seen]).mean())


@njit(cache=True)
def _predict_flat(X, roots, feat, thr, left, right, value, out):
    n_trees = roots.size
    for i in range(X.shape[0]):
        total = 0.0
        for t in range(n_trees):
            node = roots[t]
            while feat[node] >= 0:
                if X[i, feat[node]] <= thr[node]:
                    node = left[node]
                else:
                    node = right[node]
            total += value[node]
        out[i] = total / n_trees
