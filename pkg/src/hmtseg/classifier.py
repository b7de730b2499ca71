"""Boundary classifier: training labels, size-stratified ensemble of forests."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .core import InputError
from .forest import ForestParams, RandomForest, train_forest
from .mergetree import MergeTree

CATEGORIES = (1, 2, 3)
TIE_TOL = 1e-12  # entropy differences below this count as ties


def _entropy_of_counts(counts: np.ndarray) -> float:
    counts = counts[counts > 0]
    p = counts / counts.sum()
    return -float((p * np.log(p)).sum())


def _pairs(x) -> int:
    x = np.asarray(x, dtype=np.int64)
    return int((x * (x - 1) // 2).sum())


def clique_label(cj: np.ndarray, ck: np.ndarray, metric: str = "vi") -> int:
    """+1 when keeping two children merged scores no worse than splitting them.

    ``cj``/``ck`` are ground-truth label counts inside each child; the
    comparison is restricted to the parent region.
    """
    call = cj + ck
    nj, nk = int(cj.sum()), int(ck.sum())
    if metric == "vi":
        h_g = _entropy_of_counts(call)
        merge_err = h_g
        # VI(split, gt) = 2 H(split, gt) - H(split) - H(gt)
        h_split = _entropy_of_counts(np.array([nj, nk]))
        h_joint = _entropy_of_counts(np.concatenate([cj, ck]))
        split_err = 2 * h_joint - h_split - h_g
        return 1 if merge_err <= split_err + TIE_TOL else -1
    if metric == "ri":
        n = nj + nk
        total = n * (n - 1) // 2
        same_g = _pairs(call)
        merge_agree = same_g  # merged: agreements are exactly the gt-same pairs
        split_agree = total - _pairs([nj, nk]) - same_g + 2 * (_pairs(cj) + _pairs(ck))
        return 1 if merge_agree >= split_agree else -1
    raise InputError(f"unknown label metric {metric!r}")


def generate_training_labels(tree: MergeTree, gt, metric: str = "vi") -> dict[int, int]:
    """Merge (+1) or split (-1) label for every clique, judged on the parent region only."""
    gt = np.asarray(gt)
    if gt.shape != tree.leaf_labels.shape:
        raise InputError("ground truth and tree image differ in shape")
    _, g = np.unique(gt.ravel(), return_inverse=True)
    g = g.ravel()
    ng = int(g.max()) + 1
    leaves = tree.leaf_labels.ravel()
    counts = np.zeros((tree.n_nodes, ng), dtype=np.int64)
    counts[: tree.n_leaves] = np.bincount(leaves * ng + g, minlength=tree.n_leaves * ng).reshape(tree.n_leaves, ng)
    labels = {}
    for i, j, k in tree.cliques:
        counts[i] = counts[j] + counts[k]
        labels[i] = clique_label(counts[j], counts[k], metric)
    return labels


def size_category(sz_i: int, sz_j: int, med: float) -> int:
    """1: both regions below the median size; 2: exactly one below; 3: neither."""
    lo, hi = min(sz_i, sz_j), max(sz_i, sz_j)
    if hi < med:
        return 1
    if lo < med <= hi:
        return 2
    return 3


def size_categories(sizes: np.ndarray, med: float) -> np.ndarray:
    sizes = np.asarray(sizes)
    lo, hi = sizes.min(axis=1), sizes.max(axis=1)
    return np.where(hi < med, 1, np.where(lo < med, 2, 3))


def dedup_key(image_digest: str, region_a, region_b) -> str:
    """Order-independent identity of a region pair within an image.

    Regions are given as index sets (pixels, or leaf superpixels when the
    over-segmentation is fixed); the key does not depend on argument order.
    """
    a = np.sort(np.asarray(region_a, dtype=np.int64))
    b = np.sort(np.asarray(region_b, dtype=np.int64))
    if b[0] < a[0]:
        a, b = b, a
    h = hashlib.sha1(image_digest.encode())
    h.update(a.tobytes())
    h.update(b"|")
    h.update(b.tobytes())
    return h.hexdigest()


@dataclass
class TrainingSample:
    features: np.ndarray
    label: int
    sizes: tuple[int, int]
    key: str


@dataclass
class SampleSet:
    """Column-wise storage of training samples with duplicate removal by key."""

    X: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    y: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    sizes: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    keys: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.keys)

    @classmethod
    def from_samples(cls, samples: list[TrainingSample]) -> "SampleSet":
        out = cls()
        out.extend(samples)
        return out

    def extend(self, samples) -> int:
        """Append samples whose key is new; return how many were added."""
        seen = set(self.keys)
        fresh = []
        for s in samples:
            if s.key not in seen:
                seen.add(s.key)
                fresh.append(s)
        if not fresh:
            return 0
        X = np.stack([s.features for s in fresh])
        if len(self):
            X = np.vstack([self.X, X])
        self.X = X
        self.y = np.concatenate([self.y, [s.label for s in fresh]]).astype(np.int64)
        self.sizes = np.vstack([self.sizes, [s.sizes for s in fresh]]).astype(np.int64)
        self.keys.extend(s.key for s in fresh)
        return len(fresh)


@dataclass
class EnsembleClassifier:
    forests: dict[int, RandomForest]
    median_size: float
    layout: dict
    flags: list[str] = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return int(self.layout["length"])

    def predict(self, X, sizes) -> np.ndarray:
        """Merge probability per row, each routed by its pair of region sizes."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        sizes = np.atleast_2d(np.asarray(sizes))
        if X.shape[1] != self.n_features:
            raise InputError(f"feature layout mismatch: expected {self.n_features}, got {X.shape[1]}")
        cats = size_categories(sizes, self.median_size)
        out = np.empty(X.shape[0])
        for c in CATEGORIES:
            rows = np.flatnonzero(cats == c)
            if rows.size:
                out[rows] = self.forests[c].predict_proba(X[rows])
        return out

    def to_dict(self) -> dict:
        return {
            "format": "hmtseg-ensemble/1",
            "median_size": self.median_size,
            "layout": self.layout,
            "flags": self.flags,
            "forests": {str(c): self.forests[c].to_dict() for c in CATEGORIES},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleClassifier":
        if d.get("format") != "hmtseg-ensemble/1":
            raise InputError("not an ensemble model document")
        return cls(
            forests={c: RandomForest.from_dict(d["forests"][str(c)]) for c in CATEGORIES},
            median_size=float(d["median_size"]),
            layout=d["layout"],
            flags=list(d["flags"]),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "EnsembleClassifier":
        return cls.from_dict(json.loads(text))


def predict_merge_prob(ens: EnsembleClassifier, fv, sz_i: int, sz_j: int) -> float:
    return float(ens.predict(np.asarray(fv)[None, :], [[sz_i, sz_j]])[0])


def train_ensemble(samples: SampleSet, layout: dict, seed: int = 0, params: ForestParams | None = None) -> EnsembleClassifier:
    """One forest per size category; empty categories fall back to a forest on all samples."""
    if len(samples) == 0:
        raise InputError("no training samples")
    med = float(np.median(samples.sizes.ravel()))
    cats = size_categories(samples.sizes, med)
    forests: dict[int, RandomForest] = {}
    flags: list[str] = []
    fallback = None
    for c in CATEGORIES:
        rows = np.flatnonzero(cats == c)
        if rows.size == 0:
            if fallback is None:
                fallback = train_forest(samples.X, samples.y, params, seed=seed * 10)
            forests[c] = fallback
            flags.append(f"category {c}: no samples, using fallback forest")
            continue
        forests[c] = train_forest(samples.X[rows], samples.y[rows], params, seed=seed * 10 + c)
        if forests[c].degenerate:
            flags.append(f"category {c}: single-class samples, degenerate forest")
    return EnsembleClassifier(forests, med, layout, flags)
