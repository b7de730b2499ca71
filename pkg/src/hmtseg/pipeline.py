"""Iterative training and testing of merge-tree segmenters.

Iteration 0 builds each image's merge tree from boundary-map statistics;
iteration t > 0 uses the classifier trained at t - 1 as merging saliency.
Training accumulates deduplicated samples across iterations.  Testing
scores every tree with the matching classifier, infers a segmentation,
and averages the resulting binary contour maps.
"""
from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .classifier import (
    EnsembleClassifier,
    SampleSet,
    TrainingSample,
    dedup_key,
    generate_training_labels,
    size_categories,
    train_ensemble,
)
from .config import Config
from .contours import seg_to_contour
from .core import InputError, as_contour, as_image
from .features import FeatureContext, RegionStats, layout, pair_vector
from .forest import ForestParams
from .inference import CliqueScores, infer, labels_to_segmentation
from .mergetree import MergeTree, NegatedMedianSaliency, build_merge_tree, hierarchy_map
from .metrics import evaluate_ods_ois
from .superpixel import build_adjacency, pre_merge_small, watershed

log = logging.getLogger(__name__)


def add_gaussian_noise(img, variance: float, seed: int = 0) -> np.ndarray:
    """Add zero-mean Gaussian noise of the given variance per sample, then clamp to [0, 1]."""
    if variance < 0:
        raise InputError("noise variance must be >= 0")
    arr = np.asarray(img, dtype=np.float64)
    if variance == 0:
        return arr.copy()
    rng = np.random.default_rng(seed)
    return np.clip(arr + rng.normal(0.0, np.sqrt(variance), size=arr.shape), 0.0, 1.0)


@dataclass
class Item:
    """One image with its boundary map and ground truths (ordered by detail)."""

    name: str
    image: np.ndarray
    pb: np.ndarray
    gts: list[np.ndarray] = field(default_factory=list)


@dataclass
class Prepared:
    """Per-image state shared by all iterations: superpixels, base tree, feature context."""

    name: str
    digest: str
    superpixels: np.ndarray
    adjacency: object
    tree0: MergeTree
    ctx: FeatureContext
    leaf_stats: list[RegionStats]
    gts: list[np.ndarray]


def image_digest(image: np.ndarray, pb: np.ndarray) -> str:
    h = hashlib.sha1()
    h.update(np.ascontiguousarray(image, dtype=np.float64).tobytes())
    h.update(np.ascontiguousarray(pb, dtype=np.float64).tobytes())
    return h.hexdigest()


def prepare(item: Item, cfg: Config) -> Prepared:
    try:
        image = as_image(item.image)
        pb = as_contour(item.pb)
        if pb.shape != image.shape[:2]:
            raise InputError("boundary map and image differ in shape")
        for g in item.gts:
            if np.asarray(g).shape != pb.shape:
                raise InputError("ground truth and image differ in shape")
        sp = pre_merge_small(watershed(pb, cfg.water_level), pb, cfg.min_size)
        adj = build_adjacency(sp, pb)
        tree0 = build_merge_tree(sp, adj, NegatedMedianSaliency(pb))
    except InputError as exc:
        raise InputError(f"{item.name}: {exc}") from exc
    ctx = FeatureContext.build(image, pb, hierarchy_map(tree0))
    return Prepared(item.name, image_digest(image, pb), sp, adj, tree0, ctx, ctx.leaf_stats(sp),
                    [np.asarray(g) for g in item.gts])


class PairFeatures:
    """Feature vectors of region pairs during one tree construction, memoized by node ids."""

    def __init__(self, prep: Prepared):
        self.prep = prep
        self.stats: dict[int, RegionStats] = dict(enumerate(prep.leaf_stats))
        self.cache: dict[tuple[int, int], np.ndarray] = {}

    def region(self, node: int, left, right) -> RegionStats:
        st = self.stats.get(node)
        if st is None:
            st = self.region(int(left[node]), left, right) + self.region(int(right[node]), left, right)
            self.stats[node] = st
        return st

    def vector(self, a: int, b: int, perimeter, left, right, boundary) -> np.ndarray:
        key = (a, b) if a < b else (b, a)
        fv = self.cache.get(key)
        if fv is None:
            fv = pair_vector(self.prep.ctx, self.region(a, left, right), self.region(b, left, right),
                             float(perimeter[a]), float(perimeter[b]), boundary)
            self.cache[key] = fv
        return fv


class ClassifierSaliency:
    """Merging saliency given by a boundary classifier's merge probability."""

    def __init__(self, ens: EnsembleClassifier, feats: PairFeatures):
        self.ens = ens
        self.feats = feats

    def __call__(self, pairs, state):
        X = np.stack([
            self.feats.vector(a, b, state.perimeter, state.left, state.right, state.graph.boundary(a, b))
            for a, b in pairs
        ])
        sizes = np.array([[state.size[a], state.size[b]] for a, b in pairs])
        return self.ens.predict(X, sizes)


def build_tree(prep: Prepared, ens: EnsembleClassifier | None) -> tuple[MergeTree, PairFeatures]:
    feats = PairFeatures(prep)
    if ens is None:
        return prep.tree0, feats
    tree = build_merge_tree(prep.superpixels, prep.adjacency, ClassifierSaliency(ens, feats))
    return tree, feats


def clique_features(tree: MergeTree, feats: PairFeatures) -> tuple[np.ndarray, np.ndarray]:
    cliques = tree.cliques
    if not cliques:
        return np.zeros((0, feats.prep.ctx.length)), np.zeros((0, 2), dtype=np.int64)
    X = np.stack([feats.vector(j, k, tree.perimeter, tree.left, tree.right, tree.boundary[i]) for i, j, k in cliques])
    sizes = np.array([[tree.size[j], tree.size[k]] for _, j, k in cliques], dtype=np.int64)
    return X, sizes


def tree_samples(prep: Prepared, tree: MergeTree, feats: PairFeatures, gt: np.ndarray, metric: str) -> list[TrainingSample]:
    X, sizes = clique_features(tree, feats)
    labels = generate_training_labels(tree, gt, metric)
    out = []
    for row, (i, j, k) in enumerate(tree.cliques):
        key = dedup_key(prep.digest, tree.leaves_of(j), tree.leaves_of(k))
        out.append(TrainingSample(X[row], labels[i], (int(sizes[row, 0]), int(sizes[row, 1])), key))
    return out


def segment_tree(tree: MergeTree, feats: PairFeatures, ens: EnsembleClassifier) -> np.ndarray:
    X, sizes = clique_features(tree, feats)
    prob = np.full(tree.n_nodes, np.nan)
    if X.shape[0]:
        prob[tree.n_leaves:] = ens.predict(X, sizes)
    y = infer(tree, CliqueScores(prob))
    return labels_to_segmentation(tree, y)


@dataclass
class ClassifierSeries:
    """Classifiers f^0..f^T for one ground-truth detail level plus a config snapshot."""

    classifiers: list[EnsembleClassifier]
    config: dict
    level: int = 0
    report: list[dict] = field(default_factory=list)


def _map(fn, args, workers: int):
    if workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, *zip(*args)))
    return [fn(*a) for a in args]


def _iteration_samples(prep: Prepared, ens, gt, metric):
    tree, feats = build_tree(prep, ens)
    return tree_samples(prep, tree, feats, gt, metric)


def _detail_levels(preps: list[Prepared], cfg: Config) -> int:
    common = min(len(p.gts) for p in preps)
    if common == 0:
        bad = next(p.name for p in preps if not p.gts)
        raise InputError(f"{bad}: training item without ground truth")
    return min(common, cfg.detail_levels) if cfg.detail_levels else common


def train_iterative(items: list[Item], cfg: Config, val_items: list[Item] | None = None,
                    preps: list[Prepared] | None = None) -> list[ClassifierSeries]:
    """Train one classifier series per ground-truth detail level."""
    if preps is None:
        preps = _map(prepare, [(it, cfg) for it in items], cfg.workers)
    if not preps:
        raise InputError("no training items")
    params = ForestParams(cfg.n_trees, cfg.sample_fraction, cfg.max_features or None, cfg.balanced_weights)
    lay = layout(preps[0].ctx.n_extra)
    val_preps = [prepare(it, cfg) for it in val_items] if (cfg.early_stopping and val_items) else []
    out = []
    for level in range(_detail_levels(preps, cfg)):
        samples = SampleSet()
        series = ClassifierSeries([], config=snapshot(cfg, lay), level=level)
        best = -np.inf
        for t in range(cfg.iterations + 1):
            prev = series.classifiers[-1] if t else None
            batches = _map(_iteration_samples, [(p, prev, p.gts[level], cfg.label_metric) for p in preps], cfg.workers)
            generated = sum(len(b) for b in batches)
            added = sum(samples.extend(b) for b in batches)
            ens = train_ensemble(samples, lay, seed=cfg.seed * 100003 + level * 1009 + t, params=params)
            series.classifiers.append(ens)
            routing = np.bincount(_categories(samples, ens), minlength=4)[1:].tolist()
            series.report.append({"level": level, "iteration": t, "generated": generated, "added": added,
                                  "samples": len(samples), "routing": routing, "flags": ens.flags})
            log.info("level %d iteration %d: %d samples (%d new)", level, t, len(samples), added)
            if val_preps:
                score = _validation_covering(val_preps, series, cfg)
                if score <= best:
                    series.classifiers.pop()
                    series.report[-1]["stopped"] = True
                    break
                best = score
        out.append(series)
    return out


def _categories(samples: SampleSet, ens: EnsembleClassifier) -> np.ndarray:
    return size_categories(samples.sizes, ens.median_size)


def _validation_covering(preps, series, cfg) -> float:
    maps = [accumulate(_segment_one(p, [series], cfg)) for p in preps]
    report = evaluate_ods_ois(maps, [p.gts for p in preps], cfg.thresholds)
    return report.ods["covering"]


def snapshot(cfg: Config, lay: dict) -> dict:
    return {"iterations": cfg.iterations, "seed": cfg.seed, "water_level": cfg.water_level,
            "min_size": cfg.min_size, "label_metric": cfg.label_metric, "layout": lay}


def _segment_one(prep: Prepared, series_list: list[ClassifierSeries], cfg: Config) -> list[np.ndarray]:
    maps = []
    for series in series_list:
        for t, ens in enumerate(series.classifiers):
            if ens.n_features != prep.ctx.length:
                raise InputError(f"{prep.name}: classifier expects {ens.n_features} features, got {prep.ctx.length}")
            tree, feats = build_tree(prep, series.classifiers[t - 1] if t else None)
            maps.append(seg_to_contour(segment_tree(tree, feats, ens)))
    return maps


def accumulate(maps: list[np.ndarray]) -> np.ndarray:
    return np.mean(np.stack(maps), axis=0)


@dataclass
class SegmentResult:
    name: str
    iteration_maps: list[np.ndarray]  # binary contour map per (level, iteration)
    n_levels: int = 1

    @property
    def contour(self) -> np.ndarray:
        return accumulate(self.iteration_maps)

    def upto(self, t: int) -> np.ndarray:
        """Accumulated map using iterations 0..t of every level."""
        per = len(self.iteration_maps) // self.n_levels
        picks = [self.iteration_maps[lv * per + k] for lv in range(self.n_levels) for k in range(t + 1)]
        return accumulate(picks)


def segment_iterative(items: list[Item], series_list: list[ClassifierSeries], cfg: Config,
                      preps: list[Prepared] | None = None) -> list[SegmentResult]:
    if not series_list or not all(s.classifiers for s in series_list):
        raise InputError("empty classifier series")
    if preps is None:
        preps = _map(prepare, [(it, cfg) for it in items], cfg.workers)
    maps = _map(_segment_one, [(p, series_list, cfg) for p in preps], cfg.workers)
    return [SegmentResult(p.name, m, len(series_list)) for p, m in zip(preps, maps)]
