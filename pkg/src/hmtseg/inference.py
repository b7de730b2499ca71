"""Exact constrained labeling of merge trees, plus greedy and brute-force solvers.

A labeling assigns +1 (merge) or -1 (split) to every node.  Leaves are
always +1 and a +1 node forces +1 on all its descendants.  The selected
regions are the +1 nodes whose parent is -1 (or the root, if +1).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import InputError, InvariantError, canonicalize
from .mergetree import MergeTree

EPS = 1e-6
MAX_BRUTE_FORCE_INTERNAL = 20


def clique_energies(p: float) -> tuple[float, float]:
    """Energies (-log p, -log(1-p)) of merging and splitting, p clamped to [eps, 1-eps]."""
    p = min(max(float(p), EPS), 1.0 - EPS)
    return -math.log(p), -math.log(1.0 - p)


@dataclass
class CliqueScores:
    """Merge probability per node; entries for leaves are ignored (NaN)."""

    prob: np.ndarray

    @classmethod
    def from_mapping(cls, tree: MergeTree, probs: dict[int, float]) -> "CliqueScores":
        arr = np.full(tree.n_nodes, np.nan)
        for i, p in probs.items():
            arr[i] = p
        return cls(arr)

    def energies(self) -> tuple[np.ndarray, np.ndarray]:
        p = np.clip(self.prob, EPS, 1.0 - EPS)
        return -np.log(p), -np.log(1.0 - p)


@dataclass
class EnergyTuples:
    merge: np.ndarray
    split: np.ndarray


def compute_energy_tuples(tree: MergeTree, scores: CliqueScores) -> EnergyTuples:
    """Bottom-up pass: best energies of each subtree with the node merged or split.

    Children always carry smaller ids than their parent, so a single sweep
    in id order is a post-order traversal.
    """
    prob = np.asarray(scores.prob, dtype=np.float64)
    if prob.size != tree.n_nodes:
        raise InputError("scores do not match tree size")
    internal = np.arange(tree.n_leaves, tree.n_nodes)
    if np.isnan(prob[internal]).any():
        missing = internal[np.isnan(prob[internal])]
        raise InputError(f"missing clique scores for nodes {missing.tolist()}")
    e_plus, e_minus = scores.energies()
    em = np.zeros(tree.n_nodes)
    es = np.full(tree.n_nodes, np.inf)
    for i in internal:
        j, k = tree.left[i], tree.right[i]
        em[i] = em[j] + em[k] + e_plus[i]
        es[i] = min(em[j], es[j]) + min(em[k], es[k]) + e_minus[i]
    return EnergyTuples(em, es)


def assign_node_labels(tree: MergeTree, tuples: EnergyTuples) -> np.ndarray:
    """Top-down pass: a node merges when its merge energy is strictly lower."""
    y = np.zeros(tree.n_nodes, dtype=np.int64)
    for i in range(tree.n_nodes - 1, -1, -1):
        p = tree.parent[i]
        if p >= 0 and y[p] == 1:
            y[i] = 1
        else:
            y[i] = 1 if tuples.merge[i] < tuples.split[i] else -1
    return y


def check_labeling(tree: MergeTree, y: np.ndarray) -> None:
    y = np.asarray(y)
    if y.size != tree.n_nodes or not np.isin(y, (-1, 1)).all():
        raise InputError("labeling must hold +1/-1 for every node")
    if (y[: tree.n_leaves] != 1).any():
        raise InputError("every leaf must be labeled +1")
    for i in range(tree.n_leaves, tree.n_nodes):
        if y[i] == 1 and (y[tree.left[i]] != 1 or y[tree.right[i]] != 1):
            raise InputError(f"node {i} is merged but a child is split")


def selected_nodes(tree: MergeTree, y: np.ndarray) -> list[int]:
    check_labeling(tree, y)
    out = [i for i in range(tree.n_nodes) if y[i] == 1 and (tree.parent[i] < 0 or y[tree.parent[i]] == -1)]
    return out


def labels_to_segmentation(tree: MergeTree, y: np.ndarray) -> np.ndarray:
    return canonicalize(tree.node_map(selected_nodes(tree, y)))


def total_energy(tree: MergeTree, scores: CliqueScores, y: np.ndarray) -> float:
    e_plus, e_minus = scores.energies()
    internal = np.arange(tree.n_leaves, tree.n_nodes)
    yi = np.asarray(y)[internal]
    return float(np.where(yi == 1, e_plus[internal], e_minus[internal]).sum())


def infer(tree: MergeTree, scores: CliqueScores) -> np.ndarray:
    """Optimal consistent labeling (bottom-up energies, top-down decisions)."""
    y = assign_node_labels(tree, compute_energy_tuples(tree, scores))
    try:
        check_labeling(tree, y)
    except InputError as exc:  # pragma: no cover - guarded invariant
        raise InvariantError(str(exc)) from exc
    return y


def brute_force_inference(tree: MergeTree, scores: CliqueScores) -> np.ndarray:
    """Exhaustive minimum-energy labeling over every internal-node assignment.

    Ties prefer the labeling that is lexicographically smallest when read
    from the root downwards (so a split at the highest tied node wins).
    """
    n_int = tree.n_nodes - tree.n_leaves
    if n_int > MAX_BRUTE_FORCE_INTERNAL:
        raise InputError(f"tree too large for brute force ({n_int} internal nodes)")
    e_plus, e_minus = scores.energies()
    internal = list(range(tree.n_leaves, tree.n_nodes))
    best_key, best_y = None, None
    for bits in itertools.product((-1, 1), repeat=n_int):
        y = np.ones(tree.n_nodes, dtype=np.int64)
        y[tree.n_leaves:] = bits
        if not _consistent(tree, y):
            continue
        energy = math.fsum(e_plus[i] if y[i] == 1 else e_minus[i] for i in internal)
        key = (energy, tuple(y[::-1]))
        if best_key is None or key < best_key:
            best_key, best_y = key, y
    return best_y


def _consistent(tree: MergeTree, y: np.ndarray) -> bool:
    for i in range(tree.n_leaves, tree.n_nodes):
        if y[i] == 1 and (y[tree.left[i]] != 1 or y[tree.right[i]] != 1):
            return False
    return True


def greedy_tree_inference(tree: MergeTree, scores: CliqueScores) -> np.ndarray:
    """Greedy baseline: accept the highest-scored node that conflicts with no earlier pick.

    Internal nodes score their own merge probability; a leaf scores one
    minus its parent's merge probability.  Ties go to the smaller node id.
    """
    prob = np.asarray(scores.prob, dtype=np.float64)
    score = np.empty(tree.n_nodes)
    score[tree.n_leaves:] = prob[tree.n_leaves:]
    for i in range(tree.n_leaves):
        p = tree.parent[i]
        score[i] = 1.0 - prob[p] if p >= 0 else 1.0
    y = np.zeros(tree.n_nodes, dtype=np.int64)
    for i in sorted(range(tree.n_nodes), key=lambda k: (-score[k], k)):
        if y[i] != 0:
            continue
        stack = [i]
        while stack:
            k = stack.pop()
            y[k] = 1
            if k >= tree.n_leaves:
                stack.extend((tree.left[k], tree.right[k]))
        p = tree.parent[i]
        while p >= 0 and y[p] == 0:
            y[p] = -1
            p = tree.parent[p]
    check_labeling(tree, y)
    return y
