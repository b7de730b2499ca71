"""Hierarchical merge trees built by greedy highest-saliency merging."""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from .core import InputError
from .superpixel import RegionAdjacency, RegionGraph


class SaliencyFn(Protocol):
    """Scores candidate merges; higher merges earlier.

    Called with a batch of adjacent ``(a, b)`` region pairs and the live
    :class:`TreeBuilder`; returns one real per pair.  Non-adjacent pairs are
    never offered (their saliency is conceptually -inf).
    """

    def __call__(self, pairs: Sequence[tuple[int, int]], state: "TreeBuilder") -> np.ndarray: ...


def saliency_neg_median(pb, boundary) -> float:
    """One minus the median boundary strength over ``boundary`` pixels."""
    boundary = np.asarray(boundary)
    if boundary.size == 0:
        raise InputError("empty boundary pixel set")
    values = np.asarray(pb).ravel()[boundary]
    return 1.0 - float(np.median(values))


class NegatedMedianSaliency:
    def __init__(self, pb):
        self.flat = np.asarray(pb, dtype=np.float64).ravel()

    def __call__(self, pairs, state):
        return np.array([1.0 - float(np.median(self.flat[state.graph.boundary(a, b)])) for a, b in pairs])


@dataclass
class MergeTree:
    """Full binary merge tree over the regions of ``leaf_labels``.

    Leaves are nodes ``0..R-1`` (the input superpixels); internal node ids
    follow merge order, so every child id is smaller than its parent's and
    the root is ``2R-2``.  ``boundary[i]``, ``saliency[i]`` record the
    boundary pixel set between the children of internal node ``i`` and the
    saliency that selected the merge.
    """

    leaf_labels: np.ndarray
    parent: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray
    perimeter: np.ndarray
    boundary: dict[int, np.ndarray] = field(default_factory=dict)
    saliency: dict[int, float] = field(default_factory=dict)

    @property
    def n_leaves(self) -> int:
        return (self.parent.size + 1) // 2

    @property
    def n_nodes(self) -> int:
        return int(self.parent.size)

    @property
    def root(self) -> int:
        return self.n_nodes - 1

    @property
    def cliques(self) -> list[tuple[int, int, int]]:
        """(parent, left child, right child) for every internal node, in merge order."""
        return [(i, int(self.left[i]), int(self.right[i])) for i in range(self.n_leaves, self.n_nodes)]

    def is_leaf(self, i: int) -> bool:
        return i < self.n_leaves

    @property
    def depth(self) -> np.ndarray:
        d = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes - 2, -1, -1):
            d[i] = d[self.parent[i]] + 1
        return d

    def leaves_of(self, node: int) -> list[int]:
        out, stack = [], [node]
        while stack:
            i = stack.pop()
            if i < self.n_leaves:
                out.append(i)
            else:
                stack.extend((int(self.right[i]), int(self.left[i])))
        return sorted(out)

    def leaf_pixels(self) -> list[np.ndarray]:
        if not hasattr(self, "_leaf_pixels"):
            flat = self.leaf_labels.ravel()
            order = np.argsort(flat, kind="stable")
            bounds = np.searchsorted(flat[order], np.arange(self.n_leaves + 1))
            self._leaf_pixels = [order[bounds[i]:bounds[i + 1]] for i in range(self.n_leaves)]
        return self._leaf_pixels

    def pixels_of(self, node: int) -> np.ndarray:
        """Sorted flat pixel indices of the region of ``node``."""
        lp = self.leaf_pixels()
        return np.sort(np.concatenate([lp[i] for i in self.leaves_of(node)]))

    def node_map(self, nodes: Sequence[int]) -> np.ndarray:
        """Label map assigning each pixel the position of its covering node in ``nodes``."""
        owner = np.full(self.n_leaves, -1, dtype=np.int64)
        for k, node in enumerate(nodes):
            owner[self.leaves_of(node)] = k
        if (owner < 0).any():
            raise InputError("nodes do not cover every leaf")
        return owner[self.leaf_labels]

    def dump(self) -> str:
        """Text dump: ``node_id depth parent_id left_id right_id size`` per line, leaves first; -1 marks absent."""
        depth = self.depth
        return "".join(
            f"{i} {depth[i]} {self.parent[i]} {self.left[i]} {self.right[i]} {self.size[i]}\n"
            for i in range(self.n_nodes)
        )


class TreeBuilder:
    """Live state of a merge-tree construction, visible to saliency functions."""

    def __init__(self, leaf_labels: np.ndarray, adjacency: RegionAdjacency):
        r = adjacency.n_regions
        n = 2 * r - 1
        self.leaf_labels = np.asarray(leaf_labels)
        self.graph = RegionGraph(adjacency)
        self.parent = np.full(n, -1, dtype=np.int64)
        self.left = np.full(n, -1, dtype=np.int64)
        self.right = np.full(n, -1, dtype=np.int64)
        self.size = np.zeros(n, dtype=np.int64)
        self.perimeter = np.zeros(n, dtype=np.int64)
        self.size[:r] = adjacency.sizes
        self.perimeter[:r] = adjacency.perimeters
        self.n_leaves = r
        self.next_id = r
        self.boundary: dict[int, np.ndarray] = {}
        self.saliency: dict[int, float] = {}

    def merge(self, a: int, b: int, sal: float) -> tuple[int, list[int]]:
        new = self.next_id
        self.next_id += 1
        self.boundary[new] = self.graph.boundary(a, b)
        self.saliency[new] = float(sal)
        lo, hi = (a, b) if a < b else (b, a)
        self.left[new], self.right[new] = lo, hi
        self.parent[a] = self.parent[b] = new
        nbrs = self.graph.merge(a, b, new)
        self.size[new] = self.graph.sizes[new]
        self.perimeter[new] = self.graph.perimeters[new]
        return new, nbrs

    def finish(self) -> MergeTree:
        return MergeTree(
            leaf_labels=self.leaf_labels,
            parent=self.parent,
            left=self.left,
            right=self.right,
            size=self.size,
            perimeter=self.perimeter,
            boundary=self.boundary,
            saliency=self.saliency,
        )


def build_merge_tree(seg, adjacency: RegionAdjacency, saliency: SaliencyFn | Callable) -> MergeTree:
    """Merge the most salient adjacent pair until a single region remains.

    Ties go to the lexicographically smaller ``(min id, max id)`` pair.
    Heap entries referring to already-merged regions are skipped lazily.
    """
    seg = np.asarray(seg)
    if adjacency.n_regions != int(seg.max()) + 1:
        raise InputError("adjacency does not match segmentation")
    state = TreeBuilder(seg, adjacency)
    pairs = state.graph.pairs()
    heap: list[tuple[float, int, int]] = []
    if pairs:
        values = np.asarray(saliency(pairs, state), dtype=np.float64)
        heap = [(-float(v), a, b) for v, (a, b) in zip(values, pairs)]
        heapq.heapify(heap)
    alive = set(range(state.n_leaves))
    while heap:
        neg, a, b = heapq.heappop(heap)
        if a not in alive or b not in alive:
            continue
        new, nbrs = state.merge(a, b, -neg)
        alive.discard(a)
        alive.discard(b)
        alive.add(new)
        if nbrs:
            cand = [(c, new) for c in nbrs]  # c < new always
            values = np.asarray(saliency(cand, state), dtype=np.float64)
            for v, (c, n) in zip(values, cand):
                heapq.heappush(heap, (-float(v), c, n))
    if len(alive) != 1:
        raise InputError(f"adjacency graph is disconnected ({len(alive)} components remain)")
    return state.finish()


def build_merge_tree_bruteforce(seg, adjacency: RegionAdjacency, saliency) -> MergeTree:
    """Reference construction that rescans every adjacent pair at each step."""
    seg = np.asarray(seg)
    state = TreeBuilder(seg, adjacency)
    while len(state.graph) > 1:
        pairs = state.graph.pairs()
        if not pairs:
            raise InputError("adjacency graph is disconnected")
        values = np.asarray(saliency(pairs, state), dtype=np.float64)
        best = max(range(len(pairs)), key=lambda k: (values[k], -pairs[k][0], -pairs[k][1]))
        state.merge(*pairs[best], values[best])
    return state.finish()


def hierarchy_map(tree: MergeTree) -> np.ndarray:
    """Per-pixel strength of the hierarchy level at which a pixel stops being boundary.

    Merge strengths (one minus saliency) are made monotone with a running
    maximum over merge order; each boundary pixel keeps the level of the
    last merge it bordered.  The result is scaled so its maximum is 1.
    """
    out = np.zeros(tree.leaf_labels.size)
    level = 0.0
    for i in range(tree.n_leaves, tree.n_nodes):
        level = max(level, min(max(1.0 - tree.saliency[i], 0.0), 1.0))
        out[tree.boundary[i]] = level
    top = out.max()
    if top > 0:
        out /= top
    return out.reshape(tree.leaf_labels.shape)
