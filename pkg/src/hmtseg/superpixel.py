"""Initial over-segmentation: watershed, small-region pre-merge, adjacency.

The boundary pixel set between two regions is two-sided: the pixels of
either region that have a 4-neighbour in the other one.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from skimage.morphology import local_minima

from .core import FOUR_CONNECTED, InputError, as_contour, canonicalize, neighbor_pairs

DEFAULT_WATER_LEVEL = 0.01
DEFAULT_MIN_SIZE = 20


def watershed(pb, water_level: float = DEFAULT_WATER_LEVEL) -> np.ndarray:
    """Priority-flood watershed of ``max(pb, water_level)``.

    Every regional minimum plateau of the clamped map seeds a basin, so all
    pixels at or below the water level that touch each other share a basin.
    Pixels are flooded in increasing value order with ties broken by flat
    index; a pixel takes the label of the basin that first reaches it, so
    no watershed-line pixels remain.
    """
    if np.asarray(pb).size == 0:
        raise InputError("empty boundary map")
    pb = as_contour(pb)
    if not 0.0 <= water_level < 1.0:
        raise InputError(f"water level must be in [0, 1), got {water_level}")
    h, w = pb.shape
    level = np.maximum(pb, water_level)
    minima = local_minima(level, connectivity=1, allow_borders=True)
    if not minima.any():
        minima = level == level.min()
    seeds = canonicalize_mask_components(minima)

    flat = level.ravel()
    labels = seeds.ravel().copy()
    heap = [(flat[i], int(i)) for i in np.flatnonzero(labels >= 0)]
    heapq.heapify(heap)
    while heap:
        _, i = heapq.heappop(heap)
        lab = labels[i]
        r, c = divmod(i, w)
        for j in (i - w if r > 0 else -1, i - 1 if c > 0 else -1,
                  i + 1 if c < w - 1 else -1, i + w if r < h - 1 else -1):
            if j >= 0 and labels[j] < 0:
                labels[j] = lab
                heapq.heappush(heap, (flat[j], j))
    return canonicalize(labels.reshape(h, w))


def canonicalize_mask_components(mask: np.ndarray) -> np.ndarray:
    """4-connected components of ``mask`` labelled 0.., background -1."""
    comp, _ = ndimage.label(mask, structure=FOUR_CONNECTED)
    return comp.astype(np.int64) - 1


@dataclass
class RegionAdjacency:
    """Region sizes, perimeters and pairwise boundary data of a segmentation.

    ``boundary[(i, j)]`` (with i < j) holds the sorted flat indices of the
    boundary pixel set; ``edges[(i, j)]`` counts adjacent pixel pairs that
    straddle the two regions.  Perimeters count pixel sides facing another
    region or the image border.
    """

    shape: tuple[int, int]
    sizes: np.ndarray
    perimeters: np.ndarray
    boundary: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    edges: dict[tuple[int, int], int] = field(default_factory=dict)

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return sorted(self.boundary)

    @property
    def n_regions(self) -> int:
        return int(self.sizes.size)


def build_adjacency(seg, pb=None) -> RegionAdjacency:
    seg = np.asarray(seg)
    if seg.ndim != 2 or seg.size == 0:
        raise InputError("segmentation must be a non-empty 2-D array")
    if pb is not None and np.asarray(pb).shape != seg.shape:
        raise InputError(f"boundary map shape {np.asarray(pb).shape} != segmentation shape {seg.shape}")
    flat = seg.ravel().astype(np.int64)
    n_regions = int(flat.max()) + 1
    sizes = np.bincount(flat, minlength=n_regions)

    p, q = neighbor_pairs(seg.shape)
    differ = flat[p] != flat[q]
    p, q = p[differ], q[differ]
    lp, lq = flat[p], flat[q]
    lo, hi = np.minimum(lp, lq), np.maximum(lp, lq)

    # pixel sides not shared with a same-label 4-neighbour
    pp, qq = neighbor_pairs(seg.shape)
    same = flat[pp] == flat[qq]
    open_sides = np.full(flat.size, 4, dtype=np.int64)
    np.subtract.at(open_sides, pp[same], 1)
    np.subtract.at(open_sides, qq[same], 1)
    perimeters = np.bincount(flat, weights=open_sides, minlength=n_regions).astype(np.int64)

    adj = RegionAdjacency(shape=seg.shape, sizes=sizes, perimeters=perimeters)
    if p.size == 0:
        return adj
    key = lo * n_regions + hi
    ukeys, counts = np.unique(key, return_counts=True)
    # each straddling edge contributes both of its pixels to the boundary set
    all_keys = np.concatenate([key, key])
    all_pix = np.concatenate([p, q])
    order = np.lexsort((all_pix, all_keys))
    all_keys, all_pix = all_keys[order], all_pix[order]
    starts = np.searchsorted(all_keys, ukeys, side="left")
    ends = np.searchsorted(all_keys, ukeys, side="right")
    for k, c, a, b in zip(ukeys.tolist(), counts.tolist(), starts.tolist(), ends.tolist()):
        pair = divmod(k, n_regions)
        adj.boundary[pair] = np.unique(all_pix[a:b])
        adj.edges[pair] = c
    return adj


class RegionGraph:
    """Mutable region adjacency graph supporting pairwise merges.

    Region ids are arbitrary integers; merging ``a`` and ``b`` into ``new``
    (which may equal ``a`` or ``b``) rebuilds the new region's boundary sets
    as unions of the constituent sets.
    """

    def __init__(self, adj: RegionAdjacency):
        self.sizes = {i: int(s) for i, s in enumerate(adj.sizes)}
        self.perimeters = {i: int(s) for i, s in enumerate(adj.perimeters)}
        self.nbrs: dict[int, dict[int, int]] = {i: {} for i in range(adj.n_regions)}
        self._boundary: dict[tuple[int, int], np.ndarray] = {}
        for (i, j), pix in adj.boundary.items():
            self.nbrs[i][j] = self.nbrs[j][i] = adj.edges[(i, j)]
            self._boundary[(i, j)] = pix

    def __len__(self) -> int:
        return len(self.sizes)

    def boundary(self, a: int, b: int) -> np.ndarray:
        return self._boundary[(a, b) if a < b else (b, a)]

    def pairs(self):
        return sorted(self._boundary)

    def merge(self, a: int, b: int, new: int) -> list[int]:
        """Merge adjacent regions ``a`` and ``b`` into ``new``; return new's neighbours."""
        if b not in self.nbrs[a]:
            raise InputError(f"regions {a} and {b} are not adjacent")
        na, nb = self.nbrs.pop(a), self.nbrs.pop(b)
        shared = na[b]
        merged: dict[int, int] = {}
        merged_b: dict[int, np.ndarray] = {}
        for c in sorted((set(na) | set(nb)) - {a, b}):
            merged[c] = na.get(c, 0) + nb.get(c, 0)
            parts = []
            for x, nx in ((a, na), (b, nb)):
                if c in nx:
                    parts.append(self._boundary.pop(_key(x, c)))
                    del self.nbrs[c][x]
            merged_b[c] = parts[0] if len(parts) == 1 else np.union1d(parts[0], parts[1])
        del self._boundary[_key(a, b)]

        size = self.sizes.pop(a) + self.sizes.pop(b)
        perim = self.perimeters.pop(a) + self.perimeters.pop(b) - 2 * shared
        self.sizes[new] = size
        self.perimeters[new] = perim
        self.nbrs[new] = merged
        for c, count in merged.items():
            self.nbrs[c][new] = count
            self._boundary[_key(new, c)] = merged_b[c]
        return sorted(merged)


def _key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def pre_merge_small(seg, pb, min_size: int = DEFAULT_MIN_SIZE) -> np.ndarray:
    """Absorb regions smaller than ``min_size`` into their lowest-barrier neighbour.

    The smallest offending region (ties: smaller id) is merged first; the
    barrier to a neighbour is the median of ``pb`` over their boundary set,
    ties going to the smaller neighbour id.
    """
    seg = canonicalize(seg)
    pb = as_contour(pb)
    if pb.shape != seg.shape:
        raise InputError("boundary map and segmentation differ in shape")
    if min_size <= 0:
        return seg
    graph = RegionGraph(build_adjacency(seg, pb))
    flat_pb = pb.ravel()
    owner = np.arange(len(graph))
    heap = [(s, i) for i, s in graph.sizes.items() if s < min_size]
    heapq.heapify(heap)
    while heap and len(graph) > 1:
        size, r = heapq.heappop(heap)
        if graph.sizes.get(r) != size:
            continue
        barriers = sorted((float(np.median(flat_pb[graph.boundary(r, c)])), c) for c in graph.nbrs[r])
        target = barriers[0][1]
        graph.merge(r, target, target)
        owner[owner == r] = target
        if graph.sizes[target] < min_size:
            heapq.heappush(heap, (graph.sizes[target], target))
    return canonicalize(owner[seg])
