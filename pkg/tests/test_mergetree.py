import numpy as np
import pytest

from conftest import smooth_random_map
from hmtseg.core import InputError
from hmtseg.mergetree import (
    NegatedMedianSaliency,
    build_merge_tree,
    build_merge_tree_bruteforce,
    hierarchy_map,
    saliency_neg_median,
)
from hmtseg.superpixel import build_adjacency, pre_merge_small, watershed


def _trees_equal(a, b):
    return (np.array_equal(a.parent, b.parent) and np.array_equal(a.left, b.left)
            and np.array_equal(a.right, b.right) and np.array_equal(a.size, b.size)
            and np.array_equal(a.perimeter, b.perimeter)
            and a.saliency == b.saliency
            and all(np.array_equal(a.boundary[i], b.boundary[i]) for i in a.boundary))


class TableSaliency:
    """Fixed saliency per frozenset of leaf ids; unknown pairs score by total size."""

    def __init__(self, table):
        self.table = table

    def __call__(self, pairs, state):
        return np.array([self.table.get((a, b), -float(state.size[a] + state.size[b])) for a, b in pairs])


def test_saliency_examples():
    pb = np.array([0.2, 0.4, 0.6])
    assert saliency_neg_median(pb, [0, 1, 2]) == pytest.approx(0.6)
    assert saliency_neg_median(np.zeros(4), [0, 3]) == 1.0
    assert saliency_neg_median(np.array([0.1, 0.3, 0.5, 0.9]), [0, 1, 2, 3]) == pytest.approx(0.6)
    with pytest.raises(InputError):
        saliency_neg_median(pb, [])


def test_single_region_tree():
    seg = np.zeros((3, 3), dtype=int)
    tree = build_merge_tree(seg, build_adjacency(seg), NegatedMedianSaliency(np.zeros((3, 3))))
    assert tree.n_nodes == 1 and tree.cliques == []


def test_two_region_tree():
    seg = np.array([[0, 0, 1, 1]])
    tree = build_merge_tree(seg, build_adjacency(seg), NegatedMedianSaliency(np.zeros((1, 4))))
    assert tree.n_nodes == 3 and tree.cliques == [(2, 0, 1)]
    assert tree.pixels_of(tree.root).tolist() == [0, 1, 2, 3]


def test_row_of_four_middle_first():
    seg = np.array([[0, 1, 2, 3]])
    sal = TableSaliency({(1, 2): 5.0, (0, 1): 1.0, (2, 3): 2.0})
    adj = build_adjacency(seg)
    tree = build_merge_tree(seg, adj, sal)
    oracle = build_merge_tree_bruteforce(seg, adj, sal)
    assert tree.n_nodes == 7
    assert tree.cliques[0] == (4, 1, 2)
    assert _trees_equal(tree, oracle)


def test_tie_break_smaller_pair():
    seg = np.array([[0, 1, 2]])
    tree = build_merge_tree(seg, build_adjacency(seg), lambda pairs, state: np.zeros(len(pairs)))
    assert tree.cliques[0] == (3, 0, 1)


@pytest.mark.parametrize("seed", range(10))
def test_heap_matches_rescan_oracle(seed):
    pb = smooth_random_map(np.random.default_rng(seed), 24, 24, sigma=1.0)
    seg = watershed(pb, 0.01)
    adj = build_adjacency(seg, pb)
    sal = NegatedMedianSaliency(pb)
    assert _trees_equal(build_merge_tree(seg, adj, sal), build_merge_tree_bruteforce(seg, adj, sal))


@pytest.mark.parametrize("seed", range(5))
def test_tree_invariants(seed):
    pb = smooth_random_map(np.random.default_rng(100 + seed), 30, 30, sigma=1.0)
    seg = pre_merge_small(watershed(pb, 0.01), pb, 5)
    tree = build_merge_tree(seg, build_adjacency(seg, pb), NegatedMedianSaliency(pb))
    r = seg.max() + 1
    assert tree.n_nodes == 2 * r - 1
    for i, j, k in tree.cliques:
        pj, pk = tree.pixels_of(j), tree.pixels_of(k)
        assert np.intersect1d(pj, pk).size == 0
        assert np.array_equal(np.union1d(pj, pk), tree.pixels_of(i))
        assert tree.size[i] == pj.size + pk.size
        assert j < i and k < i
    assert tree.pixels_of(tree.root).size == seg.size
    for leaf in range(r):
        assert np.array_equal(tree.pixels_of(leaf), np.flatnonzero(seg.ravel() == leaf))


def test_bordered_region_merges_last():
    seg = np.zeros((8, 8), dtype=int)
    seg[:4, 4:] = 1
    seg[4:, :4] = 2
    seg[4:, 4:] = 3
    pb = np.zeros((8, 8))
    pb[3, :4] = 1.0
    pb[:4, 3] = 1.0
    tree = build_merge_tree(seg, build_adjacency(seg, pb), NegatedMedianSaliency(pb))
    root = tree.root
    assert 0 in (tree.left[root], tree.right[root])


def test_disconnected_graph_rejected():
    seg = np.array([[0, 0, 1, 1]])
    adj = build_adjacency(seg)
    adj.boundary.clear()
    adj.edges.clear()
    with pytest.raises(InputError):
        build_merge_tree(seg, adj, NegatedMedianSaliency(np.zeros((1, 4))))


def test_dump_format():
    seg = np.array([[0, 0, 1, 1]])
    tree = build_merge_tree(seg, build_adjacency(seg), NegatedMedianSaliency(np.zeros((1, 4))))
    assert tree.dump() == "0 1 2 -1 -1 2\n1 1 2 -1 -1 2\n2 0 -1 0 1 4\n"


def test_hierarchy_map_range():
    pb = smooth_random_map(np.random.default_rng(7), 20, 20)
    seg = watershed(pb, 0.01)
    tree = build_merge_tree(seg, build_adjacency(seg, pb), NegatedMedianSaliency(pb))
    hm = hierarchy_map(tree)
    assert hm.shape == pb.shape
    assert hm.min() >= 0 and hm.max() == pytest.approx(1.0)
