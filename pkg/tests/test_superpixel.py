import numpy as np
import pytest
from scipy import ndimage

from conftest import smooth_random_map
from hmtseg.core import InputError, canonicalize, is_partition_connected
from hmtseg.features import boundary_pixels
from hmtseg.superpixel import build_adjacency, pre_merge_small, watershed


def flood_oracle(pb, water_level):
    """Quadratic-time priority flood: expand the lowest (value, index) labelled pixel each step."""
    level = np.maximum(pb, water_level)
    h, w = level.shape
    flat = level.ravel()
    # regional minima: equal-value plateaus with no strictly lower 4-neighbour
    labels = -np.ones(h * w, dtype=int)
    n_seeds = 0
    for v in np.unique(flat):
        comp, n = ndimage.label(level == v)
        for c in range(1, n + 1):
            mask = comp == c
            grown = ndimage.binary_dilation(mask) & ~mask
            if not (level[grown] < v).any():
                labels[mask.ravel()] = n_seeds
                n_seeds += 1
    expanded = np.zeros(h * w, dtype=bool)
    while True:
        cand = np.flatnonzero((labels >= 0) & ~expanded)
        if cand.size == 0:
            break
        i = min(cand, key=lambda k: (flat[k], k))
        expanded[i] = True
        r, c = divmod(i, w)
        for rr, cc in ((r - 1, c), (r, c - 1), (r, c + 1), (r + 1, c)):
            if 0 <= rr < h and 0 <= cc < w and labels[rr * w + cc] < 0:
                labels[rr * w + cc] = labels[i]
    return canonicalize(labels.reshape(h, w))


def test_watershed_constant_map():
    assert watershed(np.zeros((6, 7)), 0.01).max() == 0


def test_watershed_ridge_row():
    out = watershed(np.array([[0.0, 0.0, 1.0, 0.0, 0.0]]), 0.01)
    assert out.max() + 1 == 2
    # the ridge pixel is reached first from the left basin (lower pixel index)
    assert out.tolist() == [[0, 0, 0, 1, 1]]


def test_watershed_two_bumps():
    yy, xx = np.mgrid[0:16, 0:16]
    g1 = np.exp(-((yy - 8) ** 2 + (xx - 3) ** 2) / 18.0)
    g2 = np.exp(-((yy - 8) ** 2 + (xx - 12) ** 2) / 18.0)
    pb = 1.0 - np.maximum(g1, g2)
    out = watershed(pb, 0.01)
    assert out.max() + 1 == 2
    assert np.array_equal(out, flood_oracle(pb, 0.01))
    assert (out[:, :7] == out[0, 0]).all()
    assert (out[:, 9:] == out[0, 15]).all()


@pytest.mark.parametrize("seed", range(8))
def test_watershed_matches_oracle(seed):
    pb = smooth_random_map(np.random.default_rng(seed), 12, 14, sigma=1.0)
    out = watershed(pb, 0.01)
    assert np.array_equal(out, flood_oracle(pb, 0.01))
    assert is_partition_connected(out)


def test_watershed_count_monotone_in_level():
    pb = smooth_random_map(np.random.default_rng(3), 40, 40, sigma=1.2)
    counts = [watershed(pb, w).max() + 1 for w in (0.0, 0.05, 0.1, 0.2, 0.4, 0.8)]
    assert all(a >= b for a, b in zip(counts, counts[1:]))


def test_watershed_errors():
    with pytest.raises(InputError):
        watershed(np.zeros((0, 3)), 0.01)
    with pytest.raises(InputError):
        watershed(np.zeros((3, 3)), 1.0)


def test_pre_merge_noop_cases():
    pb = smooth_random_map(np.random.default_rng(1), 30, 30, sigma=1.0)
    seg = watershed(pb, 0.01)
    assert np.array_equal(pre_merge_small(seg, pb, 0), seg)
    big = np.zeros((30, 30), dtype=int)
    big[:, 15:] = 1
    assert np.array_equal(pre_merge_small(big, pb, 20), big)


def test_pre_merge_row_example():
    seg = np.array([[0, 0, 0, 0, 1, 2]])
    out = pre_merge_small(seg, np.full((1, 6), 0.5), 2)
    assert out.max() + 1 == 1


def test_pre_merge_prefers_low_barrier():
    seg = np.array([[0, 0, 0, 1, 2, 2, 2]])
    pb = np.array([[0.0, 0.0, 0.9, 0.9, 0.1, 0.1, 0.0]])
    # region 1 borders 0 across {2, 3} (median 0.9) and 2 across {3, 4} (median 0.5)
    out = pre_merge_small(seg, pb, 2)
    assert out.tolist() == [[0, 0, 0, 1, 1, 1, 1]]


@pytest.mark.parametrize("seed", range(5))
def test_pre_merge_leaves_no_small_region(seed):
    pb = smooth_random_map(np.random.default_rng(seed), 40, 40, sigma=0.8)
    out = pre_merge_small(watershed(pb, 0.01), pb, 20)
    sizes = np.bincount(out.ravel())
    assert sizes.size == 1 or sizes.min() >= 20
    assert is_partition_connected(out)


def test_adjacency_single_region():
    adj = build_adjacency(np.zeros((3, 3), dtype=int))
    assert adj.pairs == [] and adj.sizes.tolist() == [9]
    assert adj.perimeters.tolist() == [12]


def test_adjacency_two_columns():
    adj = build_adjacency(np.array([[0, 1], [0, 1]]))
    assert adj.pairs == [(0, 1)]
    assert adj.boundary[(0, 1)].tolist() == [0, 1, 2, 3]


def test_adjacency_three_columns():
    seg = np.array([[0, 1, 2]] * 3)
    adj = build_adjacency(seg)
    assert adj.pairs == [(0, 1), (1, 2)]
    assert adj.perimeters.tolist() == [8, 8, 8]
    assert adj.edges[(0, 1)] == 3


def test_adjacency_shape_mismatch():
    with pytest.raises(InputError):
        build_adjacency(np.zeros((2, 2), dtype=int), np.zeros((3, 3)))


@pytest.mark.parametrize("seed", range(4))
def test_adjacency_boundary_sets_match_definition(seed):
    pb = smooth_random_map(np.random.default_rng(seed), 25, 30, sigma=1.0)
    seg = watershed(pb, 0.01)
    adj = build_adjacency(seg, pb)
    flat = seg.ravel()
    r = seg.max() + 1
    for i in range(r):
        for j in range(i + 1, r):
            b = boundary_pixels(seg.shape, np.flatnonzero(flat == i), np.flatnonzero(flat == j))
            if b.size:
                assert np.array_equal(adj.boundary[(i, j)], b)
                assert b.size >= 2
            else:
                assert (i, j) not in adj.boundary
