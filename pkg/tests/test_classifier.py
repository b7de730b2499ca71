import numpy as np
import pytest

from conftest import random_tree
from hmtseg.classifier import (
    TIE_TOL,
    EnsembleClassifier,
    SampleSet,
    TrainingSample,
    dedup_key,
    generate_training_labels,
    predict_merge_prob,
    size_categories,
    size_category,
    train_ensemble,
)
from hmtseg.core import InputError
from hmtseg.features import layout
from hmtseg.forest import ForestParams, RandomForest, leaf_tree, oob_accuracy, train_forest
from hmtseg.mergetree import MergeTree
from hmtseg.metrics import rand_index, variation_of_information

SMALL = ForestParams(n_trees=15)


def tree_over(leaf_map, rng):
    n = int(leaf_map.max()) + 1
    t = random_tree(rng, n)
    return MergeTree(leaf_map, t.parent, t.left, t.right, t.size, t.perimeter)


def label_oracle(tree, gt, i, metric="vi"):
    """Score the merged and split versions of clique i with the metrics module."""
    j, k = tree.left[i], tree.right[i]
    pix = tree.pixels_of(i)
    g = gt.ravel()[pix]
    merged = np.zeros(pix.size, dtype=int)
    split = np.isin(pix, tree.pixels_of(k)).astype(int)
    if metric == "vi":
        m, s = variation_of_information(merged, g), variation_of_information(split, g)
        return 1 if m <= s + TIE_TOL else -1
    if pix.size < 2:
        return 1
    return 1 if rand_index(merged, g) >= rand_index(split, g) else -1


def test_label_examples():
    tree = MergeTree(np.array([[0, 0, 1, 1]]), np.array([2, 2, -1]), np.array([-1, -1, 0]),
                     np.array([-1, -1, 1]), np.array([2, 2, 4]), np.zeros(3, dtype=int))
    assert generate_training_labels(tree, np.zeros((1, 4), dtype=int)) == {2: 1}
    assert generate_training_labels(tree, np.array([[5, 5, 7, 7]])) == {2: -1}


def test_label_orthogonal_split_fixture():
    leaf = np.zeros((8, 8), dtype=int)
    leaf[:, 4:] = 1
    gt = np.zeros((8, 8), dtype=int)
    gt[4:, :] = 1
    tree = MergeTree(leaf, np.array([2, 2, -1]), np.array([-1, -1, 0]), np.array([-1, -1, 1]),
                     np.array([32, 32, 64]), np.zeros(3, dtype=int))
    labels = generate_training_labels(tree, gt)
    assert labels[2] == label_oracle(tree, gt, 2) == 1


@pytest.mark.parametrize("seed", range(15))
@pytest.mark.parametrize("metric", ["vi", "ri"])
def test_labels_match_metric_oracle(seed, metric):
    rng = np.random.default_rng(seed)
    leaf = rng.integers(0, 6, (6, 6))
    leaf[0, :6] = np.arange(6)
    tree = tree_over(leaf, rng)
    gt = rng.integers(0, 3, (6, 6))
    labels = generate_training_labels(tree, gt, metric)
    for i, _, _ in tree.cliques:
        assert labels[i] == label_oracle(tree, gt, i, metric)


def test_label_errors():
    tree = tree_over(np.array([[0, 1]]), np.random.default_rng(0))
    with pytest.raises(InputError):
        generate_training_labels(tree, np.zeros((2, 2), dtype=int))
    with pytest.raises(InputError):
        generate_training_labels(tree, np.zeros((1, 2), dtype=int), "bogus")


def test_size_category_examples():
    assert size_category(3, 4, 5) == 1
    assert size_category(3, 10, 5) == 2
    assert size_category(5, 10, 5) == 3
    assert size_category(10, 3, 5) == 2


def test_size_categories_vectorized_matches_scalar():
    rng = np.random.default_rng(0)
    sizes = rng.integers(1, 50, (500, 2))
    vec = size_categories(sizes, 20.5)
    assert vec.tolist() == [size_category(a, b, 20.5) for a, b in sizes]


def test_dedup_key_order_independent():
    k1 = dedup_key("img", [3, 1, 2], [7, 5])
    assert k1 == dedup_key("img", [5, 7], [2, 3, 1])
    assert k1 != dedup_key("other", [3, 1, 2], [7, 5])
    assert k1 != dedup_key("img", [3, 1], [7, 5, 2])


def test_sample_set_dedup():
    s = SampleSet()
    a = TrainingSample(np.zeros(3), 1, (2, 3), "a")
    b = TrainingSample(np.ones(3), -1, (4, 5), "b")
    assert s.extend([a, b, a]) == 2
    assert s.extend([b]) == 0
    assert len(s) == 2 and s.y.tolist() == [1, -1] and s.sizes.tolist() == [[2, 3], [4, 5]]


def _toy(rng, n=200):
    X = rng.random((n, 2))
    y = np.where(X[:, 0] + X[:, 1] > 1.0, 1, -1)
    return X, y


def test_forest_separable_training_accuracy():
    X, y = _toy(np.random.default_rng(0))
    forest = train_forest(X, y, SMALL, seed=1)
    assert (np.where(forest.predict_proba(X) > 0.5, 1, -1) == y).mean() == 1.0


def test_forest_duplicates_keep_training_predictions():
    X, y = _toy(np.random.default_rng(1))
    f1 = train_forest(X, y, SMALL, seed=2)
    f2 = train_forest(np.vstack([X, X]), np.concatenate([y, y]), SMALL, seed=2)
    assert np.array_equal(f1.predict_proba(X) > 0.5, f2.predict_proba(X) > 0.5)


def test_forest_noise_out_of_bag():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        X = rng.random((1000, 6))
        y = rng.permutation(np.repeat([-1, 1], 500))
        forest = train_forest(X, y, ForestParams(n_trees=25), seed=seed)
        assert 0.4 <= oob_accuracy(forest, X, y) <= 0.6


def test_forest_manual_tally():
    X, y = _toy(np.random.default_rng(2))
    forest = train_forest(X, y, SMALL, seed=3)
    x = np.array([0.4, 0.55])
    tally = sum(t.predict_one(x) for t in forest.trees) / len(forest.trees)
    assert forest.predict_proba(x[None])[0] == tally


def test_forest_degenerate_and_deterministic():
    X = np.random.default_rng(0).random((10, 3))
    f = train_forest(X, np.ones(10, dtype=int), SMALL)
    assert f.degenerate and f.predict_proba(X).tolist() == [1.0] * 10
    Xt, yt = _toy(np.random.default_rng(4))
    a, b = train_forest(Xt, yt, SMALL, seed=9), train_forest(Xt, yt, SMALL, seed=9)
    assert a.to_dict() == b.to_dict()


def test_forest_round_trip():
    X, y = _toy(np.random.default_rng(5))
    forest = train_forest(X, y, SMALL, seed=0)
    again = RandomForest.from_dict(forest.to_dict())
    Q = np.random.default_rng(6).random((100, 2))
    assert np.array_equal(forest.predict_proba(Q), again.predict_proba(Q))


def test_forest_rejects_bad_input():
    with pytest.raises(InputError):
        train_forest(np.zeros((3, 2)), np.array([0, 1, 1]))
    with pytest.raises(InputError):
        train_forest(np.zeros((3, 2)), np.array([1, -1]))


def _samples(rng, n, sizes, d=41):
    X = rng.random((n, d))
    y = np.where(X[:, 0] > 0.5, 1, -1)
    s = SampleSet()
    s.extend(TrainingSample(X[i], int(y[i]), tuple(int(v) for v in sizes[i]), str(i)) for i in range(n))
    return s


def test_ensemble_median_and_routing():
    rng = np.random.default_rng(0)
    sizes = rng.integers(1, 100, (300, 2))
    s = _samples(rng, 300, sizes)
    ens = train_ensemble(s, layout(), seed=1, params=SMALL)
    assert ens.median_size == float(np.median(sizes.ravel()))
    recount = np.bincount([size_category(a, b, ens.median_size) for a, b in sizes], minlength=4)[1:]
    assert recount.tolist() == np.bincount(size_categories(sizes, ens.median_size), minlength=4)[1:].tolist()
    assert ens.flags == []


def test_ensemble_median_convention():
    s = _samples(np.random.default_rng(0), 2, np.array([[1, 2], [3, 4]]))
    s.y[:] = [1, -1]
    ens = train_ensemble(s, layout(), params=SMALL)
    assert ens.median_size == 2.5


def test_ensemble_fallback_for_empty_categories():
    sizes = np.full((40, 2), 10)
    ens = train_ensemble(_samples(np.random.default_rng(1), 40, sizes), layout(), params=SMALL)
    assert len(ens.flags) == 2 and all("fallback" in f for f in ens.flags)
    assert ens.forests[1] is ens.forests[2]


def test_ensemble_predict_and_serialize():
    rng = np.random.default_rng(2)
    sizes = rng.integers(1, 60, (200, 2))
    ens = train_ensemble(_samples(rng, 200, sizes), layout(), seed=3, params=SMALL)
    X = rng.random((50, 41))
    sz = rng.integers(1, 60, (50, 2))
    p = ens.predict(X, sz)
    assert np.all((0 <= p) & (p <= 1))
    assert np.array_equal(p, ens.predict(X, sz[:, ::-1]))
    again = EnsembleClassifier.loads(ens.dumps())
    assert np.array_equal(p, again.predict(X, sz))
    assert predict_merge_prob(ens, X[0], *sz[0]) == p[0]
    with pytest.raises(InputError):
        ens.predict(X[:, :40], sz)


def test_degenerate_ensemble_predicts_one():
    forest = RandomForest([leaf_tree(1.0)], 41, degenerate=True)
    ens = EnsembleClassifier({1: forest, 2: forest, 3: forest}, 5.0, layout())
    assert predict_merge_prob(ens, np.zeros(41), 3, 4) == 1.0


def test_ensemble_retrain_bit_identical():
    rng = np.random.default_rng(3)
    s = _samples(rng, 120, rng.integers(1, 40, (120, 2)))
    assert train_ensemble(s, layout(), seed=5, params=SMALL).dumps() == train_ensemble(s, layout(), seed=5, params=SMALL).dumps()
