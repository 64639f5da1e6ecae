import math

import numpy as np
import pytest

from natforest.forest import (
    Dataset,
    ForestConfig,
    TrainedForest,
    balanced_class_weights,
    best_split,
    fit,
    impurity,
)

from oracles import brute_best_split, ref_tree, ref_tree_predict


def random_small_dataset(rng):
    n = int(rng.integers(2, 13))
    d = int(rng.integers(1, 4))
    X = rng.integers(0, 5, size=(n, d)).astype(float)
    y = rng.integers(0, 2, size=n)
    if rng.random() < 0.5:
        w = rng.integers(1, 4, size=n).astype(float)
    else:
        w = np.ones(n)
    return X, y, w


# -- impurity ---------------------------------------------------------------

@pytest.mark.parametrize("counts,criterion,expected", [
    ([5, 5], "gini", 0.5),
    ([10, 0], "gini", 0.0),
    ([10, 0], "entropy", 0.0),
    ([5, 5], "entropy", 1.0),
    ([2, 6], "entropy", -(0.25 * math.log2(0.25) + 0.75 * math.log2(0.75))),
])
def test_impurity_closed_forms(counts, criterion, expected):
    assert impurity(counts, criterion) == pytest.approx(expected, abs=1e-12)


def test_entropy_2_6_frozen():
    assert impurity([2, 6], "entropy") == pytest.approx(0.811278, abs=1e-6)


def test_impurity_empty_node_rejected():
    with pytest.raises(ValueError):
        impurity([0, 0], "gini")


def test_impurity_maximised_at_half():
    grid = np.linspace(0.01, 0.99, 99)
    for crit, cap in (("gini", 0.5), ("entropy", 1.0)):
        vals = [impurity([1 - p, p], crit) for p in grid]
        assert max(vals) <= cap + 1e-12
        assert grid[int(np.argmax(vals))] == pytest.approx(0.5)


# -- class weights ----------------------------------------------------------

def test_balanced_weights_even():
    assert balanced_class_weights([0] * 20 + [1] * 20) == {0: 1.0, 1: 1.0}


def test_balanced_weights_skewed():
    cw = balanced_class_weights([0] * 10 + [1] * 30)
    assert cw[0] == pytest.approx(2.0)
    assert cw[1] == pytest.approx(40 / 60)


def test_balanced_weights_missing_class():
    assert balanced_class_weights([1, 1, 1]) == {1: 0.5}


# -- best split -------------------------------------------------------------

def test_separable_split():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([0, 0, 1, 1])
    s = best_split(X, y)
    assert s.feature == 0 and s.threshold == 1.5
    assert s.gain == pytest.approx(0.5)
    assert s.left_rows.tolist() == [0, 1]


def test_pure_node_has_no_split():
    X = np.arange(6, dtype=float).reshape(3, 2)
    assert best_split(X, np.ones(3, dtype=int)) is None


@pytest.mark.parametrize("criterion", ["gini", "entropy"])
def test_best_split_matches_brute_force(criterion):
    rng = np.random.default_rng(2024)
    for _ in range(600):
        X, y, w = random_small_dataset(rng)
        got = best_split(X, y, criterion=criterion, sample_weight=w)
        ref = brute_best_split(X.tolist(), y.tolist(), w.tolist(), criterion)
        if ref is None:
            assert got is None
            continue
        assert got is not None
        assert got.feature == ref[0]
        assert got.threshold == ref[1]
        assert got.gain == pytest.approx(ref[2], abs=1e-9)
        assert frozenset(got.left_rows.tolist()) == ref[3]


# -- fit / predict ----------------------------------------------------------

@pytest.mark.parametrize("criterion", ["gini", "entropy"])
def test_single_deterministic_tree_matches_reference(criterion):
    rng = np.random.default_rng(7)
    for _ in range(40):
        n, d = int(rng.integers(5, 30)), int(rng.integers(1, 4))
        X = rng.integers(0, 6, size=(n, d)).astype(float)
        y = rng.integers(0, 2, size=n)
        cfg = ForestConfig(n_estimators=1, bootstrap=False, max_features=d,
                           criterion=criterion)
        forest = fit(Dataset(X, y), cfg)
        tree = ref_tree(X.tolist(), y.tolist(), [1.0] * n, criterion)
        probe = rng.integers(-1, 7, size=(50, d)).astype(float)
        want = [ref_tree_predict(tree, row) for row in probe.tolist()]
        np.testing.assert_allclose(forest.predict_proba(probe)[:, 1], want)


def _toy(seed=0, n=200):
    rng = np.random.default_rng(seed)
    X = rng.poisson(3, size=(n, 5)).astype(float)
    y = (X[:, 0] + rng.normal(0, 1, n) > 3).astype(int)
    return X, y


def test_fit_is_deterministic():
    X, y = _toy()
    cfg = ForestConfig(class_weight="balanced_subsample", criterion="entropy")
    a, b = fit(Dataset(X, y), cfg), fit(Dataset(X, y), cfg)
    assert a.to_text() == b.to_text()
    c = fit(Dataset(X, y), ForestConfig(class_weight="balanced_subsample",
                                        criterion="entropy", seed=124))
    assert c.to_text() != a.to_text()


def test_forest_has_n_estimators_trees_and_valid_proba():
    X, y = _toy()
    forest = fit(Dataset(X, y), ForestConfig(n_estimators=7))
    assert forest.n_trees == 7
    p = forest.predict_proba(X)
    np.testing.assert_allclose(p.sum(axis=1), 1.0)
    assert forest.importances.sum() == pytest.approx(1.0, abs=1e-9)
    assert (forest.importances >= 0).all()


def test_permuted_labels_give_chance_accuracy():
    rng = np.random.default_rng(11)
    X = rng.poisson(4, size=(600, 6)).astype(float)
    y = np.tile([0, 1], 300)
    rng.shuffle(y)
    forest = fit(Dataset(X[:400], y[:400]), ForestConfig(n_estimators=25))
    acc = (forest.predict(X[400:]) == y[400:]).mean()
    assert abs(acc - 0.5) <= 0.15


def test_duplicated_rows_with_half_weights_keep_structure():
    X, y = _toy(3, 80)
    cfg = ForestConfig(n_estimators=1, bootstrap=False, max_features=5)
    a = fit(Dataset(X, y), cfg)
    b = fit(Dataset(np.vstack([X, X]), np.concatenate([y, y]),
                    np.full(160, 0.5)), cfg)
    np.testing.assert_array_equal(a.feature, b.feature)
    np.testing.assert_array_equal(a.threshold, b.threshold)
    np.testing.assert_allclose(a.value, b.value)


def test_single_class_training_gives_leaves():
    X = np.arange(20, dtype=float).reshape(10, 2)
    forest = fit(Dataset(X, np.ones(10, dtype=int)), ForestConfig())
    assert forest.single_class
    assert (forest.feature == -1).all()
    np.testing.assert_array_equal(forest.predict_proba(X), [[0.0, 1.0]] * 10)


def test_dimension_mismatch():
    X, y = _toy()
    forest = fit(Dataset(X, y), ForestConfig(n_estimators=2))
    with pytest.raises(ValueError):
        forest.predict_proba(np.zeros((3, 4)))


def test_model_text_round_trip():
    X, y = _toy(5)
    forest = fit(Dataset(X, y, feature_names=list("abcde")),
                 ForestConfig(criterion="entropy", class_weight="balanced"))
    again = TrainedForest.from_text(forest.to_text())
    assert again.feature_names == list("abcde")
    assert again.config == forest.config
    np.testing.assert_array_equal(again.predict_proba(X), forest.predict_proba(X))
    assert again.to_text() == forest.to_text()


def _stump_forest(leaf_p1):
    """Forest of single-leaf trees with the given class-1 fractions."""
    k = len(leaf_p1)
    value = np.column_stack([1 - np.asarray(leaf_p1), leaf_p1])
    return TrainedForest(
        config=ForestConfig(n_estimators=k), feature_names=["x"],
        feature=np.full(k, -1), threshold=np.zeros(k), left=np.full(k, -1),
        right=np.full(k, -1), value=value, n_node_samples=np.ones(k, dtype=np.int64),
        weighted_n_node_samples=np.ones(k), impurity=np.zeros(k),
        roots=np.arange(k))


def test_soft_vote_nine_of_ten():
    forest = _stump_forest([1.0] * 9 + [0.0])
    assert forest.predict_proba([[0.0]])[0, 1] == pytest.approx(0.9)
    assert forest.predict([[0.0]])[0] == 1


def test_all_pure_class1_trees():
    np.testing.assert_array_equal(_stump_forest([1.0] * 10).predict_proba([[3.0]]),
                                  [[0.0, 1.0]])


@pytest.mark.parametrize("p1,label", [(0.5, 0), (0.391728111238317, 0), (0.9, 1),
                                      (0.5 + 1e-12, 1)])
def test_threshold_is_strict(p1, label):
    assert _stump_forest([p1]).predict([[0.0]])[0] == label
