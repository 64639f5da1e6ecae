import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from natforest.features import FEATURE_COLUMNS
from natforest.search import (
    DIRECTION_SUBSETS,
    N_CELLS,
    N_SUBSETS,
    FeatureCombo,
    SearchRow,
    cell,
    column_masks,
    enumerate_combos,
    labeled_matrix,
    precision,
    read_results,
    run_search,
    select_model,
    split_train_test,
    stratified_folds,
    write_results,
)


def toy_sample(n=385, seed=0, separable=True):
    rng = np.random.default_rng(seed)
    X = rng.negative_binomial(2, 0.3, size=(n, len(FEATURE_COLUMNS))).astype(float)
    j = FEATURE_COLUMNS.index("rt_de_In")
    if separable:
        y = (X[:, j] > np.median(X[:, j])).astype(np.int64)
    else:
        y = rng.integers(0, 2, n)
    return X, y


def test_each_action_has_eight_subsets():
    assert len(DIRECTION_SUBSETS) == 8 == len(set(DIRECTION_SUBSETS))
    assert 8 ** 4 == 4096


def test_cell_count_and_degenerates():
    cells = enumerate_combos()
    assert len(cells) == N_CELLS == 196_608
    assert [c.num for c in cells] == list(range(N_CELLS))
    assert sum(c.combo.degenerate for c in cells) == 6


def test_subset_index_round_trip():
    seen = set()
    for i in range(N_SUBSETS):
        combo = FeatureCombo.from_index(i)
        assert combo.index == i
        seen.add(tuple(combo.columns))
    assert len(seen) == N_SUBSETS


def test_columns_and_removed_partition():
    masks = column_masks()
    for i in (0, 1, 8, 4095 * 8, N_SUBSETS - 1, 12345):
        c = FeatureCombo.from_index(i)
        assert sorted(c.columns + c.removed) == sorted(FEATURE_COLUMNS)
        assert [FEATURE_COLUMNS[j] for j in np.flatnonzero(masks[i])] == c.columns
    assert FeatureCombo.from_index(N_SUBSETS - 1).columns == FEATURE_COLUMNS


def test_cell_layout():
    assert (cell(0).criterion, cell(0).class_weight) == ("entropy", "none")
    assert (cell(N_CELLS - 1).criterion, cell(N_CELLS - 1).class_weight) == ("gini", "balanced")
    c = FeatureCombo(0, 3, 3, 5, False, False, False)
    assert c.columns == ["rt_de_In", "rp_de_In", "rq_a_In", "rq_de_In"]


@pytest.mark.parametrize("n,sizes", [(385, (308, 77)), (10, (8, 2))])
def test_split_sizes(n, sizes):
    tr, te = split_train_test(n, seed=1)
    assert (tr.size, te.size) == sizes
    assert sorted(np.concatenate([tr, te]).tolist()) == list(range(n))


def test_split_determinism():
    a = split_train_test(100, 7)
    b = split_train_test(100, 7)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not np.array_equal(a[0], split_train_test(100, 8)[0])


def test_folds_are_stratified():
    y = np.array([1] * 37 + [0] * 71)
    f = stratified_folds(y, 5, 3)
    for cls in (0, 1):
        counts = np.bincount(f[y == cls], minlength=5)
        assert counts.max() - counts.min() <= 1


def test_precision_values():
    assert int(precision(50, 20) * 10_000) / 100 == 71.42
    assert int(precision(30, 1) * 10_000) / 100 == 96.77
    assert precision(0, 0) is None


SUBSET = list(range(0, N_CELLS, 997)) + [0, 1, 2, 3, 4, 5, 6, 7]


def test_subset_rows_sum_to_test_size():
    X, y = toy_sample()
    res = run_search(X, y, cells=SUBSET)
    rows = res.rows()
    assert res.n_test == 77
    for r in rows:
        if r.degenerate:
            assert r.TN is None and r.num % N_SUBSETS == 0
        else:
            assert r.TN + r.FP + r.FN + r.TP == 77
            assert 0.0 <= r.cv_score <= 1.0


def test_separable_sample_has_perfect_cell():
    X, y = toy_sample()
    # subsets that include rt_de_In and nothing else from other groups
    nums = [FeatureCombo(0, s, 0, 0, False, False, False).index for s in (2, 3, 5, 7)]
    rows = run_search(X, y, cells=nums).rows()
    assert any(r.FP == 0 and r.FN == 0 for r in rows)


def test_worker_count_does_not_change_results(tmp_path):
    X, y = toy_sample(n=120, seed=3, separable=False)
    nums = list(range(0, N_CELLS, 4001))
    a = run_search(X, y, cells=nums, workers=1, chunk=7)
    b = run_search(X, y, cells=nums, workers=2, chunk=5)
    write_results(a.rows(), tmp_path / "a.csv")
    write_results(b.rows(), tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_cv_flag_leaves_confusion_unchanged():
    X, y = toy_sample(n=200, seed=5, separable=False)
    nums = list(range(3, N_CELLS, 2999))
    a = run_search(X, y, cells=nums, cv=True)
    b = run_search(X, y, cells=nums, cv=False)
    assert np.array_equal(a.matrix[:, :4], b.matrix[:, :4], equal_nan=True)
    assert np.all(np.isnan(b.matrix[:, 4]))


def test_progress_is_monotone():
    X, y = toy_sample(n=60)
    seen = []
    run_search(X, y, cells=range(40), chunk=9, progress=lambda d, t: seen.append((d, t)))
    assert [d for d, _ in seen] == sorted(d for d, _ in seen) and seen[-1] == (40, 40)


def test_single_class_refused():
    X, _ = toy_sample(n=50)
    with pytest.raises(ValueError, match="single class"):
        run_search(X, np.ones(50, dtype=int), cells=[1])


def test_results_round_trip(tmp_path):
    X, y = toy_sample(n=80)
    rows = run_search(X, y, cells=range(0, 24)).rows()
    p = tmp_path / "r.csv"
    write_results(rows, p)
    assert read_results(p) == rows
    q = tmp_path / "r2.csv"
    write_results(read_results(p), q)
    assert p.read_bytes() == q.read_bytes()


def row(num, fp, tp, ncols=3, degenerate=False):
    removed = tuple(FEATURE_COLUMNS[ncols:])
    return SearchRow(num, 10, fp, 77 - 10 - fp - tp, tp, removed, "gini", "balanced",
                     10, 0.9, degenerate)


def test_select_orders_fp_then_tp():
    rows = [row(5, 0, 28), row(1, 0, 29), row(3, 1, 35), row(2, 0, 29, ncols=2), row(4, 2, 40)]
    got = select_model(rows, fp_max=1)
    assert [r.num for r in got] == [2, 1, 5, 3]
    assert [r.num for r in select_model(rows, top_k=2)] == [2, 1]


def test_select_falls_back_to_fp_one():
    rows = [row(1, 1, 17), row(2, 1, 14), row(3, 3, 30)]
    assert [r.num for r in select_model(rows)] == [1, 2]


def test_select_empty_warns(caplog):
    with caplog.at_level(logging.WARNING):
        assert select_model([]) == []
    assert "fp_max" in caplog.text


@settings(max_examples=60)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 40), st.integers(1, 22)),
                min_size=1, max_size=30, unique_by=lambda t: t), st.randoms())
def test_select_permutation_invariant(specs, rnd):
    rows = [row(i, fp, tp, n) for i, (fp, tp, n) in enumerate(specs)]
    shuffled = list(rows)
    rnd.shuffle(shuffled)
    assert select_model(rows) == select_model(shuffled)


def test_labeled_matrix_join():
    from natforest.features import UserFeatureRow
    feats = [UserFeatureRow(author_id=i, followers=i * 10) for i in (5, 3, 9)]
    X, y, ids = labeled_matrix(feats, {9: 1, 3: 0})
    assert ids == [3, 9] and y.tolist() == [0, 1] and X[:, 0].tolist() == [30, 90]
    with pytest.raises(ValueError):
        labeled_matrix(feats, {4: 1})


@pytest.mark.parametrize("p,text", [(50 / 70, "71.42%"), (30 / 31, "96.77%"), (0.29, "29.00%"),
                                    (1.0, "100.00%"), (None, "n/a")])
def test_format_precision_truncates(p, text):
    from natforest.search import format_precision
    assert format_precision(p) == text
