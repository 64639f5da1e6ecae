import logging

import numpy as np
import pytest

from natforest.classify_eval import (
    ChampionSpec,
    ReportRow,
    build_report,
    classify_population,
    extract_class1,
    follower_diagnostic,
    train_final,
)
from natforest.features import UserFeatureRow
from natforest.forest import TrainedForest
from natforest.search import FeatureCombo, N_SUBSETS, labeled_matrix, run_search, split_train_test


def population(n=600, seed=0):
    rng = np.random.default_rng(seed)
    rows, labels = [], {}
    for i in range(n):
        national = rng.random() < 0.6
        r = UserFeatureRow(author_id=1000 + i, username=f"u{i}",
                           followers=int(rng.pareto(1.5) * 100))
        r.rt_de_In = int(rng.poisson(6 if national else 1))
        r.rq_a_In = int(rng.poisson(3 if national else 1))
        r.rp_de_In = int(rng.poisson(2))
        r.rq_de_In = int(rng.poisson(2 if national else 1))
        r.likes = int(rng.poisson(20))
        rows.append(r.with_activity())
        labels[r.author_id] = int(national)
    return rows, labels


CHAMPION_COLS = ("rt_de_In", "rp_de_In", "rq_a_In", "rq_de_In")


def champion(seed=7):
    return ChampionSpec(CHAMPION_COLS, "gini", "balanced_subsample", 10, seed)


def test_train_final_on_four_columns():
    rows, labels = population()
    sample = dict(list(labels.items())[:385])
    model = train_final(rows, sample, champion())
    assert model.n_features == 4 and model.feature_names == list(CHAMPION_COLS)


def test_missing_champion_column_is_an_error():
    with pytest.raises(ValueError, match="unknown"):
        ChampionSpec(("rt_de_In", "nope"), "gini", "none", 10, 1)


def test_train_final_is_deterministic():
    rows, labels = population()
    a = train_final(rows, labels, champion()).to_text()
    b = train_final(rows, labels, champion()).to_text()
    assert a == b


def test_train_split_reproduces_searched_cell():
    rows, labels = population(385, seed=2)
    X, y, _ = labeled_matrix(rows, labels)
    sub = FeatureCombo(0, 3, 3, 5, False, False, False).index
    num = 4 * N_SUBSETS + sub  # gini, balanced_subsample
    (row,) = run_search(X, y, base_seed=123, cells=[num]).rows()
    spec = ChampionSpec.from_row(row, base_seed=123)
    assert spec.columns == CHAMPION_COLS and spec.num == num
    model = train_final(rows, labels, spec, train_split=True, split_seed=123)
    _, te = split_train_test(len(labels), 123)
    Xc, yc, _ = labeled_matrix(rows, labels, spec.columns)
    pred = model.predict(Xc[te])
    tn = int(((pred == 0) & (yc[te] == 0)).sum())
    fp = int(((pred == 1) & (yc[te] == 0)).sum())
    fn = int(((pred == 0) & (yc[te] == 1)).sum())
    tp = int(((pred == 1) & (yc[te] == 1)).sum())
    assert (tn, fp, fn, tp) == (row.TN, row.FP, row.FN, row.TP)


def test_classify_population_partition_and_probabilities():
    rows, labels = population()
    model = train_final(rows, dict(list(labels.items())[:385]), champion())
    out = classify_population(model, rows[::-1])
    assert [r.author_id for r in out] == sorted(r.author_id for r in rows)
    assert sum(r.pred == 1 for r in out) + sum(r.pred == 0 for r in out) == len(rows)
    for r in out:
        assert r.prob0 + r.prob1 == pytest.approx(1.0, abs=1e-12)
        assert r.pred == int(r.prob1 > 0.5)
    assert all(r.pred is None for r in rows)
    assert len(extract_class1(out)) == sum(r.pred for r in out)


def test_classification_is_a_pure_map():
    rows, labels = population()
    model = train_final(rows, dict(list(labels.items())[:385]), champion())
    full = {r.author_id: r.prob1 for r in classify_population(model, rows)}
    part = classify_population(model, rows[10:20])
    assert all(full[r.author_id] == r.prob1 for r in part)


def test_column_mismatch_is_an_error():
    rows, labels = population(50)
    model = train_final(rows, labels, champion())
    bad = TrainedForest.from_text(model.to_text().replace('"rq_de_In"', '"zzz"'))
    with pytest.raises(ValueError, match="absent"):
        classify_population(bad, rows)


def test_extract_class1(caplog):
    rows = [UserFeatureRow(author_id=i, pred=p) for i, p in enumerate([1, 0, 1, 0])]
    assert [r.author_id for r in extract_class1(rows)] == [0, 2]
    with caplog.at_level(logging.WARNING):
        assert extract_class1([UserFeatureRow(author_id=1, pred=0)]) == []
    assert "no user" in caplog.text
    with pytest.raises(ValueError):
        extract_class1([UserFeatureRow(author_id=1)])


def test_synthetic_subset_purity_beats_baseline():
    rows, labels = population(3000, seed=4)
    sample = dict(list(labels.items())[:385])
    out = classify_population(train_final(rows, sample, champion()), rows)
    chosen = extract_class1(out)
    purity = np.mean([labels[r.author_id] for r in chosen])
    baseline = np.mean(list(labels.values()))
    assert purity > baseline


PUBLISHED_BEFORE = [("PA", 14789, 306), ("CR", 9843, 296), ("NI", 5223, 292)]
PUBLISHED_AFTER = [("PA", 6392, 362), ("CR", 3886, 351), ("NI", 1343, 345)]


def rows_of(spec):
    return [ReportRow(name, pop, 385, k) for name, pop, k in spec]


def test_report_reference_counts():
    rep = build_report(rows_of(PUBLISHED_BEFORE), rows_of(PUBLISHED_AFTER))
    assert [round(r.percent, 2) for r in rep.before] == [79.48, 76.88, 75.84]
    assert [round(r.percent, 2) for r in rep.after] == [94.03, 91.17, 89.61]
    assert rep.mean_before == pytest.approx(77.40, abs=0.01)
    assert rep.mean_after == pytest.approx(91.60, abs=0.01)
    assert rep.delta == pytest.approx(14.20, abs=0.01)
    assert [r.class0 for r in rep.before] == [79, 89, 93]
    assert "delta\t+14.20" in rep.to_text()


def test_report_edge_cases():
    same = build_report(rows_of(PUBLISHED_BEFORE), rows_of(PUBLISHED_BEFORE))
    assert same.delta == 0
    single = build_report(rows_of(PUBLISHED_BEFORE[:1]), rows_of(PUBLISHED_AFTER[:1]))
    assert single.mean_before == single.before[0].percent
    with pytest.raises(ValueError):
        build_report(rows_of(PUBLISHED_BEFORE), rows_of(PUBLISHED_AFTER[:2]))


def test_follower_diagnostic():
    rows = [UserFeatureRow(author_id=i, followers=i, pred=int(i < 90)) for i in range(100)]
    d = follower_diagnostic(rows)
    assert d["n"] == 10 and d["pred0"] == 10 and d["share1_top"] == 0.0
