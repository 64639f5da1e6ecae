"""Train the chosen configuration, label the population, and compare purity."""
from __future__ import annotations

import copy
import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .features import FEATURE_COLUMNS, UserFeatureRow, feature_matrix
from .forest import Dataset, ForestConfig, TrainedForest, fit
from .sampling import estimate_proportion
from .search import SearchRow, cell_seed, labeled_matrix, split_train_test

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChampionSpec:
    columns: tuple
    criterion: str
    class_weight: str
    n_estimators: int
    seed: int
    num: Optional[int] = None

    def __post_init__(self):
        if not self.columns:
            raise ValueError("a champion needs at least one column")
        unknown = [c for c in self.columns if c not in FEATURE_COLUMNS]
        if unknown:
            raise ValueError(f"unknown feature columns: {unknown}")

    @classmethod
    def from_row(cls, row: SearchRow, base_seed: int = 123) -> "ChampionSpec":
        """Same columns, settings and forest seed as the searched cell."""
        if row.degenerate:
            raise ValueError(f"row {row.num} has no columns")
        return cls(tuple(row.selected_cols), row.criterion, row.class_weight,
                   row.n_estimators, cell_seed(base_seed, row.num), row.num)

    def config(self) -> ForestConfig:
        return ForestConfig(n_estimators=self.n_estimators, criterion=self.criterion,
                            class_weight=self.class_weight, seed=self.seed)


def train_final(feature_rows: Sequence[UserFeatureRow], labels: dict, champion: ChampionSpec,
                train_split: bool = False, split_seed: int = 123) -> TrainedForest:
    """Fit the champion on every labelled user, or only on the search's
    training part when ``train_split`` is set."""
    X, y, _ = labeled_matrix(feature_rows, labels, champion.columns)
    if np.unique(y).size < 2:
        raise ValueError("labels hold a single class; nothing to learn")
    if train_split:
        tr, _ = split_train_test(y.size, split_seed)
        X, y = X[tr], y[tr]
    return fit(Dataset(X, y, feature_names=list(champion.columns)), champion.config())


def classify_population(model: TrainedForest, rows: Iterable[UserFeatureRow]) -> list[UserFeatureRow]:
    """Copies of ``rows`` (ordered by author_id) carrying prob0, prob1, pred."""
    rows = sorted(rows, key=lambda r: r.author_id)
    names = list(model.feature_names)
    unknown = [c for c in names if c not in FEATURE_COLUMNS]
    if unknown:
        raise ValueError(f"model uses columns absent from the features file: {unknown}")
    if len(names) != model.n_features:
        raise ValueError("model column names do not match its input width")
    X = feature_matrix(rows, names)
    proba = model.predict_proba(X) if rows else np.empty((0, 2))
    out = []
    for r, (p0, p1) in zip(rows, proba):
        c = copy.copy(r)
        c.prob0, c.prob1 = float(p0), float(p1)
        c.pred = int(p1 > 0.5)
        out.append(c)
    return out


def extract_class1(rows: Iterable[UserFeatureRow]) -> list[UserFeatureRow]:
    rows = list(rows)
    if any(r.pred is None for r in rows):
        raise ValueError("rows have not been classified")
    out = [r for r in rows if r.pred == 1]
    if not out:
        log.warning("no user was classified 1")
    return out


@dataclass(frozen=True)
class ReportRow:
    name: str
    population: Optional[int]
    sample: int
    class1: int

    @property
    def class0(self) -> int:
        return self.sample - self.class1

    @property
    def percent(self) -> float:
        return 100.0 * estimate_proportion(self.class1, self.sample)[0]


@dataclass(frozen=True)
class EvalReport:
    before: tuple
    after: tuple

    @property
    def mean_before(self) -> float:
        return float(np.mean([r.percent for r in self.before]))

    @property
    def mean_after(self) -> float:
        return float(np.mean([r.percent for r in self.after]))

    @property
    def delta(self) -> float:
        return self.mean_after - self.mean_before

    def to_text(self) -> str:
        def table(title, rows):
            lines = [f"{title}", "name\tusers\tsample\tclass1\tclass0\t%class1"]
            for r in rows:
                pop = "" if r.population is None else str(r.population)
                lines.append(f"{r.name}\t{pop}\t{r.sample}\t{r.class1}\t{r.class0}\t{r.percent:.2f}%")
            return lines
        out = table("initial samples", self.before) + [""] + table("class-1 samples", self.after)
        out += ["", f"mean before\t{self.mean_before:.2f}%",
                f"mean after\t{self.mean_after:.2f}%",
                f"delta\t{self.delta:+.2f}"]
        return "\n".join(out) + "\n"


def build_report(before: Sequence[ReportRow], after: Sequence[ReportRow]) -> EvalReport:
    names_b = [r.name for r in before]
    names_a = [r.name for r in after]
    if not before or sorted(names_b) != sorted(names_a) or len(set(names_b)) != len(names_b):
        raise ValueError(f"before/after datasets differ: {names_b} vs {names_a}")
    order = {n: i for i, n in enumerate(names_b)}
    return EvalReport(tuple(before), tuple(sorted(after, key=lambda r: order[r.name])))


def follower_diagnostic(rows: Sequence[UserFeatureRow], quantile: float = 0.9) -> dict:
    """How the most-followed users (top decile by default) were classified."""
    rows = [r for r in rows if r.pred is not None]
    if not rows:
        return {"threshold": None, "n": 0, "pred1": 0, "pred0": 0}
    followers = np.array([r.followers for r in rows], dtype=float)
    cut = float(np.quantile(followers, quantile))
    top = [r for r in rows if r.followers >= cut]
    p1 = sum(r.pred == 1 for r in top)
    return {"threshold": cut, "n": len(top), "pred1": p1, "pred0": len(top) - p1,
            "share1_top": p1 / len(top), "share1_all": sum(r.pred == 1 for r in rows) / len(rows)}
