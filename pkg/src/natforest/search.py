"""Exhaustive sweep over feature subsets and forest settings.

A cell is one feature subset paired with one (criterion, class_weight)
setting. Cells are numbered canonically: the setting is the outer index
(criterion in CRITERION_ORDER, then class weight in CLASS_WEIGHT_ORDER) and
the feature subset the inner one, so ``num = setting * 32768 + subset``.
The subset index packs, in base 8, the mentions, retweet, reply and quote
choices (each an index into ``DIRECTION_SUBSETS``) followed by three flags
for the profile block, the public-metric block and the activity column.
"""
from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .features import ACTIONS, ACTION_COLUMNS, FEATURE_COLUMNS, PROFILE_COLUMNS, PUBLIC_COLUMNS
from .forest import _core

log = logging.getLogger(__name__)

CRITERION_ORDER = ("entropy", "gini")
CLASS_WEIGHT_ORDER = ("none", "balanced_subsample", "balanced")
SETTINGS = [(c, w) for c in CRITERION_ORDER for w in CLASS_WEIGHT_ORDER]

# Positions within (a_In, a_Out, de_In) picked by each of the 8 choices.
DIRECTION_SUBSETS = [(), (1,), (1, 2), (2,), (0,), (0, 2), (0, 1), (0, 1, 2)]

N_SUBSETS = 8 ** 4 * 8
N_CELLS = N_SUBSETS * len(SETTINGS)
DEFAULT_ESTIMATORS = 10
DEFAULT_FOLDS = 5

RESULT_COLUMNS = ["num", "TN", "FP", "FN", "TP", "removed_cols", "criterion",
                  "class_weight", "n_estimators", "cv_score", "degenerate"]

_CRIT = {"gini": _core.GINI, "entropy": _core.ENTROPY}
_CW = {"none": _core.CW_NONE, "balanced": _core.CW_BALANCED,
       "balanced_subsample": _core.CW_BALANCED_SUBSAMPLE}


@dataclass(frozen=True)
class FeatureCombo:
    mention_set: int
    retweet_set: int
    reply_set: int
    quote_set: int
    include_profile: bool
    include_public: bool
    include_activity: bool

    @property
    def index(self) -> int:
        v = 0
        for s in (self.mention_set, self.retweet_set, self.reply_set, self.quote_set):
            v = v * 8 + s
        return v * 8 + 4 * self.include_profile + 2 * self.include_public + self.include_activity

    @classmethod
    def from_index(cls, index: int) -> "FeatureCombo":
        if not 0 <= index < N_SUBSETS:
            raise ValueError(f"subset index out of range: {index}")
        b = index % 8
        rest = index // 8
        sets = []
        for _ in ACTIONS:
            sets.append(rest % 8)
            rest //= 8
        m, rt, rp, rq = reversed(sets)
        return cls(m, rt, rp, rq, bool(b & 4), bool(b & 2), bool(b & 1))

    @property
    def columns(self) -> list[str]:
        chosen = set()
        for action, s in zip(ACTIONS, (self.mention_set, self.retweet_set, self.reply_set, self.quote_set)):
            chosen.update(ACTION_COLUMNS[action][i] for i in DIRECTION_SUBSETS[s])
        if self.include_profile:
            chosen.update(PROFILE_COLUMNS)
        if self.include_public:
            chosen.update(PUBLIC_COLUMNS)
        if self.include_activity:
            chosen.add("activity")
        return [c for c in FEATURE_COLUMNS if c in chosen]

    @property
    def removed(self) -> list[str]:
        keep = set(self.columns)
        return [c for c in FEATURE_COLUMNS if c not in keep]

    @property
    def degenerate(self) -> bool:
        return not self.columns


@dataclass(frozen=True)
class Cell:
    num: int
    combo: FeatureCombo
    criterion: str
    class_weight: str


def cell(num: int) -> Cell:
    if not 0 <= num < N_CELLS:
        raise ValueError(f"cell number out of range: {num}")
    setting, sub = divmod(num, N_SUBSETS)
    crit, cw = SETTINGS[setting]
    return Cell(num, FeatureCombo.from_index(sub), crit, cw)


def enumerate_combos() -> list[Cell]:
    """All cells in canonical order."""
    combos = [FeatureCombo.from_index(i) for i in range(N_SUBSETS)]
    return [Cell(s * N_SUBSETS + i, combos[i], crit, cw)
            for s, (crit, cw) in enumerate(SETTINGS) for i in range(N_SUBSETS)]


def column_masks(columns: Sequence[str] = FEATURE_COLUMNS) -> np.ndarray:
    """Boolean (N_SUBSETS, len(columns)) table of selected columns per subset."""
    pos = {c: j for j, c in enumerate(columns)}
    masks = np.zeros((N_SUBSETS, len(columns)), dtype=bool)
    for i in range(N_SUBSETS):
        for c in FeatureCombo.from_index(i).columns:
            masks[i, pos[c]] = True
    return masks


def split_train_test(n: int, seed: int, ratio: float = 0.8) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle of row positions, cut at round(ratio * n)."""
    if n < 5:
        raise ValueError(f"need at least 5 labelled rows, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(math.floor(ratio * n + 0.5))
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def stratified_folds(y: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Fold id per row; each class is spread round-robin after a shuffle."""
    y = np.asarray(y)
    folds = np.empty(y.size, dtype=np.int64)
    rng = np.random.default_rng(seed)
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(idx.size)]
        folds[idx] = np.arange(idx.size) % k
    return folds


def cell_seed(base_seed: int, num: int) -> int:
    return int(_core.derive_seed(np.uint64(base_seed), np.uint64(num)))


def precision(tp: int, fp: int) -> Optional[float]:
    """TP / (TP + FP), or None when the model predicted no positives."""
    return None if tp + fp == 0 else tp / (tp + fp)


def format_precision(p: Optional[float]) -> str:
    """Percentage cut (not rounded) to two decimals: 50/70 -> '71.42%'."""
    if p is None:
        return "n/a"
    return f"{math.floor(p * 10_000 + 1e-9) / 100:.2f}%"


@dataclass
class SearchData:
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    folds: np.ndarray
    n_folds: int
    n_estimators: int
    base_seed: int


def prepare(X: np.ndarray, y: np.ndarray, base_seed: int = 123, cv: bool = True,
            n_folds: int = DEFAULT_FOLDS, n_estimators: int = DEFAULT_ESTIMATORS) -> SearchData:
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError("X must be (n, d) with one label per row")
    if not set(np.unique(y)) <= {0, 1}:
        raise ValueError("labels must be 0 or 1")
    if np.unique(y).size < 2:
        raise ValueError("the labelled sample holds a single class; a search needs both")
    tr, te = split_train_test(y.size, base_seed)
    folds = stratified_folds(y[tr], n_folds, base_seed) if cv else np.zeros(tr.size, np.int64)
    return SearchData(X[tr], y[tr], X[te], y[te], folds, n_folds if cv else 0,
                      n_estimators, base_seed)


_MASKS = None
_DATA: Optional[SearchData] = None


def _masks() -> np.ndarray:
    global _MASKS
    if _MASKS is None:
        _MASKS = column_masks()
    return _MASKS


def _eval_chunk(nums: np.ndarray, data: Optional[SearchData] = None) -> np.ndarray:
    data = data or _DATA
    masks = _masks()
    out = np.full((nums.size, 5), np.nan)
    for i, num in enumerate(nums):
        setting, sub = divmod(int(num), N_SUBSETS)
        cols = np.flatnonzero(masks[sub]).astype(np.int64)
        if cols.size == 0:
            continue
        crit, cw = SETTINGS[setting]
        out[i] = _core.evaluate_cell(
            data.X_train, data.y_train, data.X_test, data.y_test, data.folds,
            data.n_folds, cols, data.n_estimators, _CRIT[crit], _CW[cw],
            np.uint64(cell_seed(data.base_seed, int(num))))
    return out


def _init_worker(data):
    global _DATA
    _DATA = data
    _masks()


@dataclass
class SearchResult:
    num: np.ndarray
    matrix: np.ndarray  # (n, 5): TN, FP, FN, TP, cv_score; NaN rows are degenerate
    n_estimators: int
    n_test: int

    def rows(self) -> list["SearchRow"]:
        out = []
        for num, vals in zip(self.num, self.matrix):
            c = cell(int(num))
            degenerate = bool(np.isnan(vals[0]))
            counts = (None,) * 4 if degenerate else tuple(int(v) for v in vals[:4])
            cv = None if degenerate or np.isnan(vals[4]) else float(vals[4])
            out.append(SearchRow(int(num), *counts, tuple(c.combo.removed), c.criterion,
                                 c.class_weight, self.n_estimators, cv, degenerate))
        return out


def run_search(X: np.ndarray, y: np.ndarray, base_seed: int = 123, workers: int = 1,
               cells: Optional[Iterable[int]] = None, cv: bool = True,
               n_estimators: int = DEFAULT_ESTIMATORS, chunk: int = 256,
               progress: Optional[Callable[[int, int], None]] = None) -> SearchResult:
    """Evaluate cells (all by default) on one shared train/test split.

    Each cell's forests are seeded from ``(base_seed, num)``, so results do
    not depend on ``workers`` or on evaluation order.
    """
    data = prepare(X, y, base_seed, cv=cv, n_estimators=n_estimators)
    nums = np.arange(N_CELLS, dtype=np.int64) if cells is None else np.asarray(sorted(set(cells)), dtype=np.int64)
    if nums.size and (nums[0] < 0 or nums[-1] >= N_CELLS):
        raise ValueError("cell number out of range")
    chunks = [nums[i:i + chunk] for i in range(0, nums.size, chunk)]
    results = [None] * len(chunks)
    done = 0
    if workers <= 1:
        for k, part in enumerate(chunks):
            results[k] = _eval_chunk(part, data)
            done += part.size
            if progress:
                progress(done, nums.size)
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(data,)) as pool:
            futures = {pool.submit(_eval_chunk, part): k for k, part in enumerate(chunks)}
            for fut in as_completed(futures):
                k = futures[fut]
                results[k] = fut.result()
                done += chunks[k].size
                if progress:
                    progress(done, nums.size)
    matrix = np.vstack(results) if results else np.empty((0, 5))
    return SearchResult(nums, matrix, n_estimators, int(data.y_test.size))


def default_workers() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)


@dataclass(frozen=True)
class SearchRow:
    num: int
    TN: Optional[int]
    FP: Optional[int]
    FN: Optional[int]
    TP: Optional[int]
    removed_cols: tuple
    criterion: str
    class_weight: str
    n_estimators: int
    cv_score: Optional[float]
    degenerate: bool

    @property
    def selected_cols(self) -> list[str]:
        gone = set(self.removed_cols)
        return [c for c in FEATURE_COLUMNS if c not in gone]

    @property
    def precision(self) -> Optional[float]:
        return None if self.degenerate else precision(self.TP, self.FP)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_results(rows: Iterable[SearchRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in rows:
            w.writerow([r.num, _fmt(r.TN), _fmt(r.FP), _fmt(r.FN), _fmt(r.TP),
                        ";".join(r.removed_cols), r.criterion, r.class_weight,
                        r.n_estimators, _fmt(r.cv_score), _fmt(r.degenerate)])


def read_results(path) -> list[SearchRow]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RESULT_COLUMNS:
            raise ValueError(f"{path}: not a results file (header {reader.fieldnames})")
        for rec in reader:
            try:
                opt = lambda k: int(rec[k]) if rec[k] != "" else None
                removed = tuple(c for c in rec["removed_cols"].split(";") if c)
                unknown = [c for c in removed if c not in FEATURE_COLUMNS]
                if unknown:
                    raise ValueError(f"unknown columns {unknown}")
                out.append(SearchRow(int(rec["num"]), opt("TN"), opt("FP"), opt("FN"), opt("TP"),
                                     removed, rec["criterion"], rec["class_weight"],
                                     int(rec["n_estimators"]),
                                     float(rec["cv_score"]) if rec["cv_score"] else None,
                                     rec["degenerate"] == "1"))
            except (ValueError, KeyError) as exc:
                raise ValueError(f"{path}:{reader.line_num}: {exc}") from exc
    return out


def select_model(rows: Iterable[SearchRow], fp_max: int = 1, top_k: Optional[int] = None) -> list[SearchRow]:
    """Rows with FP <= fp_max ordered by FP asc, TP desc, fewer columns, lower num."""
    keep = [r for r in rows if not r.degenerate and r.FP <= fp_max]
    keep.sort(key=lambda r: (r.FP, -r.TP, len(r.selected_cols), r.num))
    if not keep:
        log.warning("no row has FP <= %d; try a larger fp_max", fp_max)
    return keep if top_k is None else keep[:top_k]


def labeled_matrix(feature_rows, labels: dict, columns: Sequence[str] = FEATURE_COLUMNS):
    """Join labels onto feature rows -> (X, y, author_ids), ordered by author_id."""
    by_id = {r.author_id: r for r in feature_rows}
    missing = sorted(set(labels) - set(by_id))
    if missing:
        raise ValueError(f"{len(missing)} labelled users missing from features, e.g. {missing[:5]}")
    ids = sorted(labels)
    X = np.array([by_id[i].values(columns) for i in ids], dtype=np.float64).reshape(len(ids), len(columns))
    y = np.array([labels[i] for i in ids], dtype=np.int64)
    return X, y, ids
