"""Random forests for binary labels, built on the compiled kernels."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import _core

log = logging.getLogger(__name__)

CRITERIA = ("gini", "entropy")
CLASS_WEIGHTS = ("none", "balanced", "balanced_subsample")
FORMAT_NAME = "natforest-forest"
FORMAT_VERSION = 1

_CRITERION_CODE = {"gini": _core.GINI, "entropy": _core.ENTROPY}
_CW_CODE = {
    "none": _core.CW_NONE,
    "balanced": _core.CW_BALANCED,
    "balanced_subsample": _core.CW_BALANCED_SUBSAMPLE,
}


@dataclass(frozen=True)
class ForestConfig:
    """Forest hyperparameters.

    ``max_features=None`` means ``floor(sqrt(d))`` candidate columns per
    split, ``max_depth=None`` grows trees until the leaves are pure.
    """

    n_estimators: int = 10
    criterion: str = "gini"
    class_weight: str = "none"
    seed: int = 123
    max_features: Optional[int] = None
    bootstrap: bool = True
    max_depth: Optional[int] = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if self.criterion not in CRITERIA:
            raise ValueError(f"unknown criterion {self.criterion!r}")
        if self.class_weight not in CLASS_WEIGHTS:
            raise ValueError(f"unknown class_weight {self.class_weight!r}")
        if self.max_features is not None and self.max_features < 1:
            raise ValueError("max_features must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        if self.min_samples_split < 2 or self.min_samples_leaf < 1:
            raise ValueError("min_samples_split >= 2 and min_samples_leaf >= 1")

    def resolve_max_features(self, d: int) -> int:
        if self.max_features is None:
            return max(1, int(math.isqrt(d)))
        if self.max_features > d:
            raise ValueError(f"max_features={self.max_features} exceeds {d} columns")
        return self.max_features


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    sample_weight: Optional[np.ndarray] = None
    feature_names: Optional[list] = None

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            raise ValueError("X must be 2-dimensional")
        self.y = np.ascontiguousarray(self.y, dtype=np.int64)
        n, d = self.X.shape
        if self.y.shape != (n,):
            raise ValueError(f"{n} rows but {self.y.size} labels")
        if not np.isin(self.y, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        if self.sample_weight is None:
            self.sample_weight = np.ones(n)
        else:
            self.sample_weight = np.ascontiguousarray(self.sample_weight, dtype=np.float64)
            if self.sample_weight.shape != (n,):
                raise ValueError(f"{n} rows but {self.sample_weight.size} weights")
            if (self.sample_weight <= 0).any():
                raise ValueError("sample weights must be positive")
        if self.feature_names is None:
            self.feature_names = [f"x{j}" for j in range(d)]
        self.feature_names = list(self.feature_names)
        if len(self.feature_names) != d:
            raise ValueError(f"{d} columns but {len(self.feature_names)} names")

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    gain: float
    left_rows: np.ndarray


def impurity(counts: Sequence[float], criterion: str = "gini") -> float:
    """Gini or entropy (base 2) of weighted class counts ``[c0, c1]``."""
    c = np.asarray(counts, dtype=np.float64)
    if c.shape != (2,) or (c < 0).any():
        raise ValueError("expected two non-negative class counts")
    if c.sum() <= 0:
        raise ValueError("impurity of an empty node is undefined")
    return float(_core.node_impurity(c[0], c[1], _CRITERION_CODE[criterion]))


def balanced_class_weights(labels) -> dict:
    """``n / (2 * count(c))`` for every class present in ``labels``."""
    y = np.asarray(labels)
    n = y.size
    return {int(c): n / (2.0 * np.count_nonzero(y == c)) for c in np.unique(y)}


def best_split(X, y, candidate_features=None, criterion="gini",
               sample_weight=None, min_samples_leaf=1) -> Optional[Split]:
    """Best axis-aligned split of all rows over ``candidate_features``.

    Thresholds are midpoints between consecutive distinct values; ties on
    gain go to the lower feature index, then the lower threshold. Returns
    None for pure nodes or when no split has positive gain.
    """
    ds = Dataset(X, y, sample_weight)
    feats = (np.arange(ds.X.shape[1]) if candidate_features is None
             else np.asarray(candidate_features, dtype=np.int64))
    idx = np.arange(ds.n_rows, dtype=np.int64)
    f, thr, gain = _core.best_split_rows(ds.X, ds.y, ds.sample_weight, idx, 0,
                                         ds.n_rows, feats,
                                         _CRITERION_CODE[criterion],
                                         min_samples_leaf)
    if f < 0 or gain <= _core.GAIN_TOL:
        return None
    left = np.flatnonzero(ds.X[:, f] <= thr)
    return Split(int(f), float(thr), float(gain), left)


@dataclass
class TrainedForest:
    """Fitted ensemble stored as flat node arrays (see ``_core``)."""

    config: ForestConfig
    feature_names: list
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_node_samples: np.ndarray
    weighted_n_node_samples: np.ndarray
    impurity: np.ndarray
    roots: np.ndarray
    single_class: bool = False
    meta: dict = field(default_factory=dict)
    importances: np.ndarray = field(init=False)

    def __post_init__(self):
        self.importances = self._importances()

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def n_trees(self) -> int:
        return self.roots.size

    def _importances(self) -> np.ndarray:
        d = self.n_features
        total = np.zeros(d)
        ends = list(self.roots[1:]) + [self.feature.size]
        for start, end in zip(self.roots, ends):
            per_tree = np.zeros(d)
            for node in range(start, end):
                f = self.feature[node]
                if f < 0:
                    continue
                lo, hi = self.left[node], self.right[node]
                dec = (self.weighted_n_node_samples[node] * self.impurity[node]
                       - self.weighted_n_node_samples[lo] * self.impurity[lo]
                       - self.weighted_n_node_samples[hi] * self.impurity[hi])
                per_tree[f] += dec
            s = per_tree.sum()
            if s > 0:
                total += per_tree / s
        s = total.sum()
        return total / s if s > 0 else total

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(
                f"forest expects {self.n_features} columns, got shape {X.shape}")
        return np.ascontiguousarray(X)

    def predict_proba(self, X) -> np.ndarray:
        """``(n, 2)`` array of ``(prob0, prob1)``; soft vote over trees."""
        p1 = _core.forest_proba1(self._check(X), self.feature, self.threshold,
                                 self.left, self.right, self.value, self.roots)
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X, threshold: float = 0.5) -> np.ndarray:
        """1 where ``prob1 > threshold`` (strictly), else 0."""
        return (self.predict_proba(X)[:, 1] > threshold).astype(np.int64)

    def to_text(self) -> str:
        doc = {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "config": asdict(self.config),
            "feature_names": self.feature_names,
            "single_class": self.single_class,
            "meta": self.meta,
            "roots": self.roots.tolist(),
            "nodes": {
                "feature": self.feature.tolist(),
                "threshold": self.threshold.tolist(),
                "left": self.left.tolist(),
                "right": self.right.tolist(),
                "value": self.value.tolist(),
                "n_node_samples": self.n_node_samples.tolist(),
                "weighted_n_node_samples": self.weighted_n_node_samples.tolist(),
                "impurity": self.impurity.tolist(),
            },
        }
        return json.dumps(doc, indent=1) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TrainedForest":
        doc = json.loads(text)
        if doc.get("format") != FORMAT_NAME:
            raise ValueError("not a natforest model file")
        if doc.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model version {doc.get('version')}")
        nodes = doc["nodes"]
        ints = ("feature", "left", "right", "n_node_samples")
        arrays = {k: np.asarray(v, dtype=np.int64 if k in ints else np.float64)
                  for k, v in nodes.items()}
        arrays["value"] = arrays["value"].reshape(-1, 2)
        return cls(config=ForestConfig(**doc["config"]),
                   feature_names=doc["feature_names"],
                   roots=np.asarray(doc["roots"], dtype=np.int64),
                   single_class=doc["single_class"], meta=doc.get("meta", {}),
                   **arrays)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "TrainedForest":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


def fit(dataset: Dataset, config: ForestConfig = ForestConfig()) -> TrainedForest:
    """Fit a forest; tree ``t`` draws its randomness from ``(config.seed, t)``."""
    if dataset.n_rows == 0 or dataset.X.shape[1] == 0:
        raise ValueError("cannot fit on an empty dataset")
    mf = config.resolve_max_features(dataset.X.shape[1])
    single = np.unique(dataset.y).size < 2
    if single:
        log.warning("training data holds a single class; every tree is one leaf")
    arrays = _core.fit_forest(
        dataset.X, dataset.y, dataset.sample_weight, config.n_estimators,
        _CRITERION_CODE[config.criterion], _CW_CODE[config.class_weight],
        config.bootstrap, mf, config.min_samples_split, config.min_samples_leaf,
        -1 if config.max_depth is None else config.max_depth, np.uint64(config.seed))
    names = ("feature", "threshold", "left", "right", "value",
             "n_node_samples", "weighted_n_node_samples", "impurity", "roots")
    return TrainedForest(config=config, feature_names=list(dataset.feature_names),
                         single_class=bool(single), **dict(zip(names, arrays)))


def predict_proba(forest: TrainedForest, X) -> np.ndarray:
    return forest.predict_proba(X)


def predict(forest: TrainedForest, X, threshold: float = 0.5) -> np.ndarray:
    return forest.predict(X, threshold)
