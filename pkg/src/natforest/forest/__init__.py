from .model import (
    CLASS_WEIGHTS,
    CRITERIA,
    Dataset,
    ForestConfig,
    Split,
    TrainedForest,
    balanced_class_weights,
    best_split,
    fit,
    impurity,
    predict,
    predict_proba,
)

__all__ = [
    "CLASS_WEIGHTS",
    "CRITERIA",
    "Dataset",
    "ForestConfig",
    "Split",
    "TrainedForest",
    "balanced_class_weights",
    "best_split",
    "fit",
    "impurity",
    "predict",
    "predict_proba",
]
