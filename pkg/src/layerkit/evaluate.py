"""Confusion-matrix metrics and episode-grouped cross-validation.

Confusion matrices are (4, 4) arrays of reading counts, rows true classes,
columns predictions. Row-normalized matrices divide each populated row by
its sum; rows with zero support stay zero and are excluded from averages, so
small validation folds that happen to miss a class do not drag per-class
numbers to zero. Balanced accuracy is the mean per-class recall over the
supported classes.
"""

from dataclasses import dataclass

import numpy as np

from .classify import knn_fit
from .dataset import Dataset, N_CLASSES, make_cv_folds
from .errors import EmptyDatasetError, NoSupportError


def _as_predictor(classifier):
    if hasattr(classifier, "predict_batch"):
        return classifier.predict_batch
    if callable(classifier):
        return classifier
    raise TypeError(
        "classifier must expose predict_batch(readings) or be callable"
    )


def evaluate(classifier, val: Dataset) -> np.ndarray:
    """Count-based confusion of a classifier over every validation reading.

    Args:
        classifier: fitted model with predict_batch, or any callable mapping
            an (m, 15) block to m class labels.
        val: validation episodes.

    Returns:
        (4, 4) int64 counts; entry [t, p] is readings of true class t
        predicted as p. Total count equals val.total_readings.
    """
    if val.n_episodes == 0:
        raise EmptyDatasetError("cannot evaluate on an empty dataset")
    predict = _as_predictor(classifier)
    x, y = val.stack()
    pred = np.asarray(predict(x), dtype=np.int64)
    if pred.shape != (x.shape[0],):
        raise ValueError("classifier returned a misshapen prediction array")
    cm = np.bincount(y.astype(np.int64) * N_CLASSES + pred, minlength=N_CLASSES**2)
    return cm.reshape(N_CLASSES, N_CLASSES)


def row_normalize(cm: np.ndarray) -> np.ndarray:
    """Rows scaled to sum to 1; zero-support rows stay all-zero."""
    cm = np.asarray(cm, dtype=np.float64)
    sums = cm.sum(axis=1, keepdims=True)
    out = np.divide(cm, sums, out=np.zeros_like(cm), where=sums > 0)
    return out


def per_class_accuracy(cm: np.ndarray) -> np.ndarray:
    """Per-class recall (diagonal of the row-normalized matrix)."""
    return np.diag(row_normalize(cm)).copy()


def balanced_accuracy(cm: np.ndarray) -> float:
    """Mean per-class recall over classes with nonzero support."""
    cm = np.asarray(cm, dtype=np.float64)
    support = cm.sum(axis=1)
    mask = support > 0
    if not mask.any():
        raise NoSupportError("confusion matrix has no populated rows")
    recalls = np.diag(cm)[mask] / support[mask]
    return float(recalls.mean())


@dataclass
class CvReport:
    """Aggregate of an n-fold episode-grouped cross-validation run."""

    folds: int
    mean_confusion: np.ndarray
    per_class_accuracy: np.ndarray
    per_class_fold_support: np.ndarray
    balanced_accuracy_mean: float
    balanced_accuracy_std: float
    seed: int

    def to_dict(self) -> dict:
        return {
            "folds": self.folds,
            "mean_confusion": self.mean_confusion.tolist(),
            "per_class_accuracy": self.per_class_accuracy.tolist(),
            "per_class_fold_support": self.per_class_fold_support.tolist(),
            "balanced_accuracy_mean": self.balanced_accuracy_mean,
            "balanced_accuracy_std": self.balanced_accuracy_std,
            "seed": self.seed,
        }


def cross_validate(
    ds: Dataset,
    k: int = 10,
    n_folds: int = 100,
    train_fraction: float = 0.95,
    seed: int = 0,
) -> CvReport:
    """Repeated episode-grouped splits, kNN refit per fold.

    Each fold fits the normalizer and kNN on its train episodes and counts a
    confusion over its validation readings. Row-normalized confusions are
    averaged per class over the folds where that class had support; balanced
    accuracy is computed per fold over supported classes, then summarized as
    mean +- std (std across folds, ddof=1; 0.0 for a single fold).
    """
    folds = make_cv_folds(ds, n_folds, train_fraction, seed)
    conf_sum = np.zeros((N_CLASSES, N_CLASSES))
    support_folds = np.zeros(N_CLASSES, dtype=np.int64)
    bas = np.empty(n_folds)
    for i, (train, val) in enumerate(folds):
        model = knn_fit(train, k)
        cm = evaluate(model, val)
        r = row_normalize(cm)
        supported = cm.sum(axis=1) > 0
        conf_sum[supported] += r[supported]
        support_folds += supported
        bas[i] = balanced_accuracy(cm)
    mean_conf = np.divide(
        conf_sum,
        support_folds[:, None],
        out=np.zeros_like(conf_sum),
        where=support_folds[:, None] > 0,
    )
    std = float(np.std(bas, ddof=1)) if n_folds > 1 else 0.0
    return CvReport(
        folds=n_folds,
        mean_confusion=mean_conf,
        per_class_accuracy=np.diag(mean_conf).copy(),
        per_class_fold_support=support_folds,
        balanced_accuracy_mean=float(bas.mean()),
        balanced_accuracy_std=std,
        seed=int(seed),
    )
