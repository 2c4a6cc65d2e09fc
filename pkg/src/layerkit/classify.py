"""Grasp-class classifiers over 15-channel flux readings.

The main classifier is brute-force kNN (default k=10) in a normalized
feature space: each flux channel is shifted and scaled to mean 0, variance 1
(population variance) on the training readings. Distances are squared
Euclidean; ordering is identical to Euclidean and all tie totals below are
defined on the squared values.

Deterministic tie rules, shared by both kernel backends and the test oracle:

- neighbor selection orders by (distance, insertion index), insertion index
  being the row's position in the stacked training set;
- a majority-vote tie goes to the class with smaller summed neighbor
  distance, then to the smaller class index;
- window aggregation (aggregate_mode) breaks frequency ties toward the
  smaller class index.

Also here: the stochastic confusion-matrix classifier used as a stand-in for
policy experiments, and an oracle that returns the capped true class.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dataset import Dataset, N_CLASSES, N_FLUX
from .errors import (
    EmptyDatasetError,
    EmptyWindowError,
    InsufficientDataError,
    LayerkitError,
)
from .rng import generator

# Default confusion profile for the stochastic stand-in classifier: rows are
# true classes, columns predictions. Near-perfect on empty and single-layer
# pinches, noticeably weaker on 2- and 3-layer grasps, which is the regime a
# well-trained flux kNN lands in. Rows are normalized to sum to 1 exactly.
_REFERENCE_ROWS = np.array(
    [
        [1.000, 0.000, 0.000, 0.000],
        [0.000, 0.999, 0.000, 0.001],
        [0.030, 0.003, 0.866, 0.100],
        [0.128, 0.256, 0.138, 0.478],
    ]
)
REFERENCE_CONFUSION = _REFERENCE_ROWS / _REFERENCE_ROWS.sum(axis=1, keepdims=True)
REFERENCE_CONFUSION.flags.writeable = False

_STD_FLOOR = 1e-12


@dataclass
class Normalizer:
    """Per-channel affine map to zero mean, unit variance."""

    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64).reshape(N_FLUX)
        self.stds = np.asarray(self.stds, dtype=np.float64).reshape(N_FLUX)
        if not (np.all(np.isfinite(self.means)) and np.all(np.isfinite(self.stds))):
            raise ValueError("normalizer parameters must be finite")
        if np.any(self.stds <= 0):
            raise ValueError("normalizer stds must be positive")

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.means) / self.stds

    def inverse(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.stds + self.means


def fit_normalizer(train: Dataset) -> Normalizer:
    """Fit per-channel mean/std over every reading of every train episode.

    Variance uses the population divisor n. Channels whose std falls below
    1e-12 (constant channels) get std forced to 1 so they pass through
    centered but unscaled.
    """
    x, _ = train.stack()
    means = x.mean(axis=0)
    stds = np.sqrt(x.var(axis=0))
    stds = np.where(stds < _STD_FLOOR, 1.0, stds)
    return Normalizer(means=means, stds=stds)


@dataclass
class KnnModel:
    """Fitted kNN classifier: normalizer plus normalized training points."""

    k: int
    normalizer: Normalizer
    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int32)
        if self.points.ndim != 2 or self.points.shape[1] != N_FLUX:
            raise ValueError(f"points must be (n, {N_FLUX}), got {self.points.shape}")
        n = self.points.shape[0]
        if self.labels.shape != (n,):
            raise ValueError("labels must align with points")
        if n and (self.labels.min() < 0 or self.labels.max() >= N_CLASSES):
            raise ValueError("labels must be in [0, 3]")
        if not 1 <= self.k <= n:
            raise InsufficientDataError(self.k, n)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def predict_batch(self, readings: np.ndarray) -> np.ndarray:
        """Predicted classes for an (m, 15) block of raw readings."""
        q = np.asarray(readings, dtype=np.float64)
        if q.ndim != 2 or q.shape[1] != N_FLUX:
            raise ValueError(f"readings must be (m, {N_FLUX}), got {q.shape}")
        return _kernels.knn_label_batch(
            self.points, self.labels, self.normalizer.transform(q), self.k
        )

    def predict_window(self, outcome) -> np.ndarray:
        """Classify every reading captured during a grasp."""
        return self.predict_batch(outcome.readings)


def knn_fit(train: Dataset, k: int = 10) -> KnnModel:
    """Fit the normalizer on train and store its normalized readings.

    Insertion order of the stored points is the dataset's reading order
    (episodes in order, readings within episode in order); the neighbor tie
    rule refers to this order.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    x, y = train.stack()
    if x.shape[0] < k:
        raise InsufficientDataError(k, x.shape[0])
    normalizer = fit_normalizer(train)
    return KnnModel(k=k, normalizer=normalizer, points=normalizer.transform(x), labels=y)


def knn_predict_one(model: KnnModel, reading: np.ndarray) -> int:
    """Predicted class for a single 15-channel reading."""
    r = np.asarray(reading, dtype=np.float64).reshape(1, N_FLUX)
    return int(model.predict_batch(r)[0])


def save_model(model: KnnModel, path, source: str = "", seed: int = 0) -> None:
    """Serialize a fitted model to JSON (points stored in normalized space)."""
    obj = {
        "k": model.k,
        "normalizer": {
            "means": model.normalizer.means.tolist(),
            "stds": model.normalizer.stds.tolist(),
        },
        "points": [
            {"x": x.tolist(), "y": int(y)}
            for x, y in zip(model.points, model.labels)
        ],
        "meta": {"source": source, "seed": int(seed)},
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, separators=(",", ":"))
        f.write("\n")


def load_model(path) -> KnnModel:
    """Load and validate a model file written by save_model."""
    with open(path, "r", encoding="utf-8") as f:
        try:
            obj = json.load(f)
        except json.JSONDecodeError as exc:
            raise LayerkitError(f"model file is not valid JSON: {exc.msg}") from exc
    try:
        k = int(obj["k"])
        means = obj["normalizer"]["means"]
        stds = obj["normalizer"]["stds"]
        pts = [p["x"] for p in obj["points"]]
        ys = [p["y"] for p in obj["points"]]
    except (KeyError, TypeError) as exc:
        raise LayerkitError(f"model file missing field: {exc}") from exc
    try:
        normalizer = Normalizer(means=means, stds=stds)
        return KnnModel(
            k=k,
            normalizer=normalizer,
            points=np.asarray(pts, dtype=np.float64),
            labels=np.asarray(ys, dtype=np.int32),
        )
    except (ValueError, InsufficientDataError) as exc:
        raise LayerkitError(f"invalid model file: {exc}") from exc


def aggregate_mode(predictions) -> int:
    """Most frequent class in a prediction window; ties to the smaller class.

    Raises EmptyWindowError on an empty window.
    """
    p = np.asarray(predictions)
    if p.size == 0:
        raise EmptyWindowError("cannot aggregate an empty prediction window")
    p = p.astype(np.int64, copy=False)
    if p.min() < 0 or p.max() >= N_CLASSES:
        raise ValueError("predictions must be classes in [0, 3]")
    # argmax returns the first maximum, which is the smaller class index
    return int(np.argmax(np.bincount(p, minlength=N_CLASSES)))


def row_normalized(matrix) -> np.ndarray:
    """Rows divided by their sums; every row must have positive sum."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.shape != (N_CLASSES, N_CLASSES):
        raise ValueError(f"confusion must be {N_CLASSES}x{N_CLASSES}, got {m.shape}")
    sums = m.sum(axis=1, keepdims=True)
    if np.any(sums <= 0):
        raise ValueError("every row needs positive mass to normalize")
    return m / sums


def degrade_confusion(confusion, delta: float, classes=(2, 3)) -> np.ndarray:
    """Lower the diagonal of the given rows by delta, keeping rows stochastic.

    Off-diagonal entries of a touched row are rescaled proportionally to
    absorb the removed diagonal mass, so each row still sums to 1. Rows whose
    off-diagonal mass is zero cannot absorb anything and raise.
    """
    m = np.array(confusion, dtype=np.float64, copy=True)
    for c in classes:
        diag = m[c, c]
        if diag - delta < 0:
            raise ValueError(f"row {c} diagonal {diag} cannot drop by {delta}")
        off = 1.0 - diag
        if off <= 0:
            raise ValueError(f"row {c} has no off-diagonal mass to rescale")
        m[c] *= (off + delta) / off
        m[c, c] = diag - delta
    return m


class StochasticClassifier:
    """Draws predictions from a row-stochastic confusion matrix.

    Each call draws i.i.d. from the row of the capped true class using the
    classifier's own seeded stream, so an instance is deterministic given
    (confusion, seed) and independent of every other stream in a trial.
    """

    def __init__(self, confusion, seed: int = 0):
        m = np.asarray(confusion, dtype=np.float64)
        if m.shape != (N_CLASSES, N_CLASSES):
            raise ValueError(f"confusion must be {N_CLASSES}x{N_CLASSES}, got {m.shape}")
        if np.any(m < 0):
            raise ValueError("confusion entries must be non-negative")
        if np.any(np.abs(m.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("confusion rows must sum to 1 within 1e-9")
        self.confusion = m.copy()
        self.confusion.flags.writeable = False
        self._cdf = np.cumsum(m, axis=1)
        self._cdf[:, -1] = 1.0
        self._rng = generator(seed)
        self.seed = int(seed)

    def sample(self, true_class: int) -> int:
        return int(self.sample_batch(true_class, 1)[0])

    def sample_batch(self, true_class: int, size: int) -> np.ndarray:
        c = min(int(true_class), N_CLASSES - 1)
        if c < 0:
            raise ValueError(f"true_class must be >= 0, got {true_class}")
        u = self._rng.random(size)
        return np.searchsorted(self._cdf[c], u, side="right").astype(np.int32)

    def predict_window(self, outcome) -> np.ndarray:
        """One draw per reading in the grasp window."""
        return self.sample_batch(outcome.true_layers, outcome.readings.shape[0])


class OracleClassifier:
    """Always predicts the capped true class (policy upper bound)."""

    def predict_window(self, outcome) -> np.ndarray:
        c = min(int(outcome.true_layers), N_CLASSES - 1)
        return np.full(outcome.readings.shape[0], c, dtype=np.int32)
