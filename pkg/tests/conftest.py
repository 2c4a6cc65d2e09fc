"""Shared builders and stubs for the test suite."""

import numpy as np

from layerkit.classify import KnnModel, Normalizer
from layerkit.dataset import Dataset, Episode, N_FLUX
from layerkit.rng import generator
from layerkit.sim import GraspOutcome


def identity_normalizer() -> Normalizer:
    return Normalizer(means=np.zeros(N_FLUX), stds=np.ones(N_FLUX))


def raw_model(points, labels, k) -> KnnModel:
    """kNN model over raw coordinates (identity normalizer)."""
    return KnnModel(
        k=k,
        normalizer=identity_normalizer(),
        points=np.asarray(points, dtype=np.float64),
        labels=np.asarray(labels, dtype=np.int32),
    )


def pad15(rows) -> np.ndarray:
    """Embed low-dimensional fixture coordinates into the 15 flux channels."""
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    out = np.zeros((rows.shape[0], N_FLUX))
    out[:, : rows.shape[1]] = rows
    return out


def make_episode(eid, label, n=4, seed=0, **kwargs) -> Episode:
    rng = generator(seed)
    return Episode(
        id=eid, label=label, readings=rng.standard_normal((n, N_FLUX)), **kwargs
    )


def make_dataset(labels, n_readings=4, seed=0) -> Dataset:
    episodes = [
        make_episode(f"ep{i:03d}", lab, n=n_readings, seed=seed + i)
        for i, lab in enumerate(labels)
    ]
    return Dataset(episodes=episodes)


def separable_dataset(n_per_class=6, n_readings=8, seed=0) -> Dataset:
    """Four classes with far-apart means; kNN should be near-perfect."""
    rng = generator(seed)
    episodes = []
    for c in range(4):
        for j in range(n_per_class):
            # class mean on every channel so separation survives per-channel
            # normalization (a lone informative channel would be drowned out
            # by the noise channels once those are scaled to unit variance)
            readings = 100.0 * c + 0.01 * rng.standard_normal((n_readings, N_FLUX))
            episodes.append(Episode(id=f"c{c}e{j}", label=c, readings=readings))
    return Dataset(episodes=episodes)


class StubTrial:
    """Deterministic environment trial: true layers are a function of d."""

    def __init__(self, layers_fn, retained_fn):
        self.layers_fn = layers_fn
        self.retained_fn = retained_fn
        self.grasps = []
        self.lifts = 0

    def grasp(self, d_vert_mm, window):
        true = int(self.layers_fn(d_vert_mm))
        self.grasps.append(float(d_vert_mm))
        return GraspOutcome(
            true_layers=true,
            readings=np.zeros((window, N_FLUX)),
            finger_height_mm=-float(d_vert_mm),
        )

    def lift(self, outcome):
        self.lifts += 1
        return int(self.retained_fn(outcome.true_layers))


class StubEnv:
    """Env facade whose stacks are pure functions of the commanded depth."""

    def __init__(self, layers_fn, retained_fn=lambda true: true):
        self.layers_fn = layers_fn
        self.retained_fn = retained_fn
        self.trials = []

    def new_trial(self, rng):
        trial = StubTrial(self.layers_fn, self.retained_fn)
        self.trials.append(trial)
        return trial


class ScriptedClassifier:
    """Plays back a fixed per-attempt prediction script."""

    def __init__(self, script):
        self.script = [int(s) for s in script]
        self.calls = 0

    def predict_window(self, outcome):
        pred = self.script[min(self.calls, len(self.script) - 1)]
        self.calls += 1
        return np.full(outcome.readings.shape[0], pred, dtype=np.int32)
