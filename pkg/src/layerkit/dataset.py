"""Episode-structured tactile datasets: on-disk format, validation, splits.

An episode is one approach-grasp-release cycle recorded by the fingertip
sensor: an (n, 15) float64 block of magnetometer flux readings (5
magnetometers x 3 flux axes, magnetometer-major order) plus one grasp-class
label in {0, 1, 2, 3} that applies to every reading in the episode. Class c
means c cloth layers were held between the fingers, with 3 standing for
"3 or more".

On-disk format is JSON Lines, one object per episode:

    {"id": "...", "label": 0..3, "approach_offset_mm": <num>,
     "sample_rate_hz": <num>, "readings": [[f0, ..., f14], ...]}

Floats are written with shortest round-trip repr (>= 9 significant digits),
so save followed by load is lossless.

Splitting operates on whole episodes only: readings from one episode are
strongly correlated, so scattering them across train and validation would
leak. Fold i of a seeded fold sequence uses rng.fold_seed(seed, i); the
derivation is stable across releases.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyDatasetError, MalformedLineError
from .rng import fold_seed, generator

N_FLUX = 15
N_CLASSES = 4

_EPISODE_KEYS = {"id", "label", "approach_offset_mm", "sample_rate_hz", "readings"}


@dataclass
class Episode:
    """One grasp episode: identity, label, and its block of flux readings."""

    id: str
    label: int
    readings: np.ndarray
    approach_offset_mm: float = 0.0
    sample_rate_hz: float = 350.0

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise ValueError("episode id must be a non-empty string")
        if not isinstance(self.label, (int, np.integer)) or isinstance(self.label, bool):
            raise ValueError(f"label must be an integer, got {self.label!r}")
        self.label = int(self.label)
        if not 0 <= self.label < N_CLASSES:
            raise ValueError(f"label must be in [0, {N_CLASSES - 1}], got {self.label}")
        r = np.asarray(self.readings, dtype=np.float64)
        if r.ndim != 2 or r.shape[1] != N_FLUX:
            raise ValueError(f"readings must have shape (n, {N_FLUX}), got {r.shape}")
        if r.shape[0] < 1:
            raise ValueError("episode must contain at least one reading")
        if not np.all(np.isfinite(r)):
            raise ValueError("readings must be finite")
        r = np.ascontiguousarray(r)
        r.flags.writeable = False  # episodes are immutable after construction
        self.readings = r
        self.approach_offset_mm = float(self.approach_offset_mm)
        self.sample_rate_hz = float(self.sample_rate_hz)
        if not (self.sample_rate_hz > 0 and math.isfinite(self.sample_rate_hz)):
            raise ValueError("sample_rate_hz must be positive and finite")

    @property
    def n_readings(self) -> int:
        return self.readings.shape[0]


@dataclass
class Dataset:
    """An ordered collection of episodes with unique ids."""

    episodes: list[Episode] = field(default_factory=list)
    provenance: str = ""

    def __post_init__(self):
        ids = [e.id for e in self.episodes]
        if len(set(ids)) != len(ids):
            seen, dup = set(), None
            for i in ids:
                if i in seen:
                    dup = i
                    break
                seen.add(i)
            raise ValueError(f"duplicate episode id {dup!r}")

    @property
    def n_episodes(self) -> int:
        return len(self.episodes)

    @property
    def total_readings(self) -> int:
        return sum(e.n_readings for e in self.episodes)

    def stack(self) -> tuple[np.ndarray, np.ndarray]:
        """All readings stacked to (N, 15) with per-reading labels (N,)."""
        if not self.episodes:
            raise EmptyDatasetError("dataset has no episodes")
        x = np.concatenate([e.readings for e in self.episodes], axis=0)
        y = np.concatenate(
            [np.full(e.n_readings, e.label, dtype=np.int32) for e in self.episodes]
        )
        return x, y


@dataclass
class SplitSpec:
    """Episode-grouped split request: train fraction in (0, 1] plus a seed."""

    train_fraction: float
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.train_fraction <= 1.0):
            raise ValueError(
                f"train_fraction must be in (0, 1], got {self.train_fraction}"
            )


def load_dataset(path, lenient: bool = False) -> Dataset:
    """Load a JSONL episode file.

    Args:
        path: file to read.
        lenient: if True, unknown keys on episode objects are ignored;
            otherwise they fail the line. Required keys, shapes, label range
            and finiteness are validated in both modes.

    Raises:
        FileNotFoundError: missing file.
        MalformedLineError: first offending line, with its 1-based number.
    """
    episodes = []
    seen_ids = set()
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                raise MalformedLineError(line_no, "blank line")
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLineError(line_no, f"invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise MalformedLineError(line_no, "episode must be a JSON object")
            missing = _EPISODE_KEYS - obj.keys()
            if missing:
                raise MalformedLineError(line_no, f"missing keys {sorted(missing)}")
            if not lenient:
                extra = obj.keys() - _EPISODE_KEYS
                if extra:
                    raise MalformedLineError(line_no, f"unknown keys {sorted(extra)}")
            try:
                ep = Episode(
                    id=obj["id"],
                    label=obj["label"],
                    readings=obj["readings"],
                    approach_offset_mm=float(obj["approach_offset_mm"]),
                    sample_rate_hz=float(obj["sample_rate_hz"]),
                )
            except (ValueError, TypeError) as exc:
                raise MalformedLineError(line_no, str(exc)) from exc
            if ep.id in seen_ids:
                raise MalformedLineError(line_no, f"duplicate episode id {ep.id!r}")
            seen_ids.add(ep.id)
            episodes.append(ep)
    return Dataset(episodes=episodes, provenance=str(path))


def save_dataset(ds: Dataset, path) -> None:
    """Write a dataset as JSONL. Float repr is shortest round-trip."""
    with open(path, "w", encoding="utf-8") as f:
        for e in ds.episodes:
            obj = {
                "id": e.id,
                "label": e.label,
                "approach_offset_mm": e.approach_offset_mm,
                "sample_rate_hz": e.sample_rate_hz,
                "readings": e.readings.tolist(),
            }
            f.write(json.dumps(obj, separators=(",", ":")) + "\n")


def filter_ungrasped(ds: Dataset, keep) -> Dataset:
    """Keep episodes where keep(episode) is truthy (order preserved).

    The usual predicate drops collection episodes that failed to catch the
    layers they aimed for; it is deliberately generic.
    """
    return Dataset(
        episodes=[e for e in ds.episodes if keep(e)], provenance=ds.provenance
    )


def _train_count(n: int, fraction: float) -> int:
    # round half up, then clamp so validation is never empty for fraction < 1
    n_train = math.floor(fraction * n + 0.5)
    if fraction < 1.0:
        n_train = min(n_train, n - 1)
    return n_train


def split_by_episode(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Shuffle episodes with the spec's seed and cut once.

    The first round(fraction * n) episodes (half-up) of the shuffled order go
    to train, the rest to validation. For fraction < 1 the train count is
    clamped to n - 1 so validation is never empty, which requires n >= 2.
    """
    n = ds.n_episodes
    if n == 0:
        raise EmptyDatasetError("cannot split an empty dataset")
    if spec.train_fraction < 1.0 and n < 2:
        raise EmptyDatasetError(
            "need at least 2 episodes to split with train_fraction < 1"
        )
    perm = generator(spec.seed).permutation(n)
    n_train = _train_count(n, spec.train_fraction)
    train = [ds.episodes[i] for i in perm[:n_train]]
    val = [ds.episodes[i] for i in perm[n_train:]]
    return (
        Dataset(episodes=train, provenance=ds.provenance),
        Dataset(episodes=val, provenance=ds.provenance),
    )


def make_cv_folds(
    ds: Dataset, n_folds: int, train_fraction: float, seed: int = 0
) -> list[tuple[Dataset, Dataset]]:
    """n_folds independent episode-grouped splits.

    Fold i splits with seed XOR splitmix64(i) (rng.fold_seed), so a single
    fold equals split_by_episode with that derived seed and fold sequences
    are reproducible from (seed, n_folds) alone.
    """
    if n_folds < 1:
        raise ValueError(f"n_folds must be >= 1, got {n_folds}")
    return [
        split_by_episode(ds, SplitSpec(train_fraction, fold_seed(seed, i)))
        for i in range(n_folds)
    ]


def label_histogram(ds: Dataset) -> dict[int, tuple[int, int]]:
    """Per-class (episode count, reading count), classes 0..3 always present."""
    hist = {c: [0, 0] for c in range(N_CLASSES)}
    for e in ds.episodes:
        hist[e.label][0] += 1
        hist[e.label][1] += e.n_readings
    return {c: (v[0], v[1]) for c, v in hist.items()}
