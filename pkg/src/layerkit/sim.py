"""Cloth-stack grasp simulator and synthetic tactile signal family.

Geometry. A stack of cloth layers hangs over an edge; layer i's top edge
sits at height e_i, strictly decreasing in i. The nominal top edge defines
the height datum (0 mm); a reset draws the per-trial layer thickness (when
configured as a range) and a common vertical offset u ~ U(-v, +v) applied to
every edge, modeling re-draping variation. Optional gap compression raises
every edge below the 2nd layer by up to the configured amount, thinning the
gap under layer 2. A pinch at height h catches every layer whose top edge is
at or above h: layers(h) = |{i : e_i >= h}|, non-increasing in h.

Coordinates. Policies command a downward displacement d_vert from the
approach datum h0 (default 0 = nominal top edge): fingers close at
h = h0 - d_vert. Larger d_vert means deeper, so more layers.

Signal. Readings are per-class 15-channel Gaussians with diagonal
covariance. Class structure lives in flux channels 0-1 (the channels that
respond to the pinched stack); the other 13 carry symmetric unit noise. The
family has two calibration knobs: `separation` scales all between-class mean
differences (means are anchored at the origin, so scaled means are
separation * means) and `overlap` slides the 3-layer mean toward the 2-layer
mean. The 3-layer class also has a much wider informative-channel std:
3-or-more grasps are mechanically inconsistent, and that wide halo is what
produces the asymmetric recall profile (0 ~= 1 > 2 > 3) after kNN.

Lifting. Each grasped layer independently slips with probability p_slip
during the lift, so retained ~ Binomial(grasped, 1 - p_slip).
"""

import json
from dataclasses import dataclass

import numpy as np

from .classify import REFERENCE_CONFUSION
from .dataset import Dataset, Episode, N_FLUX
from .errors import CalibrationError, LayerkitError
from .rng import derive_seed, generator

MIN_GAP_MM = 0.1

# Informative-plane geometry of the default signal family (channels 0-1).
# Classes 0/1/2 are tight clusters at the corners of a near-equilateral
# triangle; class 3 is anchored mid-field and slides toward class 2 with the
# overlap knob. Stds are per informative channel; noise channels are unit.
# Constants are tuned so that separation=1.0, overlap=DEFAULT_OVERLAP
# reproduces the REFERENCE_CONFUSION recall profile under the default stack
# and collection settings.
_MEAN_0 = (0.0, 0.0)
_MEAN_1 = (14.0, 0.0)
_MEAN_2 = (7.0, 12.1)
_MEAN_3_ANCHOR = (7.0, 4.0)
_INFO_STD = (0.9, 0.9, 1.3, 2.9)
DEFAULT_OVERLAP = 0.42
DEFAULT_SAMPLE_RATE_HZ = 350.0

_GEN_STREAM = 101
_CAL_DATA_STREAM = 701
_CAL_CV_STREAM = 702
_MISS_RETRIES = 64


@dataclass
class ClothStackModel:
    """Static stack configuration; reset_stack draws concrete instances."""

    n_layers: int = 4
    layer_thickness_mm: float | tuple[float, float] = (3.0, 5.0)
    stack_variation_mm: float = 1.5
    gap_compression_mm: float = 0.0
    p_slip: float = 0.0
    approach_height_mm: float = 0.0

    def __post_init__(self):
        if self.n_layers < 3:
            raise ValueError(f"n_layers must be >= 3, got {self.n_layers}")
        t = self.layer_thickness_mm
        if isinstance(t, (tuple, list)):
            lo, hi = float(t[0]), float(t[1])
            if not (0 < lo <= hi):
                raise ValueError(f"bad thickness range ({lo}, {hi})")
            self.layer_thickness_mm = (lo, hi)
        else:
            if not float(t) > 0:
                raise ValueError(f"thickness must be positive, got {t}")
            self.layer_thickness_mm = float(t)
        if self.stack_variation_mm < 0:
            raise ValueError("stack_variation_mm must be >= 0")
        if self.gap_compression_mm < 0:
            raise ValueError("gap_compression_mm must be >= 0")
        if not 0.0 <= self.p_slip <= 1.0:
            raise ValueError(f"p_slip must be in [0, 1], got {self.p_slip}")

    @property
    def nominal_thickness_mm(self) -> float:
        t = self.layer_thickness_mm
        return (t[0] + t[1]) / 2.0 if isinstance(t, tuple) else t


@dataclass
class StackInstance:
    """One concrete draped stack: edge heights plus the drawn parameters."""

    edges: np.ndarray
    thickness_mm: float
    offset_mm: float

    def layers_at(self, h: float) -> int:
        """Layers caught by a pinch at height h (edges at or above h)."""
        return int(np.count_nonzero(self.edges >= h))


def reset_stack(model: ClothStackModel, rng: np.random.Generator) -> StackInstance:
    """Draw thickness (if ranged) and the common offset; build edge heights."""
    t = model.layer_thickness_mm
    thickness = rng.uniform(t[0], t[1]) if isinstance(t, tuple) else t
    v = model.stack_variation_mm
    offset = rng.uniform(-v, v)
    edges = offset - thickness * np.arange(model.n_layers, dtype=np.float64)
    if model.gap_compression_mm > 0 and model.n_layers >= 3:
        # raise everything under layer 2, keeping at least a minimal gap
        edges[2:] += min(model.gap_compression_mm, thickness - MIN_GAP_MM)
    if np.any(np.diff(edges) >= 0):
        raise LayerkitError("stack edges must be strictly decreasing")
    return StackInstance(edges=edges, thickness_mm=thickness, offset_mm=offset)


@dataclass
class TactileSignalModel:
    """Per-class diagonal Gaussians over the 15 flux channels."""

    class_means: np.ndarray
    class_stds: np.ndarray
    separation: float = 1.0
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    episode_sigma: float = 0.0

    def __post_init__(self):
        self.class_means = np.asarray(self.class_means, dtype=np.float64).reshape(4, N_FLUX)
        self.class_stds = np.asarray(self.class_stds, dtype=np.float64).reshape(4, N_FLUX)
        if np.any(self.class_stds <= 0):
            raise ValueError("class stds must be positive")
        if self.separation < 0:
            raise ValueError("separation must be >= 0")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        if self.episode_sigma < 0:
            raise ValueError("episode_sigma must be >= 0")

    @property
    def scaled_means(self) -> np.ndarray:
        # origin-anchored, so all pairwise mean differences scale linearly
        return self.separation * self.class_means

    def sample(
        self,
        grasp_class: int,
        n: int,
        rng: np.random.Generator,
        episode_offset: np.ndarray | None = None,
    ) -> np.ndarray:
        """n readings of the given class; optional per-episode drift offset."""
        c = int(grasp_class)
        if not 0 <= c < 4:
            raise ValueError(f"grasp_class must be in [0, 3], got {grasp_class}")
        x = self.scaled_means[c] + self.class_stds[c] * rng.standard_normal((n, N_FLUX))
        if episode_offset is not None:
            x += episode_offset
        return x


def default_signal_model(
    separation: float = 1.0,
    overlap: float = DEFAULT_OVERLAP,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
    episode_sigma: float = 0.0,
) -> TactileSignalModel:
    """Build the two-knob default family (see module docstring)."""
    if not 0.0 <= overlap < 1.0:
        raise ValueError(f"overlap must be in [0, 1), got {overlap}")
    m3 = np.asarray(_MEAN_3_ANCHOR) + overlap * (
        np.asarray(_MEAN_2) - np.asarray(_MEAN_3_ANCHOR)
    )
    means = np.zeros((4, N_FLUX))
    means[0, :2] = _MEAN_0
    means[1, :2] = _MEAN_1
    means[2, :2] = _MEAN_2
    means[3, :2] = m3
    stds = np.ones((4, N_FLUX))
    for c in range(4):
        stds[c, :2] = _INFO_STD[c]
    return TactileSignalModel(
        class_means=means,
        class_stds=stds,
        separation=separation,
        sample_rate_hz=sample_rate_hz,
        episode_sigma=episode_sigma,
    )


@dataclass
class GraspOutcome:
    """Result of closing the fingers: ground truth plus the sensed window."""

    true_layers: int
    readings: np.ndarray
    finger_height_mm: float


def simulate_grasp(
    stack: StackInstance,
    d_vert_mm: float,
    signal: TactileSignalModel,
    window: int,
    rng: np.random.Generator,
    approach_height_mm: float = 0.0,
    episode_offset: np.ndarray | None = None,
) -> GraspOutcome:
    """Pinch at h = approach_height - d_vert and hold for `window` readings.

    Readings are drawn from the signal class min(true_layers, 3); the sensor
    cannot distinguish beyond 3 layers.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    h = approach_height_mm - d_vert_mm
    true_layers = stack.layers_at(h)
    readings = signal.sample(min(true_layers, 3), window, rng, episode_offset)
    return GraspOutcome(true_layers=true_layers, readings=readings, finger_height_mm=h)


def lift_check(
    outcome: GraspOutcome, p_slip: float, rng: np.random.Generator
) -> int:
    """Layers retained after a lift; each slips independently with p_slip."""
    if not 0.0 <= p_slip <= 1.0:
        raise ValueError(f"p_slip must be in [0, 1], got {p_slip}")
    return int(rng.binomial(outcome.true_layers, 1.0 - p_slip))


class ClothSim:
    """Environment facade for policies: per-trial stack + grasp/lift."""

    def __init__(self, stack_model: ClothStackModel, signal: TactileSignalModel):
        self.stack_model = stack_model
        self.signal = signal

    def new_trial(self, rng: np.random.Generator) -> "ClothSimTrial":
        return ClothSimTrial(self, reset_stack(self.stack_model, rng), rng)


class ClothSimTrial:
    """One draped stack; grasps re-pinch it (release keeps the drape)."""

    def __init__(self, sim: ClothSim, stack: StackInstance, rng: np.random.Generator):
        self.sim = sim
        self.stack = stack
        self._rng = rng

    def grasp(self, d_vert_mm: float, window: int) -> GraspOutcome:
        return simulate_grasp(
            self.stack,
            d_vert_mm,
            self.sim.signal,
            window,
            self._rng,
            approach_height_mm=self.sim.stack_model.approach_height_mm,
        )

    def lift(self, outcome: GraspOutcome) -> int:
        return lift_check(outcome, self.sim.stack_model.p_slip, self._rng)


def class_base_heights(model: ClothStackModel) -> np.ndarray:
    """Nominal pinch heights aimed at classes 0..3 on the undisplaced stack.

    Class 0 aims half a layer above the top edge; class c >= 1 aims at the
    center of the c-layer band.
    """
    t = model.nominal_thickness_mm
    return np.array([0.5 * t, -0.5 * t, -1.5 * t, -2.5 * t])


def generate_dataset(
    stack_model: ClothStackModel,
    signal: TactileSignalModel,
    n_episodes: int,
    approach_range_mm: float = 2.0,
    seed: int = 0,
) -> Dataset:
    """Collect n_episodes synthetic grasp episodes, labels from ground truth.

    Episodes aim at classes round-robin (0, 1, 2, 3, 0, ...): the pinch
    height is the class's nominal base plus a uniform offset in
    +-approach_range_mm, on a freshly reset stack. An episode whose true
    caught-layer count does not match its aimed class is redone with fresh
    draws, the way a collection run redoes a grasp that caught the wrong
    thing, so per-class episode counts are balanced by construction.
    Readings depend only on the label, so the redraws change nothing about
    the within-class signal distribution. Labels always come from the true
    caught count (capped at 3): if a config makes the aimed class
    unreachable, the episode keeps its last draw's honest label after a
    bounded number of retries.

    Each episode derives its own seed, so episode content is independent of
    collection order. One second of readings per episode at the signal's
    sample rate.
    """
    if n_episodes < 1:
        raise ValueError(f"n_episodes must be >= 1, got {n_episodes}")
    if approach_range_mm < 0:
        raise ValueError("approach_range_mm must be >= 0")
    bases = class_base_heights(stack_model)
    n_readings = int(round(signal.sample_rate_hz * 1.0))
    h0 = stack_model.approach_height_mm
    episodes = []
    for i in range(n_episodes):
        rng = generator(derive_seed(seed, _GEN_STREAM, i))
        intended = i % 4
        for _ in range(_MISS_RETRIES + 1):
            stack = reset_stack(stack_model, rng)
            offset = rng.uniform(-approach_range_mm, approach_range_mm)
            true = stack.layers_at(bases[intended] + offset)
            if min(true, 3) == intended:
                break
        label = min(true, 3)
        episode_offset = None
        if signal.episode_sigma > 0:
            episode_offset = signal.episode_sigma * rng.standard_normal(N_FLUX)
        outcome = simulate_grasp(
            stack,
            h0 - (bases[intended] + offset),
            signal,
            n_readings,
            rng,
            approach_height_mm=h0,
            episode_offset=episode_offset,
        )
        episodes.append(
            Episode(
                id=f"ep{i:05d}",
                label=label,
                readings=outcome.readings,
                approach_offset_mm=float(offset),
                sample_rate_hz=signal.sample_rate_hz,
            )
        )
    return Dataset(
        episodes=episodes,
        provenance=f"synthetic(seed={seed}, episodes={n_episodes})",
    )


def calibrate_signal_model(
    target=None,
    tol: float = 0.08,
    seed: int = 0,
    stack_model: ClothStackModel | None = None,
    n_episodes: int = 54,
    approach_range_mm: float = 2.0,
    cv_folds: int = 16,
    cv_k: int = 10,
    cv_train_fraction: float = 0.95,
    base_factory=default_signal_model,
) -> tuple[TactileSignalModel, float]:
    """Tune (separation, overlap) so CV per-class recalls match the target.

    The objective is the max absolute diagonal error of cross_validate's
    mean confusion against the target diagonal, evaluated on a dataset
    regenerated from each candidate with shared generation/CV seeds (paired
    evaluations, deterministic search). Search is staged coordinate
    refinement: a separation sweep, an overlap sweep, then local tightening,
    stopping early once the error is comfortably inside tol.

    Args:
        target: (4, 4) confusion or 4-vector of per-class recalls; defaults
            to REFERENCE_CONFUSION's diagonal.
        tol: max acceptable diagonal error.
        cv_folds: folds per candidate evaluation. Deliberately smaller than
            a reporting run; callers should re-verify the returned model at
            their reporting fold count.

    Returns:
        (model, achieved_error) for the best candidate.

    Raises:
        CalibrationError: no candidate reached tol.
    """
    if target is None:
        target_diag = np.diag(REFERENCE_CONFUSION).copy()
    else:
        t = np.asarray(target, dtype=np.float64)
        target_diag = np.diag(t).copy() if t.ndim == 2 else t.reshape(4)
    if stack_model is None:
        stack_model = ClothStackModel()
    from .evaluate import cross_validate  # local import avoids a cycle

    data_seed = derive_seed(seed, _CAL_DATA_STREAM)
    cv_seed = derive_seed(seed, _CAL_CV_STREAM)
    cache: dict[tuple[float, float], float] = {}

    def objective(s: float, g: float) -> float:
        key = (round(s, 6), round(g, 6))
        if key not in cache:
            sig = base_factory(separation=s, overlap=g)
            ds = generate_dataset(
                stack_model, sig, n_episodes, approach_range_mm, seed=data_seed
            )
            rep = cross_validate(ds, cv_k, cv_folds, cv_train_fraction, cv_seed)
            cache[key] = float(np.max(np.abs(rep.per_class_accuracy - target_diag)))
        return cache[key]

    early = 0.55 * tol
    best_s, best_g = 1.0, DEFAULT_OVERLAP
    best_err = objective(best_s, best_g)
    stages = [
        ("s", np.geomspace(0.55, 2.2, 5)),
        ("g", None),
        ("s", None),
        ("g", None),
    ]
    widths = {"g": (0.15, 0.07), "s": (1.25, 1.1)}
    g_round = s_round = 0
    for axis, grid in stages:
        if best_err <= early:
            break
        if grid is None:
            if axis == "g":
                w = widths["g"][min(g_round, 1)]
                g_round += 1
                grid = np.clip([best_g - w, best_g + w], 0.0, 0.95)
            else:
                w = widths["s"][min(s_round, 1)]
                s_round += 1
                grid = [best_s / w, best_s * w]
        for v in grid:
            s, g = (float(v), best_g) if axis == "s" else (best_s, float(v))
            err = objective(s, g)
            if err < best_err:
                best_s, best_g, best_err = s, g, err
    if best_err > tol:
        raise CalibrationError(best_err, tol)
    return base_factory(separation=best_s, overlap=best_g), best_err


# sim config files: {"n_layers", "layer_thickness_mm" (number or [lo, hi]),
# "stack_variation_mm", "gap_compression_mm", "p_slip", optional
# "approach_height_mm", and a "signal" block {"separation", "overlap",
# "sample_rate_hz", "episode_sigma", "seed"}. signal.seed is the default
# collection seed for the CLI.

_STACK_KEYS = {
    "n_layers",
    "layer_thickness_mm",
    "stack_variation_mm",
    "gap_compression_mm",
    "p_slip",
    "approach_height_mm",
    "signal",
}
_SIGNAL_KEYS = {"separation", "overlap", "sample_rate_hz", "episode_sigma", "seed"}


def sim_config_from_dict(obj: dict) -> tuple[ClothStackModel, TactileSignalModel, int]:
    """Parse a sim config object; returns (stack, signal, default_seed)."""
    if not isinstance(obj, dict):
        raise LayerkitError("sim config must be a JSON object")
    extra = obj.keys() - _STACK_KEYS
    if extra:
        raise LayerkitError(f"sim config has unknown keys {sorted(extra)}")
    sig_obj = obj.get("signal", {})
    if not isinstance(sig_obj, dict):
        raise LayerkitError("sim config 'signal' must be an object")
    sig_extra = sig_obj.keys() - _SIGNAL_KEYS
    if sig_extra:
        raise LayerkitError(f"signal config has unknown keys {sorted(sig_extra)}")
    t = obj.get("layer_thickness_mm", (3.0, 5.0))
    if isinstance(t, list):
        t = tuple(t)
    try:
        stack = ClothStackModel(
            n_layers=int(obj.get("n_layers", 4)),
            layer_thickness_mm=t,
            stack_variation_mm=float(obj.get("stack_variation_mm", 1.5)),
            gap_compression_mm=float(obj.get("gap_compression_mm", 0.0)),
            p_slip=float(obj.get("p_slip", 0.0)),
            approach_height_mm=float(obj.get("approach_height_mm", 0.0)),
        )
        signal = default_signal_model(
            separation=float(sig_obj.get("separation", 1.0)),
            overlap=float(sig_obj.get("overlap", DEFAULT_OVERLAP)),
            sample_rate_hz=float(sig_obj.get("sample_rate_hz", DEFAULT_SAMPLE_RATE_HZ)),
            episode_sigma=float(sig_obj.get("episode_sigma", 0.0)),
        )
    except (ValueError, TypeError) as exc:
        raise LayerkitError(f"invalid sim config: {exc}") from exc
    return stack, signal, int(sig_obj.get("seed", 0))


def load_sim_config(path) -> tuple[ClothStackModel, TactileSignalModel, int]:
    """Read a sim config JSON file."""
    with open(path, "r", encoding="utf-8") as f:
        try:
            obj = json.load(f)
        except json.JSONDecodeError as exc:
            raise LayerkitError(f"sim config is not valid JSON: {exc.msg}") from exc
    return sim_config_from_dict(obj)
