"""Grasp-adjustment policies and single-trial execution.

A trial tries to pick up exactly `target` cloth layers within a bounded
number of attempts. Per attempt the policy picks a downward displacement
d_vert, the fingers pinch and hold while the classifier labels every reading
in the window, and the window's mode becomes the attempt's prediction:

- fixed: one attempt at the configured d_vert, lifted unconditionally (the
  open-loop baseline; its classifier output is recorded but unused);
- random: d_vert drawn uniformly from the bounds each attempt, lifting only
  when the prediction matches the target;
- feedback: starts at the configured d_vert (top of the range by default)
  and steps 2 mm deeper when the prediction is below target, 2 mm shallower
  when above, clamped to the bounds; lifts on a predicted match.

A lift either retains the target count (success) or not. Failures are
attributed to exactly one cause:

- prediction: the classifier confirmed a wrong grasp (early stop with
  true != target), or attempts ran out after some attempt truly held the
  target but was misread;
- grasp: the right grasp slipped during the lift (true == target but
  retained != target), or no attempt ever truly held the target.

Per-trial randomness splits into independent derived streams (environment,
policy height sampling; the classifier owns its stream), so swapping the
classifier leaves the environment sequence untouched under the same seed.
"""

from dataclasses import dataclass, field

from .classify import aggregate_mode
from .rng import ENV_STREAM, POLICY_STREAM, derive_seed, generator

POLICY_KINDS = ("fixed", "random", "feedback")


@dataclass
class PolicyConfig:
    """Policy parameters for one method.

    target 3 is experimental (the sensor saturates at "3 or more"); opt in
    with allow_experimental_target.
    """

    kind: str
    target: int
    d_vert_init_mm: float = 0.0
    step_mm: float = 2.0
    bounds_mm: tuple[float, float] = (0.0, 8.0)
    max_attempts: int = 10
    window: int = 160
    lift_mm: float = 40.0
    allow_experimental_target: bool = False

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"kind must be one of {POLICY_KINDS}, got {self.kind!r}")
        hi = 3 if self.allow_experimental_target else 2
        if not 1 <= int(self.target) <= hi:
            raise ValueError(
                f"target must be in [1, {hi}] (3 needs allow_experimental_target)"
            )
        self.target = int(self.target)
        if not self.step_mm > 0:
            raise ValueError("step_mm must be positive")
        lo, high = float(self.bounds_mm[0]), float(self.bounds_mm[1])
        if not lo < high:
            raise ValueError(f"bounds_mm must satisfy low < high, got ({lo}, {high})")
        self.bounds_mm = (lo, high)
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if not self.lift_mm > 0:
            raise ValueError("lift_mm must be positive")


@dataclass
class AttemptRecord:
    """One pinch: commanded depth, ground truth, aggregated prediction."""

    index: int
    d_vert_mm: float
    true_layers: int
    predicted: int
    released: bool

    def to_dict(self) -> dict:
        return {
            "i": self.index,
            "d_vert_mm": self.d_vert_mm,
            "true": self.true_layers,
            "pred": self.predicted,
        }


@dataclass
class TrialResult:
    """Outcome of one trial plus its full attempt trace."""

    policy: str
    target: int
    success: bool
    failure: str
    attempts: list[AttemptRecord] = field(default_factory=list)
    retained: int | None = None
    seed: int = 0

    @property
    def attempts_used(self) -> int:
        return len(self.attempts)

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "target": self.target,
            "success": self.success,
            "failure": self.failure,
            "attempts": [a.to_dict() for a in self.attempts],
            "seed": self.seed,
        }


def next_height(cfg: PolicyConfig, d_vert_mm: float, predicted: int) -> float:
    """Feedback step: deeper when under target, shallower when over, clamped.

    Callers only step on a mismatch; a matching prediction returns d_vert
    unchanged.
    """
    if predicted == cfg.target:
        return d_vert_mm
    step = cfg.step_mm if predicted < cfg.target else -cfg.step_mm
    lo, hi = cfg.bounds_mm
    return min(max(d_vert_mm + step, lo), hi)


def attribute_failure(
    attempts: list[AttemptRecord],
    terminated_early: bool,
    retained: int | None,
    target: int,
) -> str:
    """Assign a failed trial to 'prediction' or 'grasp' (see module doc).

    The slip rule is checked first: a lift that started from a true-target
    grasp and came up wrong is a grasp failure regardless of why the trial
    stopped.
    """
    last = attempts[-1]
    if retained is not None and last.true_layers == target and retained != target:
        return "grasp"
    if terminated_early and last.true_layers != target:
        return "prediction"
    if not terminated_early and any(
        a.true_layers == target and a.predicted != target for a in attempts
    ):
        return "prediction"
    return "grasp"


def run_trial(cfg: PolicyConfig, env, classifier, seed: int = 0) -> TrialResult:
    """Execute one trial of the configured policy in the given environment.

    env must provide new_trial(rng) returning a context with
    grasp(d_vert_mm, window) -> GraspOutcome and lift(outcome) -> retained.
    classifier must provide predict_window(outcome) -> per-reading labels.
    """
    env_rng = generator(derive_seed(seed, ENV_STREAM))
    policy_rng = generator(derive_seed(seed, POLICY_STREAM))
    trial = env.new_trial(env_rng)

    lo, hi = cfg.bounds_mm
    d = cfg.d_vert_init_mm
    attempts: list[AttemptRecord] = []
    retained = None
    terminated_early = False
    for i in range(1, cfg.max_attempts + 1):
        if cfg.kind == "random":
            d = float(policy_rng.uniform(lo, hi))
        outcome = trial.grasp(d, cfg.window)
        predicted = aggregate_mode(classifier.predict_window(outcome))
        lift_now = cfg.kind == "fixed" or predicted == cfg.target
        attempts.append(
            AttemptRecord(
                index=i,
                d_vert_mm=d,
                true_layers=outcome.true_layers,
                predicted=predicted,
                released=not lift_now,
            )
        )
        if lift_now:
            retained = trial.lift(outcome)
            terminated_early = cfg.kind != "fixed"
            break
        if cfg.kind == "feedback":
            d = next_height(cfg, d, predicted)

    success = retained is not None and retained == cfg.target
    failure = (
        "none"
        if success
        else attribute_failure(attempts, terminated_early, retained, cfg.target)
    )
    return TrialResult(
        policy=cfg.kind,
        target=cfg.target,
        success=success,
        failure=failure,
        attempts=attempts,
        retained=retained,
        seed=int(seed),
    )
