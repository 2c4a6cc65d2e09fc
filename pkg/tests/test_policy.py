"""Policy state machine: stepping, termination, failure attribution."""

import math

import numpy as np
import pytest

from conftest import ScriptedClassifier, StubEnv
from layerkit.classify import OracleClassifier
from layerkit.policy import (
    AttemptRecord,
    PolicyConfig,
    attribute_failure,
    next_height,
    run_trial,
)
from layerkit.rng import generator
from layerkit.sim import ClothSim, ClothStackModel, default_signal_model


def _staircase(thickness):
    """True layers for depth d on an undisplaced uniform stack."""

    def layers(d):
        if d < 0:
            return 0
        return int(d // thickness) + 1

    return layers


def _attempt(i, d, true, pred, released=True):
    return AttemptRecord(
        index=i, d_vert_mm=d, true_layers=true, predicted=pred, released=released
    )


def test_policy_config_validation():
    with pytest.raises(ValueError):
        PolicyConfig(kind="greedy", target=1)
    with pytest.raises(ValueError):
        PolicyConfig(kind="feedback", target=0)
    with pytest.raises(ValueError):
        PolicyConfig(kind="feedback", target=3)
    cfg = PolicyConfig(kind="feedback", target=3, allow_experimental_target=True)
    assert cfg.target == 3
    with pytest.raises(ValueError):
        PolicyConfig(kind="fixed", target=1, step_mm=0.0)
    with pytest.raises(ValueError):
        PolicyConfig(kind="fixed", target=1, bounds_mm=(4.0, 4.0))
    with pytest.raises(ValueError):
        PolicyConfig(kind="fixed", target=1, max_attempts=0)
    with pytest.raises(ValueError):
        PolicyConfig(kind="fixed", target=1, window=0)


def test_next_height_steps_toward_target_and_clamps():
    cfg = PolicyConfig(kind="feedback", target=1, step_mm=2.0, bounds_mm=(0.0, 12.0))
    assert next_height(cfg, 10.0, 2) == 8.0  # too many layers: go shallower
    cfg2 = PolicyConfig(kind="feedback", target=2, step_mm=2.0, bounds_mm=(0.0, 12.0))
    assert next_height(cfg2, 10.0, 0) == 12.0  # too few: go deeper
    assert next_height(cfg2, 12.0, 0) == 12.0  # clamped at the deep bound
    assert next_height(cfg, 0.0, 3) == 0.0  # clamped at the shallow bound
    assert next_height(cfg, 6.0, 1) == 6.0  # match: unchanged


def test_feedback_two_attempt_hand_example():
    # stack where depth 0 grasps 2 layers and depth -2 grasps 1; feedback
    # aiming at 1 layer starts at 0, sees too many, raises by one step and
    # succeeds on the second pinch
    env = StubEnv(lambda d: 2 if d >= 0 else 1)
    cfg = PolicyConfig(
        kind="feedback",
        target=1,
        d_vert_init_mm=0.0,
        step_mm=2.0,
        bounds_mm=(-4.0, 4.0),
    )
    result = run_trial(cfg, env, OracleClassifier(), seed=0)
    assert result.success
    assert result.failure == "none"
    assert result.attempts_used == 2
    first, second = result.attempts
    assert (first.d_vert_mm, first.true_layers, first.predicted) == (0.0, 2, 2)
    assert first.released
    assert (second.d_vert_mm, second.true_layers, second.predicted) == (-2.0, 1, 1)
    assert not second.released
    assert result.retained == 1


def test_fixed_lifts_once_unconditionally():
    env = StubEnv(lambda d: 2)  # never the target
    cfg = PolicyConfig(kind="fixed", target=1, d_vert_init_mm=3.0)
    result = run_trial(cfg, env, OracleClassifier(), seed=1)
    assert result.attempts_used == 1
    assert not result.success
    assert result.failure == "grasp"  # never truly held the target
    assert env.trials[0].lifts == 1
    assert env.trials[0].grasps == [3.0]


def test_fixed_success_on_target_band():
    env = StubEnv(_staircase(4.0))
    cfg = PolicyConfig(kind="fixed", target=1, d_vert_init_mm=2.0)
    result = run_trial(cfg, env, OracleClassifier(), seed=2)
    assert result.success
    assert result.attempts_used == 1
    assert result.attempts[0].released is False


def test_premature_termination_is_prediction_failure():
    # classifier says "target" on attempt 1 while the grasp is wrong
    env = StubEnv(lambda d: 2)
    cfg = PolicyConfig(kind="feedback", target=1, d_vert_init_mm=0.0)
    result = run_trial(cfg, env, ScriptedClassifier([1]), seed=3)
    assert not result.success
    assert result.failure == "prediction"
    assert result.attempts_used == 1
    assert result.retained == 2


def test_exhaustion_with_misread_target_is_prediction_failure():
    # grasps alternate 1 (the target) and 2, classifier always says 3:
    # never lifts, runs out of attempts having truly held the target
    env = StubEnv(_staircase(4.0))
    cfg = PolicyConfig(
        kind="feedback",
        target=1,
        d_vert_init_mm=2.0,
        max_attempts=4,
        bounds_mm=(0.0, 8.0),
    )
    result = run_trial(cfg, env, ScriptedClassifier([3, 3, 3, 3]), seed=4)
    assert not result.success
    assert result.attempts_used == 4
    assert result.failure == "prediction"
    assert result.retained is None


def test_exhaustion_without_target_is_grasp_failure():
    env = StubEnv(lambda d: 3)  # the target band is unreachable
    cfg = PolicyConfig(
        kind="feedback", target=1, d_vert_init_mm=4.0, max_attempts=5
    )
    result = run_trial(cfg, env, OracleClassifier(), seed=5)
    assert not result.success
    assert result.attempts_used == 5
    assert result.failure == "grasp"


def test_slip_during_lift_is_grasp_failure():
    env = StubEnv(_staircase(4.0), retained_fn=lambda true: true - 1)
    cfg = PolicyConfig(kind="feedback", target=1, d_vert_init_mm=2.0)
    result = run_trial(cfg, env, OracleClassifier(), seed=6)
    assert not result.success
    assert result.failure == "grasp"
    assert result.retained == 0


def test_attribute_failure_canonical_cases():
    # early termination with a wrong grasp: prediction failure
    early = [_attempt(1, 0.0, true=2, pred=1, released=False)]
    assert attribute_failure(early, True, retained=2, target=1) == "prediction"
    # exhausted attempts, one truly held the target but was misread
    exhausted = [
        _attempt(1, 0.0, true=2, pred=3),
        _attempt(2, 2.0, true=1, pred=2),
        _attempt(3, 4.0, true=2, pred=3),
    ]
    assert attribute_failure(exhausted, False, retained=None, target=1) == "prediction"
    # lifted the right grasp, a layer slipped: grasp failure
    slipped = [_attempt(1, 2.0, true=1, pred=1, released=False)]
    assert attribute_failure(slipped, True, retained=0, target=1) == "grasp"
    # exhausted without ever holding the target: grasp failure
    never = [_attempt(1, 0.0, true=2, pred=2), _attempt(2, 0.0, true=3, pred=3)]
    assert attribute_failure(never, False, retained=None, target=1) == "grasp"


def test_slip_rule_overrides_early_termination():
    # terminated early AND last grasp was truly on target: slip wins
    attempts = [_attempt(1, 2.0, true=1, pred=1, released=False)]
    assert attribute_failure(attempts, True, retained=2, target=1) == "grasp"


def test_feedback_converges_on_simulated_stack():
    model = ClothStackModel(
        n_layers=4, layer_thickness_mm=4.0, stack_variation_mm=0.0
    )
    env = ClothSim(model, default_signal_model(sample_rate_hz=20.0))
    cfg = PolicyConfig(
        kind="feedback",
        target=2,
        d_vert_init_mm=0.0,
        step_mm=2.0,
        bounds_mm=(0.0, 8.0),
        window=3,
    )
    result = run_trial(cfg, env, OracleClassifier(), seed=7)
    assert result.success
    bound = 1 + math.ceil((8.0 - 0.0) / 2.0)
    assert result.attempts_used <= bound
    depths = [a.d_vert_mm for a in result.attempts]
    assert depths == sorted(depths)  # monotone descent toward the band


def test_random_heights_are_uniform_within_bounds():
    env = StubEnv(lambda d: 0)  # never matches, so every attempt redraws
    cfg = PolicyConfig(
        kind="random",
        target=2,
        bounds_mm=(1.0, 9.0),
        max_attempts=10,
    )
    depths = []
    for seed in range(60):
        result = run_trial(cfg, env, OracleClassifier(), seed=seed)
        depths.extend(a.d_vert_mm for a in result.attempts)
    depths = np.asarray(depths)
    assert depths.size == 600
    assert depths.min() >= 1.0 and depths.max() <= 9.0
    quartiles = np.histogram(depths, bins=4, range=(1.0, 9.0))[0] / depths.size
    assert np.max(np.abs(quartiles - 0.25)) < 0.06
    # same seed reproduces the height sequence exactly
    a = run_trial(cfg, env, OracleClassifier(), seed=123)
    b = run_trial(cfg, env, OracleClassifier(), seed=123)
    assert [x.d_vert_mm for x in a.attempts] == [x.d_vert_mm for x in b.attempts]


def test_classifier_stream_is_independent_of_environment():
    # swapping the classifier must not change the environment sequence:
    # attempt 1 sees the same commanded depth and the same true layer count
    model = ClothStackModel()
    env = ClothSim(model, default_signal_model(sample_rate_hz=20.0))
    cfg = PolicyConfig(kind="feedback", target=1, d_vert_init_mm=0.0, window=4)
    for seed in range(10):
        a = run_trial(cfg, env, OracleClassifier(), seed=seed)
        b = run_trial(cfg, env, ScriptedClassifier([3]), seed=seed)
        assert a.attempts[0].d_vert_mm == b.attempts[0].d_vert_mm
        assert a.attempts[0].true_layers == b.attempts[0].true_layers


def test_window_size_reaches_classifier():
    seen = []

    class Spy:
        def predict_window(self, outcome):
            seen.append(outcome.readings.shape)
            return np.zeros(outcome.readings.shape[0], dtype=np.int32)

    env = StubEnv(lambda d: 1)
    cfg = PolicyConfig(kind="fixed", target=1, window=7)
    run_trial(cfg, env, Spy(), seed=8)
    assert seen == [(7, 15)]


def test_attempt_prediction_is_window_mode():
    env = StubEnv(lambda d: 1)

    class Mixed:
        def predict_window(self, outcome):
            n = outcome.readings.shape[0]
            preds = np.zeros(n, dtype=np.int32)
            preds[: n // 3] = 2  # minority vote
            preds[n // 3 :] = 1
            return preds

    cfg = PolicyConfig(kind="feedback", target=1, window=9)
    result = run_trial(cfg, env, Mixed(), seed=9)
    assert result.attempts[0].predicted == 1
    assert result.success


def test_trial_record_schema():
    env = StubEnv(_staircase(4.0))
    cfg = PolicyConfig(kind="feedback", target=1, d_vert_init_mm=2.0)
    result = run_trial(cfg, env, OracleClassifier(), seed=10)
    obj = result.to_dict()
    assert set(obj) == {"policy", "target", "success", "failure", "attempts", "seed"}
    assert obj["policy"] == "feedback"
    assert obj["failure"] == "none"
    assert obj["seed"] == 10
    assert set(obj["attempts"][0]) == {"i", "d_vert_mm", "true", "pred"}


def test_max_attempts_is_respected():
    env = StubEnv(lambda d: 0)
    cfg = PolicyConfig(kind="random", target=2, max_attempts=3)
    result = run_trial(cfg, env, OracleClassifier(), seed=11)
    assert result.attempts_used == 3
    assert len(env.trials) == 1
    assert env.trials[0].lifts == 0
