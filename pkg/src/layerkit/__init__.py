"""layerkit: tactile layer-count classification and grasp policies.

Pipeline: simulate a draped cloth stack and its fingertip flux signals
(sim), collect episode datasets (dataset), train/evaluate a kNN layer
classifier (classify, evaluate), and run closed-loop grasp policies and
experiment grids on top (policy, experiment). Everything is deterministic
given a 64-bit seed.
"""

from ._kernels import BACKEND, available_backends
from .classify import (
    KnnModel,
    Normalizer,
    OracleClassifier,
    REFERENCE_CONFUSION,
    StochasticClassifier,
    aggregate_mode,
    degrade_confusion,
    fit_normalizer,
    knn_fit,
    knn_predict_one,
    load_model,
    save_model,
)
from .dataset import (
    Dataset,
    Episode,
    SplitSpec,
    filter_ungrasped,
    load_dataset,
    make_cv_folds,
    save_dataset,
    split_by_episode,
)
from .evaluate import (
    CvReport,
    balanced_accuracy,
    cross_validate,
    evaluate,
    per_class_accuracy,
    row_normalize,
)
from .experiment import (
    ExperimentResult,
    compare_methods,
    run_experiment,
    summarize,
)
from .policy import (
    AttemptRecord,
    PolicyConfig,
    TrialResult,
    attribute_failure,
    next_height,
    run_trial,
)
from .sim import (
    ClothSim,
    ClothStackModel,
    GraspOutcome,
    StackInstance,
    TactileSignalModel,
    calibrate_signal_model,
    default_signal_model,
    generate_dataset,
    lift_check,
    reset_stack,
    simulate_grasp,
)

__version__ = "0.1.0"
