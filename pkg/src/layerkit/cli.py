"""Command-line interface.

Subcommands cover the full pipeline: collect a synthetic dataset, train and
cross-validate the kNN classifier, run single policy trials, run experiment
grids, and re-render saved results. Every command takes --seed (64-bit,
default 0) and is deterministic given its inputs: the same invocation writes
byte-identical files.

Exit codes: 0 success, 2 usage/data errors (bad flags, malformed or missing
files, infeasible requests like k larger than the training set), 1 anything
unexpected.
"""

import argparse
import json
import sys

import numpy as np

from . import _kernels
from .classify import knn_fit, load_model, save_model, OracleClassifier, StochasticClassifier, REFERENCE_CONFUSION
from .dataset import SplitSpec, label_histogram, load_dataset, save_dataset, split_by_episode
from .errors import LayerkitError
from .evaluate import balanced_accuracy, cross_validate, evaluate, row_normalize
from .experiment import (
    derive_policy_defaults,
    parse_csv,
    render_table,
    run_experiment,
    summarize,
    write_outputs,
)
from .policy import PolicyConfig, run_trial
from .rng import derive_seed
from .sim import (
    ClothSim,
    ClothStackModel,
    default_signal_model,
    generate_dataset,
    load_sim_config,
)

_MAX_SEED = (1 << 64) - 1


def _seed_arg(value: str) -> int:
    try:
        seed = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {value!r}")
    if not 0 <= seed <= _MAX_SEED:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return seed


def _load_env(config_path):
    if config_path is None:
        return ClothStackModel(), default_signal_model(), 0
    return load_sim_config(config_path)


def _print_confusion(conf: np.ndarray) -> None:
    print("true\\pred" + "".join(f"{c:>8}" for c in range(4)))
    for t in range(4):
        print(f"{t:>9}" + "".join(f"{conf[t, p]:>8.3f}" for p in range(4)))


def _cmd_collect(args) -> int:
    stack, signal, cfg_seed = _load_env(args.config)
    seed = cfg_seed if args.seed is None else args.seed
    ds = generate_dataset(
        stack, signal, args.episodes, approach_range_mm=args.range_mm, seed=seed
    )
    save_dataset(ds, args.out)
    print(f"wrote {ds.n_episodes} episodes ({ds.total_readings} readings) to {args.out}")
    for c, (n_ep, n_rd) in label_histogram(ds).items():
        print(f"  class {c}: {n_ep} episodes, {n_rd} readings")
    return 0


def _cmd_train(args) -> int:
    ds = load_dataset(args.data, lenient=args.lenient)
    train, val = split_by_episode(ds, SplitSpec(args.split, args.seed))
    model = knn_fit(train, args.k)
    save_model(model, args.out, source=str(args.data), seed=args.seed)
    print(
        f"fit kNN (k={args.k}) on {train.n_episodes} episodes "
        f"({model.n_points} readings); wrote {args.out}"
    )
    if val.n_episodes:
        conf = evaluate(model, val)
        print(f"held-out confusion ({val.n_episodes} episodes, row-normalized):")
        _print_confusion(row_normalize(conf))
        print(f"held-out balanced accuracy: {balanced_accuracy(conf):.3f}")
    return 0


def _cmd_crossval(args) -> int:
    ds = load_dataset(args.data, lenient=args.lenient)
    report = cross_validate(ds, args.k, args.folds, args.split, args.seed)
    print(f"{report.folds}-fold cross-validation (k={args.k}, split={args.split}):")
    _print_confusion(report.mean_confusion)
    print(
        "balanced accuracy: "
        f"{report.balanced_accuracy_mean:.3f}±{report.balanced_accuracy_std:.3f}"
    )
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(report.to_dict(), f, indent=2)
            f.write("\n")
        print(f"wrote report to {args.out}")
    return 0


def _build_trial_policy(args, stack) -> PolicyConfig:
    defaults = derive_policy_defaults(stack, args.target)
    bounds = tuple(args.bounds) if args.bounds else defaults["bounds_mm"]
    if args.d_init is not None:
        init = args.d_init
    elif args.policy == "fixed":
        init = defaults["fixed_init"]
    else:
        init = defaults["feedback_init"]
    return PolicyConfig(
        kind=args.policy,
        target=args.target,
        d_vert_init_mm=init,
        step_mm=args.step,
        bounds_mm=bounds,
        max_attempts=args.max_attempts,
        window=args.window,
        allow_experimental_target=args.target == 3,
    )


def _cmd_trial(args) -> int:
    stack, signal, _ = _load_env(args.config)
    env = ClothSim(stack, signal)
    pc = _build_trial_policy(args, stack)
    if args.model:
        classifier = load_model(args.model)
    elif args.classifier == "oracle":
        classifier = OracleClassifier()
    else:
        classifier = StochasticClassifier(
            REFERENCE_CONFUSION, derive_seed(args.seed, 17)
        )
    result = run_trial(pc, env, classifier, args.seed)
    for a in result.attempts:
        mark = "lift" if not a.released else "release"
        print(
            f"attempt {a.index}: d_vert={a.d_vert_mm:.1f}mm "
            f"true={a.true_layers} pred={a.predicted} -> {mark}"
        )
    print(f"success: {str(result.success).lower()} (failure: {result.failure})")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(result.to_dict(), f, indent=2)
            f.write("\n")
    return 0


def _cmd_experiment(args) -> int:
    with open(args.config, "r", encoding="utf-8") as f:
        try:
            config = json.load(f)
        except json.JSONDecodeError as exc:
            raise LayerkitError(f"experiment config is not valid JSON: {exc.msg}")
    if args.seed is not None:
        config["seed"] = args.seed
    result = run_experiment(config, verbose=args.verbose)
    text, _ = summarize(result)
    print(text, end="")
    csv_path, json_path = write_outputs(result, args.out_prefix)
    print(f"wrote {csv_path} and {json_path}")
    return 0


def _cmd_report(args) -> int:
    with open(args.csv, "r", encoding="utf-8") as f:
        rows = parse_csv(f.read())
    print(render_table(rows), end="")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="layerkit",
        description="Tactile layer-count classification and grasp-policy toolkit "
        f"(kNN backend: {_kernels.BACKEND})",
    )
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("collect", help="generate a synthetic episode dataset")
    c.add_argument("--config", help="sim config JSON (defaults when omitted)")
    c.add_argument("--episodes", type=int, default=54)
    c.add_argument("--range-mm", type=float, default=2.0, dest="range_mm")
    c.add_argument("--out", required=True)
    c.add_argument("--seed", type=_seed_arg, default=None,
                   help="collection seed (default: signal.seed from config, else 0)")
    c.set_defaults(func=_cmd_collect)

    t = sub.add_parser("train", help="fit the kNN classifier on a dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--k", type=int, default=10)
    t.add_argument("--split", type=float, default=0.95)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=_seed_arg, default=0)
    t.add_argument("--lenient", action="store_true",
                   help="ignore unknown keys in episode records")
    t.set_defaults(func=_cmd_train)

    x = sub.add_parser("crossval", help="episode-grouped cross-validation")
    x.add_argument("--data", required=True)
    x.add_argument("--folds", type=int, default=100)
    x.add_argument("--k", type=int, default=10)
    x.add_argument("--split", type=float, default=0.95)
    x.add_argument("--out", help="write the report JSON here")
    x.add_argument("--seed", type=_seed_arg, default=0)
    x.add_argument("--lenient", action="store_true")
    x.set_defaults(func=_cmd_crossval)

    r = sub.add_parser("trial", help="run one policy trial in the simulator")
    r.add_argument("--config", help="sim config JSON")
    r.add_argument("--policy", required=True, choices=["fixed", "random", "feedback"])
    r.add_argument("--target", type=int, required=True, choices=[1, 2, 3])
    src = r.add_mutually_exclusive_group()
    src.add_argument("--model", help="kNN model JSON to classify with")
    src.add_argument("--classifier", choices=["oracle", "reference"],
                     default="reference",
                     help="built-in classifier (default reference stochastic)")
    r.add_argument("--d-init", type=float, default=None, dest="d_init")
    r.add_argument("--step", type=float, default=2.0)
    r.add_argument("--bounds", type=float, nargs=2, default=None,
                   metavar=("LOW", "HIGH"))
    r.add_argument("--max-attempts", type=int, default=10, dest="max_attempts")
    r.add_argument("--window", type=int, default=160)
    r.add_argument("--out", help="write the trial record JSON here")
    r.add_argument("--seed", type=_seed_arg, default=0)
    r.set_defaults(func=_cmd_trial)

    e = sub.add_parser("experiment", help="run a policy-comparison grid")
    e.add_argument("--config", required=True)
    e.add_argument("--out-prefix", required=True, dest="out_prefix")
    e.add_argument("--seed", type=_seed_arg, default=None,
                   help="override the config's seed")
    e.add_argument("--verbose", action="store_true",
                   help="keep per-trial records in the JSON output")
    e.set_defaults(func=_cmd_experiment)

    g = sub.add_parser("report", help="re-render a results CSV as a text table")
    g.add_argument("--csv", required=True)
    g.set_defaults(func=_cmd_report)
    return p


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except LayerkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
