"""Experiment harness: policy x condition grids with seeded trials.

An experiment config (JSON object) looks like:

    {
      "seed": 0,
      "trials_per_cell": 100,
      "env": { ...sim config... },
      "classifier": {"type": "stochastic", "confusion": "reference"},
      "methods": [
        {"name": "fixed-open-loop", "kind": "fixed", "target": 1},
        {"name": "random-tactile", "kind": "random", "target": 1},
        {"name": "feedback-tactile", "kind": "feedback", "target": 1}
      ],
      "conditions": [
        {"name": "default"},
        {"name": "slippery", "env": {"p_slip": 0.1}}
      ]
    }

Classifier specs: {"type": "oracle"}, {"type": "knn", "path": "model.json"},
or {"type": "stochastic", "confusion": "reference" | [[...4x4...]],
"degrade": {"delta": 0.2, "classes": [2, 3]}}. Conditions inherit the
top-level env/classifier and may override either; methods may override any
PolicyConfig field, with geometry defaults derived from the condition's
stack (see derive_policy_defaults).

Seeding: the trial at (condition ci, method mi, trial t) runs with
derive_seed(seed, ci, mi, t), independent of the classifier spec, so runs
that differ only in classifier are seed-paired: identical stacks, identical
attempt-level environment randomness.

Aggregate rows carry success / prediction_failures / grasp_failures (which
partition the trials), and attempt-count mean +- std (ddof=1). The CSV and
the rendered text table show the same one-decimal attempt numbers; fixed
methods render as "1 (fixed)".
"""

import copy
import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .classify import (
    REFERENCE_CONFUSION,
    OracleClassifier,
    StochasticClassifier,
    degrade_confusion,
    load_model,
)
from .errors import LayerkitError, MethodNotFoundError
from .policy import POLICY_KINDS, PolicyConfig, run_trial
from .rng import CLASSIFIER_STREAM, derive_seed
from .sim import ClothSim, ClothStackModel, sim_config_from_dict

CSV_COLUMNS = (
    "condition",
    "method",
    "target",
    "success",
    "prediction_failures",
    "grasp_failures",
    "trials",
    "attempts_mean",
    "attempts_std",
)

_METHOD_KEYS = {
    "name",
    "kind",
    "target",
    "d_vert_init_mm",
    "step_mm",
    "bounds_mm",
    "max_attempts",
    "window",
    "lift_mm",
    "allow_experimental_target",
}
_TOP_KEYS = {"seed", "trials_per_cell", "env", "classifier", "methods", "conditions"}
_CONDITION_KEYS = {"name", "env", "classifier"}


def derive_policy_defaults(stack_model: ClothStackModel, target: int) -> dict:
    """Geometry-tuned policy defaults for a target on the given stack.

    The tuned depth for c layers is the center of the c-layer band of the
    nominal (undisplaced) stack: d_c = (c - 0.5) * thickness below the
    approach datum. Bounds run from 2 mm above the 1-layer depth to 2 mm
    below the 2-layer depth; feedback starts at the top of that range.
    """
    t = stack_model.nominal_thickness_mm
    d1 = 0.5 * t
    d2 = 1.5 * t
    lo, hi = d1 - 2.0, d2 + 2.0
    d_target = (target - 0.5) * t
    return {
        "bounds_mm": (lo, hi),
        "fixed_init": d_target,
        "feedback_init": lo,
    }


def _method_to_policy(method: dict, stack_model: ClothStackModel) -> PolicyConfig:
    extra = method.keys() - _METHOD_KEYS
    if extra:
        raise LayerkitError(f"method has unknown keys {sorted(extra)}")
    if "name" not in method or "kind" not in method or "target" not in method:
        raise LayerkitError("method needs 'name', 'kind' and 'target'")
    kind = method["kind"]
    if kind not in POLICY_KINDS:
        raise LayerkitError(
            f"method kind must be one of {list(POLICY_KINDS)}, got {kind!r}"
        )
    target = int(method["target"])
    defaults = derive_policy_defaults(stack_model, target)
    bounds = method.get("bounds_mm", defaults["bounds_mm"])
    if isinstance(bounds, list):
        bounds = tuple(bounds)
    init = method.get(
        "d_vert_init_mm",
        defaults["fixed_init"] if kind == "fixed" else defaults["feedback_init"],
    )
    try:
        return PolicyConfig(
            kind=kind,
            target=target,
            d_vert_init_mm=float(init),
            step_mm=float(method.get("step_mm", 2.0)),
            bounds_mm=bounds,
            max_attempts=int(method.get("max_attempts", 10)),
            window=int(method.get("window", 160)),
            lift_mm=float(method.get("lift_mm", 40.0)),
            allow_experimental_target=bool(
                method.get("allow_experimental_target", False)
            ),
        )
    except ValueError as exc:
        raise LayerkitError(f"invalid method {method.get('name')!r}: {exc}") from exc


class _ClassifierFactory:
    """Builds the per-trial classifier for a condition."""

    def __init__(self, spec: dict, model_cache: dict):
        if not isinstance(spec, dict) or "type" not in spec:
            raise LayerkitError("classifier spec must be an object with 'type'")
        self.kind = spec["type"]
        if self.kind == "oracle":
            self._oracle = OracleClassifier()
        elif self.kind == "knn":
            path = spec.get("path")
            if not path:
                raise LayerkitError("knn classifier spec needs 'path'")
            if path not in model_cache:
                model_cache[path] = load_model(path)
            self._model = model_cache[path]
        elif self.kind == "stochastic":
            conf = spec.get("confusion", "reference")
            if isinstance(conf, str):
                if conf != "reference":
                    raise LayerkitError(
                        f"unknown confusion preset {conf!r} (use 'reference')"
                    )
                conf = REFERENCE_CONFUSION
            conf = np.asarray(conf, dtype=np.float64)
            degrade = spec.get("degrade")
            if degrade:
                conf = degrade_confusion(
                    conf,
                    float(degrade.get("delta", 0.2)),
                    tuple(degrade.get("classes", (2, 3))),
                )
            try:
                StochasticClassifier(conf)  # validate once, loudly
            except ValueError as exc:
                raise LayerkitError(f"invalid stochastic confusion: {exc}") from exc
            self._confusion = conf
        else:
            raise LayerkitError(
                f"classifier type must be oracle|knn|stochastic, got {self.kind!r}"
            )

    def build(self, trial_seed: int):
        if self.kind == "oracle":
            return self._oracle
        if self.kind == "knn":
            return self._model
        return StochasticClassifier(
            self._confusion, derive_seed(trial_seed, CLASSIFIER_STREAM)
        )


@dataclass
class ExperimentResult:
    """Aggregated rows plus (optionally) every per-trial record."""

    rows: list[dict]
    seed: int
    trials_per_cell: int
    per_trial: dict | None = None

    def to_dict(self) -> dict:
        out = {
            "seed": self.seed,
            "trials_per_cell": self.trials_per_cell,
            "rows": self.rows,
        }
        if self.per_trial is not None:
            out["per_trial"] = self.per_trial
        return out


def _validate_config(config: dict) -> dict:
    if not isinstance(config, dict):
        raise LayerkitError("experiment config must be a JSON object")
    extra = config.keys() - _TOP_KEYS
    if extra:
        raise LayerkitError(f"experiment config has unknown keys {sorted(extra)}")
    if "methods" not in config or not config["methods"]:
        raise LayerkitError("experiment config needs a non-empty 'methods' list")
    cfg = copy.deepcopy(config)
    cfg.setdefault("seed", 0)
    cfg.setdefault("trials_per_cell", 100)
    cfg.setdefault("env", {})
    cfg.setdefault("classifier", {"type": "stochastic", "confusion": "reference"})
    cfg.setdefault("conditions", [{"name": "default"}])
    if int(cfg["trials_per_cell"]) < 1:
        raise LayerkitError("trials_per_cell must be >= 1")
    names = [m.get("name") for m in cfg["methods"]]
    if len(set(names)) != len(names):
        raise LayerkitError("method names must be unique")
    cnames = [c.get("name") for c in cfg["conditions"]]
    if len(set(cnames)) != len(cnames):
        raise LayerkitError("condition names must be unique")
    for c in cfg["conditions"]:
        extra = c.keys() - _CONDITION_KEYS
        if extra:
            raise LayerkitError(f"condition has unknown keys {sorted(extra)}")
        if not c.get("name"):
            raise LayerkitError("every condition needs a 'name'")
    return cfg


def run_experiment(config: dict, verbose: bool = False) -> ExperimentResult:
    """Run every (condition, method) cell of the config.

    Returns aggregate rows in config order. With verbose=True the result
    also carries per-trial records keyed "condition/method".
    """
    cfg = _validate_config(config)
    seed = int(cfg["seed"])
    trials_per_cell = int(cfg["trials_per_cell"])
    model_cache: dict = {}
    rows = []
    per_trial: dict[str, list] = {}
    for ci, cond in enumerate(cfg["conditions"]):
        env_obj = copy.deepcopy(cfg["env"])
        env_obj.update(cond.get("env", {}))
        # nested signal overrides merge instead of replacing the block
        if "signal" in cfg["env"] and "signal" in cond.get("env", {}):
            sig = dict(cfg["env"]["signal"])
            sig.update(cond["env"]["signal"])
            env_obj["signal"] = sig
        stack_model, signal, _ = sim_config_from_dict(env_obj)
        env = ClothSim(stack_model, signal)
        factory = _ClassifierFactory(
            cond.get("classifier", cfg["classifier"]), model_cache
        )
        for mi, method in enumerate(cfg["methods"]):
            pc = _method_to_policy(method, stack_model)
            successes = 0
            pred_fail = 0
            grasp_fail = 0
            attempts_used = []
            records = []
            for t in range(trials_per_cell):
                trial_seed = derive_seed(seed, ci, mi, t)
                result = run_trial(pc, env, factory.build(trial_seed), trial_seed)
                successes += result.success
                pred_fail += result.failure == "prediction"
                grasp_fail += result.failure == "grasp"
                attempts_used.append(result.attempts_used)
                if verbose:
                    records.append(result.to_dict())
            att = np.asarray(attempts_used, dtype=np.float64)
            rows.append(
                {
                    "condition": cond["name"],
                    "method": method["name"],
                    "kind": pc.kind,
                    "target": pc.target,
                    "success": successes,
                    "prediction_failures": pred_fail,
                    "grasp_failures": grasp_fail,
                    "trials": trials_per_cell,
                    "attempts_mean": float(att.mean()),
                    "attempts_std": float(att.std(ddof=1)) if att.size > 1 else 0.0,
                }
            )
            if verbose:
                per_trial[f"{cond['name']}/{method['name']}"] = records
    return ExperimentResult(
        rows=rows,
        seed=seed,
        trials_per_cell=trials_per_cell,
        per_trial=per_trial if verbose else None,
    )


def _format_attempts(row: dict) -> str:
    # rows parsed back from CSV have no "kind" and render numerically; a
    # mean-1.0/std-0.0 heuristic could mislabel a lucky feedback row and
    # hide its prediction failures behind the fixed-style "-"
    if row.get("kind") == "fixed":
        return "1 (fixed)"
    return f"{row['attempts_mean']:.1f}±{row['attempts_std']:.1f}"


def render_table(rows: list[dict]) -> str:
    """Fixed-width text table of aggregate rows (header-only when empty)."""
    header = (
        "condition",
        "method",
        "target",
        "success",
        "pred.fail",
        "grasp.fail",
        "attempts",
    )
    table = [header]
    for r in rows:
        n = r["trials"]
        pf = "-" if r.get("kind") == "fixed" else f"{r['prediction_failures']}/{n}"
        table.append(
            (
                str(r["condition"]),
                str(r["method"]),
                str(r["target"]),
                f"{r['success']}/{n}",
                pf,
                f"{r['grasp_failures']}/{n}",
                _format_attempts(r),
            )
        )
    widths = [max(len(row[c]) for row in table) for c in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
             for row in table]
    return "\n".join(lines) + "\n"


def to_csv(rows: list[dict]) -> str:
    """CSV with the pinned column set; attempts at one decimal."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(
            [
                r["condition"],
                r["method"],
                r["target"],
                r["success"],
                r["prediction_failures"],
                r["grasp_failures"],
                r["trials"],
                f"{r['attempts_mean']:.1f}",
                f"{r['attempts_std']:.1f}",
            ]
        )
    return buf.getvalue()


def parse_csv(text: str) -> list[dict]:
    """Rows back from to_csv output (kind is not stored in the CSV)."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise LayerkitError("results CSV is empty (no header)") from None
    if tuple(header) != CSV_COLUMNS:
        raise LayerkitError(f"unexpected CSV header {header}")
    rows = []
    for rec in reader:
        if not rec:
            continue
        if len(rec) != len(CSV_COLUMNS):
            raise LayerkitError(f"bad CSV row {rec}")
        rows.append(
            {
                "condition": rec[0],
                "method": rec[1],
                "target": int(rec[2]),
                "success": int(rec[3]),
                "prediction_failures": int(rec[4]),
                "grasp_failures": int(rec[5]),
                "trials": int(rec[6]),
                "attempts_mean": float(rec[7]),
                "attempts_std": float(rec[8]),
            }
        )
    return rows


def summarize(result: ExperimentResult) -> tuple[str, str]:
    """(text table, CSV) carrying the same numbers."""
    return render_table(result.rows), to_csv(result.rows)


def write_outputs(result: ExperimentResult, prefix: str) -> tuple[str, str]:
    """Write <prefix>.csv and <prefix>.json; returns the two paths."""
    csv_path = f"{prefix}.csv"
    json_path = f"{prefix}.json"
    with open(csv_path, "w", encoding="utf-8") as f:
        f.write(to_csv(result.rows))
    with open(json_path, "w", encoding="utf-8") as f:
        json.dump(result.to_dict(), f, indent=2)
        f.write("\n")
    return csv_path, json_path


def compare_methods(result, method_a: str, method_b: str) -> dict:
    """Per-condition success comparison of two methods plus win/tie/loss.

    Accepts an ExperimentResult or a plain row list. Raises
    MethodNotFoundError (listing valid names) for unknown methods.
    """
    rows = result.rows if isinstance(result, ExperimentResult) else result
    methods = {r["method"] for r in rows}
    for name in (method_a, method_b):
        if name not in methods:
            raise MethodNotFoundError(name, sorted(methods))
    per_condition = {}
    wins = ties = losses = 0
    conditions = []
    for r in rows:
        if r["condition"] not in conditions:
            conditions.append(r["condition"])
    by_key = {(r["condition"], r["method"]): r for r in rows}
    for cond in conditions:
        a = by_key.get((cond, method_a))
        b = by_key.get((cond, method_b))
        if a is None or b is None:
            continue
        if a["success"] > b["success"]:
            per_condition[cond] = "win"
            wins += 1
        elif a["success"] < b["success"]:
            per_condition[cond] = "loss"
            losses += 1
        else:
            per_condition[cond] = "tie"
            ties += 1
    return {
        "method_a": method_a,
        "method_b": method_b,
        "per_condition": per_condition,
        "wins": wins,
        "ties": ties,
        "losses": losses,
    }
