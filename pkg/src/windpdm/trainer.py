"""Offline model generation: per turbine, end to end.

For each planned turbine: load its history, select parameters, mine the
alarm patterns, build the six horizon datasets, train and evaluate six
forests, and persist six bundles plus reports. One turbine's failure never
blocks the rest; every planned (turbine, horizon) pair ends up either
completed or carrying a skip reason.

All randomness flows from the plan seed through a documented derivation:
``derive_seed(plan_seed, turbine, horizon, purpose)`` is the first 8 bytes
of sha256("<seed>|<turbine>|<horizon>|<purpose>") with purpose "split" or
"forest"; the forest derives per-tree generators from (seed, tree_index).
Bundles carry the plan's created_at stamp, so rerunning an identical plan
reproduces byte-identical model files.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import label_records, stratified_split
from .errors import DataError, PlanInvalid, RuntimeFailure
from .features import FeatureMatrix, SelectionReport, select_parameters
from .forest import predict_batch, train_forest
from .ingest import TurbineStore
from .manifest import parse_key_values, parse_name_list
from .metrics import EvaluationReport, confusion, evaluate, write_evaluation_csv
from .model_io import ModelBundle, save_model
from .patterns import (
    HORIZONS_MINUTES,
    StatusPattern,
    build_class_timeline,
    build_transactions,
    mine_patterns,
    patterns_report,
)
from .timeutil import SLOT_SECONDS, format_rfc3339, parse_rfc3339


def derive_seed(plan_seed: int, turbine: str, horizon: int, purpose: str) -> int:
    text = f"{plan_seed}|{turbine}|{horizon}|{purpose}"
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")


@dataclass
class TrainingPlan:
    store_path: Path
    output_dir: Path
    start: int
    end: int
    turbines: list[str] = field(default_factory=list)  # empty = all in manifest
    variance_threshold: float = 0.99
    correlation_threshold: float = 0.95
    min_support: float = 0.01
    max_patterns: int = 8
    n_trees: int = 40
    max_depth: int = 25
    features_per_split: int | None = None
    train_fraction: float = 2.0 / 3.0
    seed: int = 0
    created_at: int | None = None  # defaults to the range end: a data property, not wall clock
    parallelism: int = 1
    keep_datasets: bool = False

    def __post_init__(self):
        self.store_path = Path(self.store_path)
        self.output_dir = Path(self.output_dir)
        if self.end <= self.start:
            raise PlanInvalid("plan range is empty")
        if self.start % SLOT_SECONDS or self.end % SLOT_SECONDS:
            raise PlanInvalid("plan range bounds must be 10-minute aligned")
        if self.created_at is None:
            self.created_at = self.end
        if self.parallelism < 1:
            raise PlanInvalid("parallelism must be >= 1")


def parse_plan(path: Path, overrides: dict | None = None) -> TrainingPlan:
    """Plan file: key = value lines; names mirror the TrainingPlan fields."""
    kv = parse_key_values(Path(path).read_text(encoding="utf-8"))
    if overrides:
        kv.update({k: str(v) for k, v in overrides.items() if v is not None})
    required = ("store_path", "output_dir", "start", "end")
    missing = [k for k in required if k not in kv]
    if missing:
        raise PlanInvalid(f"plan is missing keys: {', '.join(missing)}")

    def get(name, cast, default):
        if name not in kv:
            return default
        raw = kv[name]
        try:
            return cast(raw)
        except (ValueError, DataError) as exc:
            raise PlanInvalid(f"bad plan value {name} = {raw!r}: {exc}") from None

    return TrainingPlan(
        store_path=Path(kv["store_path"]),
        output_dir=Path(kv["output_dir"]),
        start=parse_rfc3339(kv["start"]),
        end=parse_rfc3339(kv["end"]),
        turbines=get("turbines", parse_name_list, []),
        variance_threshold=get("variance_threshold", float, 0.99),
        correlation_threshold=get("correlation_threshold", float, 0.95),
        min_support=get("min_support", float, 0.01),
        max_patterns=get("max_patterns", int, 8),
        n_trees=get("n_trees", int, 40),
        max_depth=get("max_depth", int, 25),
        features_per_split=get("features_per_split", int, None),
        train_fraction=get("train_fraction", float, 2.0 / 3.0),
        seed=get("seed", int, 0),
        created_at=get("created_at", parse_rfc3339, None),
        parallelism=get("parallelism", int, 1),
        keep_datasets=get("keep_datasets", lambda s: s.lower() == "true", False),
    )


@dataclass
class HorizonOutcome:
    turbine: str
    horizon_minutes: int
    status: str  # "completed" | "skipped"
    skip_reason: str | None = None
    bundle_path: Path | None = None
    evaluation: EvaluationReport | None = None
    test_rows: int = 0
    duration_seconds: float = 0.0


@dataclass
class TrainingRunReport:
    outcomes: list[HorizonOutcome]
    selections: dict[str, SelectionReport]
    patterns: dict[str, list[StatusPattern]]
    total_seconds: float

    @property
    def completed(self) -> list[HorizonOutcome]:
        return [o for o in self.outcomes if o.status == "completed"]

    @property
    def skipped(self) -> list[HorizonOutcome]:
        return [o for o in self.outcomes if o.status == "skipped"]

    def fleet_accuracy(self) -> dict[str, float | None]:
        """Pooled (test-row weighted) and macro (per-model mean) accuracies."""
        evaluated = [o for o in self.completed if o.evaluation is not None and o.test_rows > 0]
        if not evaluated:
            return {"pooled": None, "macro": None}
        pooled = sum(o.evaluation.global_accuracy * o.test_rows for o in evaluated) / sum(
            o.test_rows for o in evaluated)
        macro = sum(o.evaluation.global_accuracy for o in evaluated) / len(evaluated)
        return {"pooled": pooled, "macro": macro}


def _train_turbine(plan: TrainingPlan, store: TurbineStore, turbine: str):
    outcomes: list[HorizonOutcome] = []
    selection = None
    patterns = None

    def skip_all(reason: str):
        for h in HORIZONS_MINUTES:
            outcomes.append(HorizonOutcome(turbine, h, "skipped", skip_reason=reason))

    try:
        ops = list(store.scan_operational(turbine, plan.start, plan.end))
        if len(ops) < 2:
            skip_all(f"only {len(ops)} operational rows in range")
            return turbine, outcomes, selection, patterns
        matrix = FeatureMatrix(
            np.asarray([rec.values for rec in ops]), list(store.manifest.parameters))
        selection = select_parameters(
            matrix, plan.variance_threshold, plan.correlation_threshold)

        events = list(store.scan_status(turbine, plan.start, plan.end))
        transactions = build_transactions(events, turbine, plan.start, plan.end)
        critical = set(store.manifest.critical_alarms)
        patterns = mine_patterns(transactions, critical, plan.min_support, plan.max_patterns)
        timeline = build_class_timeline(transactions, patterns, critical)
    except DataError as exc:
        skip_all(f"{type(exc).__name__}: {exc}")
        return turbine, outcomes, selection, patterns
    except Exception as exc:  # isolate unexpected failures to this turbine
        skip_all(f"unexpected failure: {exc!r}")
        return turbine, outcomes, selection, patterns

    models_dir = plan.output_dir / "models" / turbine
    models_dir.mkdir(parents=True, exist_ok=True)
    for h in HORIZONS_MINUTES:
        begin = time.perf_counter()
        try:
            d = label_records(ops, store.manifest.parameters, selection.final_names, timeline, h)
            split = stratified_split(
                d, plan.train_fraction, seed=derive_seed(plan.seed, turbine, h, "split"))
            forest = train_forest(
                split.train.features, split.train.labels, d.class_ids,
                n_trees=plan.n_trees, max_depth=plan.max_depth,
                features_per_split=plan.features_per_split,
                seed=derive_seed(plan.seed, turbine, h, "forest"))
            if split.test.n_rows > 0:
                pred = predict_batch(forest, split.test.features)
                report = evaluate(confusion(pred.tolist(), split.test.labels.tolist(), d.class_ids))
            else:
                report = None
            bundle = ModelBundle(
                turbine_id=turbine, horizon_minutes=h, forest=forest,
                feature_names=selection.final_names, patterns=patterns,
                created_at=plan.created_at)
            bundle_path = models_dir / f"horizon_{h}.model"
            save_model(bundle, bundle_path)
            if plan.keep_datasets:
                from .dataset import save_dataset
                datasets_dir = plan.output_dir / "datasets" / turbine
                datasets_dir.mkdir(parents=True, exist_ok=True)
                save_dataset(d, datasets_dir / f"horizon_{h}.csv")
            outcomes.append(HorizonOutcome(
                turbine, h, "completed", bundle_path=bundle_path,
                evaluation=report, test_rows=split.test.n_rows,
                duration_seconds=time.perf_counter() - begin))
        except DataError as exc:
            outcomes.append(HorizonOutcome(
                turbine, h, "skipped", skip_reason=f"{type(exc).__name__}: {exc}",
                duration_seconds=time.perf_counter() - begin))
        except Exception as exc:
            outcomes.append(HorizonOutcome(
                turbine, h, "skipped", skip_reason=f"unexpected failure: {exc!r}",
                duration_seconds=time.perf_counter() - begin))
    return turbine, outcomes, selection, patterns


def run(plan: TrainingPlan) -> TrainingRunReport:
    begin = time.perf_counter()
    store = TurbineStore.open(plan.store_path)
    turbines = plan.turbines or list(store.manifest.turbines)
    unknown = [t for t in turbines if t not in store.manifest.turbines]
    if unknown:
        raise PlanInvalid(f"turbines not in store manifest: {unknown}")
    try:
        plan.output_dir.mkdir(parents=True, exist_ok=True)
        (plan.output_dir / "reports").mkdir(exist_ok=True)
    except OSError as exc:
        raise RuntimeFailure(f"cannot create output dir {plan.output_dir}: {exc}") from exc

    all_outcomes: list[HorizonOutcome] = []
    selections: dict[str, SelectionReport] = {}
    mined: dict[str, list[StatusPattern]] = {}
    if plan.parallelism > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=plan.parallelism) as pool:
            results = list(pool.map(lambda t: _train_turbine(plan, store, t), turbines))
    else:
        results = [_train_turbine(plan, store, t) for t in turbines]
    for turbine, outcomes, selection, patterns in results:
        all_outcomes.extend(outcomes)
        if selection is not None:
            selections[turbine] = selection
        if patterns is not None:
            mined[turbine] = patterns

    report = TrainingRunReport(
        outcomes=all_outcomes, selections=selections, patterns=mined,
        total_seconds=time.perf_counter() - begin)
    _write_reports(plan, report)
    return report


def _write_reports(plan: TrainingPlan, report: TrainingRunReport) -> None:
    reports_dir = plan.output_dir / "reports"
    for turbine, selection in report.selections.items():
        (reports_dir / f"selection_{turbine}.txt").write_text(selection.to_text(), encoding="utf-8")
        (reports_dir / f"selection_{turbine}.json").write_text(selection.to_json(), encoding="utf-8")
    for turbine, patterns in report.patterns.items():
        (reports_dir / f"patterns_{turbine}.txt").write_text(
            patterns_report(patterns, turbine), encoding="utf-8")
    by_turbine: dict[str, dict[int, EvaluationReport]] = {}
    for o in report.outcomes:
        if o.status == "completed" and o.evaluation is not None:
            by_turbine.setdefault(o.turbine, {})[o.horizon_minutes] = o.evaluation
    for turbine, reports in by_turbine.items():
        write_evaluation_csv(reports, reports_dir / f"evaluation_{turbine}.csv")

    lines = [
        "training run report",
        f"  range: {format_rfc3339(plan.start)} .. {format_rfc3339(plan.end)}",
        f"  completed: {len(report.completed)}  skipped: {len(report.skipped)}",
        f"  total wall clock: {report.total_seconds:.1f} s",
    ]
    fleet = report.fleet_accuracy()
    if fleet["pooled"] is not None:
        lines.append(f"  fleet accuracy: pooled {100 * fleet['pooled']:.2f}%  "
                     f"macro {100 * fleet['macro']:.2f}%")
    for o in report.outcomes:
        if o.status == "completed":
            acc = (f"{100 * o.evaluation.global_accuracy:.2f}%"
                   if o.evaluation is not None else "n/a")
            lines.append(f"  {o.turbine} t+{o.horizon_minutes}: completed, "
                         f"accuracy {acc}, {o.duration_seconds:.2f} s")
        else:
            lines.append(f"  {o.turbine} t+{o.horizon_minutes}: skipped ({o.skip_reason})")
    (reports_dir / "training_report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")

    doc = {
        "completed": len(report.completed),
        "skipped": len(report.skipped),
        "fleet_accuracy": report.fleet_accuracy(),
        "outcomes": [
            {
                "turbine": o.turbine,
                "horizon_minutes": o.horizon_minutes,
                "status": o.status,
                "skip_reason": o.skip_reason,
                "bundle_path": str(o.bundle_path) if o.bundle_path else None,
                "global_accuracy": (o.evaluation.global_accuracy
                                    if o.evaluation is not None else None),
                "test_rows": o.test_rows,
                "duration_seconds": o.duration_seconds,
            }
            for o in report.outcomes
        ],
    }
    (reports_dir / "training_report.json").write_text(json.dumps(doc, indent=2), encoding="utf-8")
