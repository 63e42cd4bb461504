"""The grid-sweep engine: enumerate, cross-validate, score, select.

Every cell (base kind, hyperparameters, mitigation, threshold) is evaluated
under stratified k-fold CV; metrics are averaged over defined folds and the
cell scored by

    cost = alpha * (1 - acc metric mean) + beta * |fair metric mean - optimum|

Fits are shared across thresholds: one model per (base, params, fit stage,
fold), with thresholds and post-processing applied to the cached scores.
All randomness is derived from the run seed and the cell's fit-relevant
content, so results are identical for any execution order or worker count.
"""

from __future__ import annotations

import concurrent.futures
import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, Encoder, FoldPlan, stratified_kfold
from .errors import (
    ConfigError,
    FairsweepError,
    NoDefinedCostError,
)
from .estimators import (
    EXTENSION_KINDS,
    EstimatorSpec,
    apply_threshold,
    predict_proba,
)
from .metrics import ACC_METRICS, ALL_METRICS, FAIR_METRICS, fairness_cost, full_report
from .mitigation import (
    DEFAULT_ROC_BANDS,
    INCOMPATIBLE_PAIRS,
    RESERVED_MITIGATIONS,
    EgrParams,
    apply_post,
    ceo_adjust,
    fit_pipeline,
    fit_stage_of,
    is_base_invariant,
    pipeline_model_to_dict,
    post_stage_of,
    roc_adjust,
    roc_select_band,
    validate_mitigation_id,
)

logger = logging.getLogger(__name__)

RESULT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class CostCriterion:
    """Accuracy/fairness cost weights: cost = alpha*(1-acc) + beta*dist(fair)."""

    acc_metric: str = "NORM_MCC"
    fair_metric: str = "SPD"
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self) -> None:
        if self.acc_metric not in ACC_METRICS:
            raise ConfigError(f"unknown accuracy metric {self.acc_metric!r}")
        if self.fair_metric not in FAIR_METRICS:
            raise ConfigError(f"unknown fairness metric {self.fair_metric!r}")
        if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta <= 0:
            raise ConfigError("criterion weights must be nonnegative with alpha+beta > 0")


def total_cost(
    acc_value: float | None, fair_value: float | None, criterion: CostCriterion
) -> float | None:
    """Combined cost; undefined inputs propagate as None."""
    if acc_value is None or fair_value is None:
        return None
    fc = fairness_cost(fair_value, criterion.fair_metric)
    return criterion.alpha * (1.0 - acc_value) + criterion.beta * fc


@dataclass(frozen=True)
class GridCell:
    """One pipeline configuration. ``base`` is None for base-invariant ids."""

    base: str | None
    params: tuple[tuple[str, object], ...]
    mitigation: str
    tau: float
    cell_id: str

    @property
    def params_dict(self) -> dict:
        return dict(self.params)

    def params_json(self) -> str:
        return json.dumps(self.params_dict, sort_keys=True)


def make_cell(base: str | None, params: dict | None, mitigation: str, tau: float) -> GridCell:
    mitigation = validate_mitigation_id(mitigation)
    if base is not None:
        spec = EstimatorSpec(base, params or {})
        base, params = spec.kind, spec.params
    else:
        params = {}
    items = tuple(sorted(params.items()))
    payload = json.dumps([base, items, mitigation, tau], sort_keys=True)
    cell_id = hashlib.sha256(payload.encode()).hexdigest()[:12]
    return GridCell(base=base, params=items, mitigation=mitigation, tau=tau, cell_id=cell_id)


@dataclass(frozen=True)
class GridConfig:
    """The full search space plus CV and scoring settings."""

    bases: tuple[tuple[str, tuple[dict, ...]], ...]
    thresholds: tuple[float, ...]
    mitigations: tuple[str, ...]
    cv_k: int = 10
    seed: int = 0
    criterion: CostCriterion = CostCriterion()
    roc_bands: tuple[float, ...] = DEFAULT_ROC_BANDS
    ceo_cost: str = "fnr"
    egr: EgrParams = field(default_factory=EgrParams)
    cns_k: int = 5

    def __post_init__(self) -> None:
        if not self.bases:
            raise ConfigError("grid needs at least one base estimator")
        if not self.thresholds:
            raise ConfigError("grid needs at least one threshold")
        if not self.mitigations:
            raise ConfigError("grid needs at least one mitigation id")
        if self.cv_k < 2:
            raise ConfigError(f"cv_k must be >= 2, got {self.cv_k}")
        prev = 0.0
        for tau in self.thresholds:
            if not 0.0 < tau < 1.0:
                raise ConfigError(f"threshold {tau} outside (0,1)")
            if tau <= prev:
                raise ConfigError("thresholds must be strictly increasing")
            prev = tau
        normalized_bases = []
        for kind, param_maps in self.bases:
            if not param_maps:
                raise ConfigError(f"base {kind} has an empty parameter list")
            specs = [EstimatorSpec(kind, dict(p)) for p in param_maps]
            normalized_bases.append((specs[0].kind, tuple(s.params for s in specs)))
        object.__setattr__(self, "bases", tuple(normalized_bases))
        object.__setattr__(
            self, "mitigations", tuple(validate_mitigation_id(m) for m in self.mitigations)
        )


def enumerate_grid(cfg: GridConfig) -> list[GridCell]:
    """Cartesian product of the applicable axes, in (base, params, bm, tau)
    order with base-invariant mitigations (threshold-only) appended last.

    Incompatible (base, mitigation) pairs are skipped with a logged reason.
    Raises ConfigError if two cells collide (duplicate parameter maps).
    """
    cells: list[GridCell] = []
    for kind, param_maps in cfg.bases:
        for params in param_maps:
            for mid in cfg.mitigations:
                if is_base_invariant(mid):
                    continue
                if (kind, mid) in INCOMPATIBLE_PAIRS:
                    logger.info(
                        "skipping incompatible pair base=%s mitigation=%s", kind, mid
                    )
                    continue
                for tau in cfg.thresholds:
                    cells.append(make_cell(kind, dict(params), mid, tau))
    for mid in cfg.mitigations:
        if is_base_invariant(mid):
            for tau in cfg.thresholds:
                cells.append(make_cell(None, None, mid, tau))
    ids = [c.cell_id for c in cells]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate grid cells (repeated parameter maps?)")
    return cells


@dataclass
class EvaluationRecord:
    """Fold-averaged metrics and cost for one grid cell."""

    cell: GridCell
    fold_reports: list[dict | None]
    means: dict[str, float | None]
    stds: dict[str, float | None]
    undefined: dict[str, int]
    failed_folds: int
    status: str
    error: str | None
    cost: float | None


def derive_seed(*parts: object) -> int:
    """Stable 64-bit seed from string parts (independent of hash seeds)."""
    blob = "\x1f".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "big")


@dataclass(frozen=True)
class EvalOptions:
    criterion: CostCriterion = CostCriterion()
    roc_bands: tuple[float, ...] = DEFAULT_ROC_BANDS
    ceo_cost: str = "fnr"
    egr: EgrParams = field(default_factory=EgrParams)
    cns_k: int = 5

    @classmethod
    def from_config(cls, cfg: GridConfig) -> "EvalOptions":
        return cls(
            criterion=cfg.criterion,
            roc_bands=cfg.roc_bands,
            ceo_cost=cfg.ceo_cost,
            egr=cfg.egr,
            cns_k=cfg.cns_k,
        )


def _group_key(cell: GridCell) -> tuple:
    return (cell.base, cell.params, cell.mitigation)


def _evaluate_group_fold(
    dataset: Dataset,
    plan: FoldPlan,
    group: tuple,
    taus: tuple[float, ...],
    fold: int,
    run_seed: int,
    opts: EvalOptions,
) -> dict[float, dict | None] | str:
    """One (base, params, mitigation) group on one fold, all thresholds.

    Returns {tau: metric report} on success or an error string on fold
    failure. The fit seed depends only on fit-relevant content, so cells
    sharing a fit share it bit-for-bit.
    """
    base_kind, params_items, mitigation = group
    params = dict(params_items)
    fit_stage = fit_stage_of(mitigation)
    params_key = json.dumps(params, sort_keys=True)

    try:
        train = plan.train_rows(fold)
        test = plan.test_rows(fold)
        enc = Encoder.fit(dataset, train)
        X_tr = enc.transform(dataset, train).X
        X_te = enc.transform(dataset, test).X
        y_tr, s_tr = dataset.y[train], dataset.s[train]
        y_te, s_te = dataset.y[test], dataset.s[test]

        fit_seed = derive_seed(run_seed, "fit", base_kind, params_key, fit_stage, fold)
        spec = EstimatorSpec(base_kind, params, seed=fit_seed)
        model, _ = fit_pipeline(fit_stage, spec, X_tr, y_tr, s_tr, None, opts.egr)
        train_scores = predict_proba(model, X_tr)
        test_scores = predict_proba(model, X_te)

        post = post_stage_of(mitigation)
        reports: dict[float, dict | None] = {}
        if post == "ceo":
            rng = np.random.default_rng(
                derive_seed(run_seed, "ceo", base_kind, params_key, fit_stage, fold)
            )
            mixed, _adj = ceo_adjust(
                train_scores, y_tr, s_tr, test_scores, s_te, opts.ceo_cost, rng
            )
            for tau in taus:
                pred = apply_threshold(mixed, tau)
                reports[tau] = full_report(y_te, pred, mixed, s_te, X_te, cns_k=opts.cns_k)
        elif post == "roc":
            for tau in taus:
                band = roc_select_band(
                    train_scores,
                    y_tr,
                    s_tr,
                    tau,
                    opts.roc_bands,
                    opts.criterion.fair_metric,
                    X=X_tr,
                    cns_k=opts.cns_k,
                )
                pred = roc_adjust(test_scores, s_te, tau, band)
                reports[tau] = full_report(
                    y_te, pred, test_scores, s_te, X_te, cns_k=opts.cns_k
                )
        else:
            for tau in taus:
                pred = apply_threshold(test_scores, tau)
                reports[tau] = full_report(
                    y_te, pred, test_scores, s_te, X_te, cns_k=opts.cns_k
                )
        return reports
    except FairsweepError as exc:
        return f"{type(exc).__name__}: {exc}"


def _aggregate(
    cell: GridCell,
    fold_reports: list[dict | None],
    k: int,
    criterion: CostCriterion,
    error: str | None,
) -> EvaluationRecord:
    failed = sum(1 for r in fold_reports if r is None)
    means: dict[str, float | None] = {}
    stds: dict[str, float | None] = {}
    undefined: dict[str, int] = {}
    for metric in ALL_METRICS:
        values = [r[metric] for r in fold_reports if r is not None and r[metric] is not None]
        undef = sum(1 for r in fold_reports if r is not None and r[metric] is None)
        undefined[metric] = undef
        if values:
            arr = np.asarray(values, dtype=np.float64)
            means[metric] = float(arr.mean())
            stds[metric] = float(arr.std())
        else:
            means[metric] = None
            stds[metric] = None
    status = "failed" if 2 * failed > k else "ok"
    cost = None
    if status == "ok":
        cost = total_cost(
            means[criterion.acc_metric], means[criterion.fair_metric], criterion
        )
    return EvaluationRecord(
        cell=cell,
        fold_reports=fold_reports,
        means=means,
        stds=stds,
        undefined=undefined,
        failed_folds=failed,
        status=status,
        error=error,
        cost=cost,
    )


def _short_circuit_reason(cell: GridCell) -> str | None:
    if cell.mitigation in RESERVED_MITIGATIONS:
        return (
            f"NotImplementedMitigationError: mitigation {cell.mitigation} "
            "is a reserved registry slot and is not implemented"
        )
    if cell.base in EXTENSION_KINDS:
        return (
            f"CapabilityError: base estimator {cell.base} is an extension point "
            "and cannot be fitted"
        )
    return None


def evaluate_cell(
    cell: GridCell,
    dataset: Dataset,
    plan: FoldPlan,
    seed: int,
    *,
    criterion: CostCriterion = CostCriterion(),
    roc_bands: tuple[float, ...] = DEFAULT_ROC_BANDS,
    ceo_cost: str = "fnr",
    egr: EgrParams = EgrParams(),
    cns_k: int = 5,
) -> EvaluationRecord:
    """Evaluate a single cell over all folds (same seeds as a full run)."""
    opts = EvalOptions(
        criterion=criterion, roc_bands=roc_bands, ceo_cost=ceo_cost, egr=egr, cns_k=cns_k
    )
    reason = _short_circuit_reason(cell)
    if reason is not None:
        return _aggregate(cell, [None] * plan.k, plan.k, criterion, reason)
    group = _group_key(cell)
    fold_reports: list[dict | None] = []
    error = None
    for fold in range(plan.k):
        out = _evaluate_group_fold(dataset, plan, group, (cell.tau,), fold, seed, opts)
        if isinstance(out, str):
            fold_reports.append(None)
            error = error or out
        else:
            fold_reports.append(out[cell.tau])
    return _aggregate(cell, fold_reports, plan.k, criterion, error)


def select_best(
    records: list[EvaluationRecord], criterion: CostCriterion
) -> EvaluationRecord:
    """Minimum-cost record; ties break on higher accuracy mean, then lower
    fairness cost, then lexicographic cell id.

    Raises NoDefinedCostError (with per-cell reasons) when nothing qualifies.
    """
    candidates = [r for r in records if r.status == "ok" and r.cost is not None]
    if not candidates:
        reasons = []
        for r in records[:20]:
            if r.status != "ok":
                reasons.append(f"{r.cell.cell_id}: failed ({r.error})")
            else:
                undef = [
                    m
                    for m in (criterion.acc_metric, criterion.fair_metric)
                    if r.means[m] is None
                ]
                reasons.append(f"{r.cell.cell_id}: undefined {', '.join(undef)}")
        raise NoDefinedCostError(
            "no grid cell produced a defined cost:\n  " + "\n  ".join(reasons)
        )

    def key(r: EvaluationRecord):
        acc = r.means[criterion.acc_metric]
        fair = fairness_cost(r.means[criterion.fair_metric], criterion.fair_metric)
        return (r.cost, -acc, fair, r.cell.cell_id)

    return min(candidates, key=key)


@dataclass
class RunResult:
    records: list[EvaluationRecord]
    best: EvaluationRecord
    artifact: dict


# -- parallel worker plumbing -------------------------------------------------

_WORKER_STATE: dict = {}


def _init_worker(dataset: Dataset, plan: FoldPlan, run_seed: int, opts: EvalOptions) -> None:
    _WORKER_STATE["args"] = (dataset, plan, run_seed, opts)


def _run_work_item(item: tuple[tuple, tuple[float, ...], int]):
    group, taus, fold = item
    dataset, plan, run_seed, opts = _WORKER_STATE["args"]
    return group, fold, _evaluate_group_fold(dataset, plan, group, taus, fold, run_seed, opts)


def run(cfg: GridConfig, dataset: Dataset, jobs: int = 1) -> RunResult:
    """Evaluate the whole grid and refit the winning pipeline on all data.

    ``jobs``: 0 = one worker per CPU, 1 = in-process, N = process pool of N.
    Identical (cfg, dataset) inputs produce identical results for any jobs
    value.
    """
    plan = stratified_kfold(dataset, cfg.cv_k, cfg.seed)
    cells = enumerate_grid(cfg)
    opts = EvalOptions.from_config(cfg)

    groups: dict[tuple, list[float]] = {}
    for cell in cells:
        if _short_circuit_reason(cell) is None:
            groups.setdefault(_group_key(cell), []).append(cell.tau)
    items = [
        (group, tuple(taus), fold)
        for group, taus in groups.items()
        for fold in range(plan.k)
    ]

    results: dict[tuple[tuple, int], dict[float, dict | None] | str] = {}
    if jobs == 1 or len(items) <= 1:
        _init_worker(dataset, plan, cfg.seed, opts)
        for item in items:
            group, fold, out = _run_work_item(item)
            results[(group, fold)] = out
    else:
        max_workers = jobs if jobs > 0 else None
        with concurrent.futures.ProcessPoolExecutor(
            max_workers=max_workers,
            initializer=_init_worker,
            initargs=(dataset, plan, cfg.seed, opts),
        ) as pool:
            for group, fold, out in pool.map(_run_work_item, items, chunksize=1):
                results[(group, fold)] = out

    records: list[EvaluationRecord] = []
    for cell in cells:
        reason = _short_circuit_reason(cell)
        if reason is not None:
            records.append(_aggregate(cell, [None] * plan.k, plan.k, cfg.criterion, reason))
            continue
        fold_reports: list[dict | None] = []
        error = None
        for fold in range(plan.k):
            out = results[(_group_key(cell), fold)]
            if isinstance(out, str):
                fold_reports.append(None)
                error = error or out
            else:
                fold_reports.append(out[cell.tau])
        records.append(_aggregate(cell, fold_reports, plan.k, cfg.criterion, error))

    best = select_best(records, cfg.criterion)
    artifact = build_artifact(best.cell, dataset, cfg)
    return RunResult(records=records, best=best, artifact=artifact)


def build_artifact(cell: GridCell, dataset: Dataset, cfg: GridConfig) -> dict:
    """Refit the cell's pipeline on all rows and serialize it."""
    opts = EvalOptions.from_config(cfg)
    enc = Encoder.fit(dataset)
    X = enc.transform(dataset).X
    fit_stage = fit_stage_of(cell.mitigation)
    fit_seed = derive_seed(cfg.seed, "refit", cell.base, cell.params_json(), fit_stage)
    spec = EstimatorSpec(cell.base, cell.params_dict, seed=fit_seed)
    model, weights = fit_pipeline(
        fit_stage, spec, X, dataset.y, dataset.s, None, opts.egr
    )
    scores = predict_proba(model, X)
    rng = np.random.default_rng(derive_seed(cfg.seed, "refit-post", cell.cell_id))
    _, _, details = apply_post(
        post_stage_of(cell.mitigation),
        scores,
        dataset.y,
        dataset.s,
        scores,
        dataset.s,
        cell.tau,
        opts.criterion.fair_metric,
        opts.roc_bands,
        opts.ceo_cost,
        rng,
        X_train=X,
        cns_k=opts.cns_k,
    )
    return {
        "format_version": RESULT_FORMAT_VERSION,
        "cell": {
            "cell_id": cell.cell_id,
            "base": cell.base,
            "params": cell.params_dict,
            "mitigation": cell.mitigation,
            "tau": cell.tau,
        },
        "criterion": {
            "acc_metric": cfg.criterion.acc_metric,
            "fair_metric": cfg.criterion.fair_metric,
            "alpha": cfg.criterion.alpha,
            "beta": cfg.criterion.beta,
        },
        "encoder": {
            "feature_names": list(enc.feature_names),
            "numeric_stats": {k: list(v) for k, v in enc.numeric_stats.items()},
            "categories": {k: list(v) for k, v in enc.categories.items()},
            "modes": dict(enc.modes),
            "dropped_constant": list(enc.dropped_constant),
        },
        "model": pipeline_model_to_dict(model),
        "post": details,
        "train_weight_total": float(np.asarray(weights).sum()),
    }


# -- result table persistence -------------------------------------------------

def _fmt(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def results_header() -> list[str]:
    header = ["cell_id", "base", "params", "bm", "tau"]
    for metric in ALL_METRICS:
        header.append(f"{metric}_mean")
        header.append(f"{metric}_std")
    header.extend(["undefined", "failed_folds", "cost", "status", "error"])
    return header


def record_to_row(record: EvaluationRecord) -> list[str]:
    cell = record.cell
    row = [
        cell.cell_id,
        cell.base or "",
        cell.params_json(),
        cell.mitigation,
        repr(cell.tau),
    ]
    for metric in ALL_METRICS:
        row.append(_fmt(record.means[metric]))
        row.append(_fmt(record.stds[metric]))
    undef = ";".join(
        f"{m}:{record.undefined[m]}" for m in ALL_METRICS if record.undefined[m] > 0
    )
    row.extend(
        [
            undef,
            str(record.failed_folds),
            _fmt(record.cost),
            record.status,
            record.error or "",
        ]
    )
    return row


def write_results_csv(records: list[EvaluationRecord], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(results_header())
        for record in records:
            writer.writerow(record_to_row(record))


def write_fold_metrics_csv(records: list[EvaluationRecord], path: str | Path) -> None:
    """Long-format per-fold metric values (empty value = undefined fold)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cell_id", "base", "params", "bm", "tau", "fold", "metric", "value"])
        for record in records:
            if record.status != "ok":
                continue
            cell = record.cell
            for fold, report in enumerate(record.fold_reports):
                if report is None:
                    continue
                for metric in ALL_METRICS:
                    writer.writerow(
                        [
                            cell.cell_id,
                            cell.base or "",
                            cell.params_json(),
                            cell.mitigation,
                            repr(cell.tau),
                            str(fold),
                            metric,
                            _fmt(report[metric]),
                        ]
                    )


def read_results_csv(path: str | Path) -> list[dict]:
    """Parse a results table back into row dicts with floats restored."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for raw in reader:
            row: dict = dict(raw)
            for key, value in raw.items():
                if key.endswith("_mean") or key.endswith("_std") or key in ("cost", "tau"):
                    row[key] = float(value) if value not in ("", None) else None
            rows.append(row)
    return rows
