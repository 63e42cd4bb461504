"""Run configuration: sectioned TOML (or JSON) with strict key checking.

Sections: [data] source file and column schema, [grid] the search axes and
mitigation knobs, [cv] folds and seed, [criterion] the cost weights, [run]
jobs and output directory. Unknown keys are rejected with their dotted path.
The fully-resolved dict is echoed into run_manifest.json so a run can be
replayed byte-for-byte (JSON configs are accepted for exactly that purpose).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .data import DatasetSchema
from .errors import ConfigError
from .mitigation import DEFAULT_ROC_BANDS, EgrParams
from .search import CostCriterion, GridConfig


@dataclass(frozen=True)
class RunConfig:
    data_path: str
    schema: DatasetSchema
    grid: GridConfig
    jobs: int
    output_dir: str
    resolved: dict  # echoed into the manifest


def load_config(path: str | Path, overrides: list[str] | None = None) -> RunConfig:
    """Load a .toml or .json config file and apply --set overrides."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    if path.suffix == ".json":
        raw = json.loads(path.read_text(encoding="utf-8"))
    else:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    for override in overrides or []:
        _apply_override(raw, override)
    return parse_config(raw)


def _apply_override(raw: dict, override: str) -> None:
    if "=" not in override:
        raise ConfigError(f"--set expects section.key=value, got {override!r}")
    dotted, _, value_text = override.partition("=")
    keys = dotted.strip().split(".")
    if len(keys) < 2:
        raise ConfigError(f"--set key must be section.key, got {dotted!r}")
    try:
        value = tomllib.loads(f"v = {value_text}")["v"]
    except Exception:
        value = value_text  # bare words fall back to strings
    node = raw
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set path {dotted!r} crosses a non-table value")
    node[keys[-1]] = value


class _Section:
    """Dict wrapper that records its path and rejects leftover keys."""

    def __init__(self, data: dict, path: str):
        if not isinstance(data, dict):
            raise ConfigError(f"config section [{path}] must be a table")
        self._data = dict(data)
        self._path = path

    def take(self, key: str, default=None, required: bool = False):
        if key not in self._data:
            if required:
                raise ConfigError(f"missing config key {self._path}.{key}")
            return default
        return self._data.pop(key)

    def finish(self) -> None:
        if self._data:
            bad = ", ".join(f"{self._path}.{k}" for k in sorted(self._data))
            raise ConfigError(f"unknown config key(s): {bad}")


def parse_config(raw: dict) -> RunConfig:
    top = _Section(raw, "")
    data = _Section(top.take("data", required=True), "data")
    grid = _Section(top.take("grid", required=True), "grid")
    cv = _Section(top.take("cv", {}), "cv")
    criterion = _Section(top.take("criterion", {}), "criterion")
    run_sec = _Section(top.take("run", {}), "run")
    top.finish()

    schema = DatasetSchema(
        label=str(data.take("label", required=True)),
        favorable=str(data.take("favorable", required=True)),
        protected=str(data.take("protected", required=True)),
        privileged=str(data.take("privileged", required=True)),
        categorical=tuple(str(c) for c in data.take("categorical", [])),
        drop=tuple(str(c) for c in data.take("drop", [])),
        protected_as_feature=bool(data.take("protected_as_feature", True)),
    )
    data_path = str(data.take("path", required=True))
    data.finish()

    bases_raw = grid.take("bases", required=True)
    if not isinstance(bases_raw, list):
        raise ConfigError("grid.bases must be an array of {kind, params} tables")
    bases = []
    for i, entry in enumerate(bases_raw):
        sec = _Section(entry, f"grid.bases[{i}]")
        kind = str(sec.take("kind", required=True))
        param_maps = sec.take("params", [{}])
        sec.finish()
        if not isinstance(param_maps, list):
            raise ConfigError(f"grid.bases[{i}].params must be an array of tables")
        bases.append((kind, tuple(dict(p) for p in param_maps)))

    egr_raw = _Section(grid.take("egr", {}), "grid.egr")
    egr = EgrParams(
        eps=float(egr_raw.take("eps", 0.01)),
        rounds=int(egr_raw.take("rounds", 50)),
        bound=float(egr_raw.take("bound", 100.0)),
        eta=float(egr_raw.take("eta", 2.0)),
        constraint=str(egr_raw.take("constraint", "dp")),
    )
    egr_raw.finish()

    crit = CostCriterion(
        acc_metric=str(criterion.take("acc_metric", "NORM_MCC")),
        fair_metric=str(criterion.take("fair_metric", "SPD")),
        alpha=float(criterion.take("alpha", 1.0)),
        beta=float(criterion.take("beta", 1.0)),
    )
    criterion.finish()

    cv_k = int(cv.take("k", 10))
    seed = int(cv.take("seed", 0))
    cv.finish()

    grid_cfg = GridConfig(
        bases=tuple(bases),
        thresholds=tuple(float(t) for t in grid.take("thresholds", required=True)),
        mitigations=tuple(str(m) for m in grid.take("mitigations", required=True)),
        cv_k=cv_k,
        seed=seed,
        criterion=crit,
        roc_bands=tuple(float(b) for b in grid.take("roc_bands", list(DEFAULT_ROC_BANDS))),
        ceo_cost=str(grid.take("ceo_cost", "fnr")),
        cns_k=int(grid.take("cns_k", 5)),
        egr=egr,
    )
    grid.finish()

    jobs = int(run_sec.take("jobs", 1))
    output_dir = str(run_sec.take("output_dir", "out"))
    run_sec.finish()
    if jobs < 0:
        raise ConfigError("run.jobs must be >= 0 (0 = one worker per CPU)")

    resolved = {
        "data": {
            "path": data_path,
            "label": schema.label,
            "favorable": schema.favorable,
            "protected": schema.protected,
            "privileged": schema.privileged,
            "categorical": list(schema.categorical),
            "drop": list(schema.drop),
            "protected_as_feature": schema.protected_as_feature,
        },
        "grid": {
            "bases": [
                {"kind": kind, "params": [dict(p) for p in param_maps]}
                for kind, param_maps in grid_cfg.bases
            ],
            "thresholds": list(grid_cfg.thresholds),
            "mitigations": list(grid_cfg.mitigations),
            "roc_bands": list(grid_cfg.roc_bands),
            "ceo_cost": grid_cfg.ceo_cost,
            "cns_k": grid_cfg.cns_k,
            "egr": {
                "eps": egr.eps,
                "rounds": egr.rounds,
                "bound": egr.bound,
                "eta": egr.eta,
                "constraint": egr.constraint,
            },
        },
        "cv": {"k": cv_k, "seed": seed},
        "criterion": {
            "acc_metric": crit.acc_metric,
            "fair_metric": crit.fair_metric,
            "alpha": crit.alpha,
            "beta": crit.beta,
        },
        "run": {"jobs": jobs, "output_dir": output_dir},
    }
    return RunConfig(
        data_path=data_path,
        schema=schema,
        grid=grid_cfg,
        jobs=jobs,
        output_dir=output_dir,
        resolved=resolved,
    )
