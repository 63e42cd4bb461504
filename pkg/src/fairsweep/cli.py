"""Command-line front end.

    fairsweep run --config cfg.toml [--set section.key=value]... [--jobs N]
    fairsweep report --results out/results.csv [--top N]

Exit codes: 0 success, 2 configuration error, 3 data error, 4 no grid cell
produced a defined cost. The FAIRSWEEP_OUTDIR environment variable overrides
the configured output directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from . import __version__
from .config import load_config
from .data import load_csv
from .errors import ConfigError, DataError, FairsweepError, NoDefinedCostError
from .metrics import ACC_METRICS, FAIR_METRICS
from .search import (
    read_results_csv,
    run,
    write_fold_metrics_csv,
    write_results_csv,
)
from .stats import (
    bm_effect_analysis,
    cell_folds_from_csv,
    correlation_report,
    write_bm_effects_csv,
    write_correlation_csv,
)

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NO_COST = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairsweep",
        description="Fairness-aware grid sweep over classification pipelines.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="evaluate a configured grid")
    p_run.add_argument("--config", required=True, help="path to a .toml or .json config")
    p_run.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        dest="overrides",
        help="override a config value (repeatable)",
    )
    p_run.add_argument("--jobs", type=int, default=None, help="workers; 0 = per-CPU")

    p_report = sub.add_parser("report", help="post-hoc analysis of a results table")
    p_report.add_argument("--results", required=True, help="results.csv from a run")
    p_report.add_argument("--top", type=int, default=None, help="print the N cheapest cells")
    return parser


def cmd_run(args: argparse.Namespace) -> int:
    started = time.monotonic()
    cfg = load_config(args.config, args.overrides)
    jobs = cfg.jobs if args.jobs is None else args.jobs

    out_dir = Path(os.environ.get("FAIRSWEEP_OUTDIR", cfg.output_dir))
    out_dir.mkdir(parents=True, exist_ok=True)

    dataset = load_csv(cfg.data_path, cfg.schema)
    if dataset.dropped_rows:
        print(f"dropped {dataset.dropped_rows} row(s) with missing label/protected value")

    result = run(cfg.grid, dataset, jobs=jobs)

    results_path = out_dir / "results.csv"
    write_results_csv(result.records, results_path)
    write_fold_metrics_csv(result.records, out_dir / "fold_metrics.csv")
    (out_dir / "best_model.json").write_text(
        json.dumps(result.artifact, indent=2, sort_keys=True), encoding="utf-8"
    )
    manifest = {
        "config": cfg.resolved,
        "seed": cfg.grid.seed,
        "version": __version__,
        "wall_time_s": round(time.monotonic() - started, 3),
        "n_cells": len(result.records),
        "best_cell_id": result.best.cell.cell_id,
    }
    (out_dir / "run_manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
    )

    best = result.best
    print(f"evaluated {len(result.records)} cells on {dataset.n} rows")
    print(
        f"best cell {best.cell.cell_id}: base={best.cell.base or '-'} "
        f"bm={best.cell.mitigation} tau={best.cell.tau} cost={best.cost:.6f}"
    )
    print(f"artifacts written to {out_dir}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    results_path = Path(args.results)
    if not results_path.exists():
        raise DataError(f"results file not found: {results_path}")
    try:
        rows = read_results_csv(results_path)
    except (ValueError, KeyError) as exc:
        raise DataError(f"malformed results file {results_path}: {exc}") from exc
    required = {"cell_id", "bm", "cost", "status"}
    if not rows or not required <= set(rows[0]):
        raise DataError(f"malformed results file {results_path}: missing columns")

    out_dir = results_path.parent
    ok_rows = [r for r in rows if r["status"] == "ok"]

    for family, filename in (("acc", "corr_acc.csv"), ("fair", "corr_fair.csv")):
        metric_rows = [
            {m: row[f"{m}_mean"] for m in (ACC_METRICS if family == "acc" else FAIR_METRICS)}
            for row in ok_rows
        ]
        matrix = correlation_report(metric_rows, family)
        write_correlation_csv(matrix, out_dir / filename)
        print(f"wrote {out_dir / filename}")

    fold_path = results_path.with_name("fold_metrics.csv")
    if fold_path.exists():
        summary = bm_effect_analysis(cell_folds_from_csv(fold_path))
    else:
        print(f"note: {fold_path} not found; bm_effects.csv will be empty")
        summary = bm_effect_analysis([])
    write_bm_effects_csv(summary, out_dir / "bm_effects.csv")
    print(f"wrote {out_dir / 'bm_effects.csv'} ({len(summary.effects)} scenarios)")
    for note in summary.skipped[:10]:
        print(f"  skipped: {note}")

    if args.top is not None:
        ranked = sorted(
            (r for r in ok_rows if r["cost"] is not None), key=lambda r: r["cost"]
        )[: args.top]
        print(f"top {len(ranked)} cells by cost:")
        print("cell_id      base params bm tau cost")
        for r in ranked:
            print(
                f"{r['cell_id']} {r['base'] or '-'} {r['params']} "
                f"{r['bm']} {r['tau']} {r['cost']:.6f}"
            )
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        return cmd_report(args)
    except NoDefinedCostError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_COST
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FairsweepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
