"""Acceptance gate: one test per release criterion, each printing a verdict.

Run with ``pytest -v -rA tests/test_acceptance.py`` to see the PASS lines.
The end-to-end German Credit criterion needs user-supplied data; point
GERMAN_CREDIT_CSV at a prepared CSV (see README) to enable it.
"""

from __future__ import annotations

import itertools
import os
from pathlib import Path

import numpy as np
import pytest

from fairsweep.data import DatasetSchema, load_csv, stratified_kfold, synth_biased
from fairsweep.estimators import loss_and_grad
from fairsweep.metrics import auc_score
from fairsweep.mitigation import reweigh
from fairsweep.search import (
    CostCriterion,
    GridConfig,
    enumerate_grid,
    evaluate_cell,
    make_cell,
    run,
    select_best,
    total_cost,
    write_results_csv,
)
from fairsweep.stats import (
    DECREASE,
    bm_effect_analysis,
    cell_folds_from_records,
    correlation_report,
    mann_whitney_u,
)
from test_metrics import auc_brute_force, mcc_from_correlation
from test_search import desk_config, paper_shape_config
from test_stats import mwu_exact_oracle


def verdict(name: str, ok: bool, detail: str = "") -> None:
    print(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} {detail}".rstrip())
    assert ok, f"{name} failed: {detail}"


# -- criterion: cost-arithmetic reproduction ------------------------------------


def test_cost_arithmetic_reproduction():
    rows = [
        ("adult", 0.8115, 0.0091, "SPD", 0.1976, 5e-4),
        ("german-credit", 0.7062, 0.0003, "EOD", 0.2941, 5e-4),
        ("compas", 0.6506, 0.0019, "PPVD", 0.3512, 1e-3),
    ]
    details = []
    ok = True
    for name, acc, fair, metric, expected, tol in rows:
        crit = CostCriterion(acc_metric="NORM_MCC", fair_metric=metric)
        got = total_cost(acc, fair, crit)
        ok = ok and abs(got - expected) <= tol
        details.append(f"{name}: {got:.4f} vs {expected} (tol {tol})")
    verdict("cost-arithmetic", ok, "; ".join(details))


# -- criterion: grid-count reproduction -------------------------------------------


def test_grid_count_reproduction():
    cells = enumerate_grid(paper_shape_config())
    regular = sum(1 for c in cells if c.base not in (None, "TABTRANS"))
    restricted = sum(1 for c in cells if c.base == "TABTRANS")
    invariant = sum(1 for c in cells if c.base is None)
    ok = (len(cells), regular, restricted, invariant) == (930, 800, 120, 10)
    verdict(
        "grid-count",
        ok,
        f"total={len(cells)} decomposition={regular}+{restricted}+{invariant}",
    )


# -- criterion: reweighing parity ---------------------------------------------------


def test_reweighing_parity_property():
    rng = np.random.default_rng(20240613)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(8, 300))
        while True:
            y = rng.integers(0, 2, size=n)
            s = rng.integers(0, 2, size=n)
            if all(
                ((s == a) & (y == b)).sum() > 0 for a in (0, 1) for b in (0, 1)
            ):
                break
        w = reweigh(y, s)
        yf = y.astype(float)
        spd = (w[s == 0] * yf[s == 0]).sum() / w[s == 0].sum() - (
            w[s == 1] * yf[s == 1]
        ).sum() / w[s == 1].sum()
        worst = max(worst, abs(spd))
    verdict("reweighing-parity", worst <= 1e-12, f"worst |weighted SPD| = {worst:.2e}")


# -- criterion: oracle equivalence suites ----------------------------------------------


def test_oracle_auc_brute_force():
    rng = np.random.default_rng(99)
    worst = 0.0
    for seed in range(100):
        r = np.random.default_rng(seed)
        n = int(r.integers(2, 201))
        y = r.integers(0, 2, size=n)
        if y.min() == y.max():
            y[0] = 1 - y[0]
        scores = np.round(r.random(n), 2 if seed % 2 else 6)
        got = auc_score(y, scores)
        expected = auc_brute_force(y, scores)
        worst = max(worst, abs(got - expected))
    verdict("oracle-auc", worst == 0.0, f"100 seeds, n<=200, max |diff| = {worst}")


def test_oracle_mwu_exact_all_splits():
    rng = np.random.default_rng(7)
    worst = 0.0
    checked = 0
    for na, nb in itertools.product(range(1, 12), repeat=2):
        if na + nb > 12:
            continue
        for tie_heavy in (False, True):
            pool = rng.integers(0, 4 if tie_heavy else 1000, size=na + nb).astype(float)
            a, b = pool[:na], pool[na:]
            _, p = mann_whitney_u(a, b)
            worst = max(worst, abs(p - mwu_exact_oracle(a, b)))
            checked += 1
    verdict(
        "oracle-mann-whitney",
        worst <= 1e-12,
        f"{checked} size splits with |a|+|b| <= 12, max |p diff| = {worst:.2e}",
    )


def test_oracle_mcc_correlation():
    rng = np.random.default_rng(5)
    worst = 0.0
    from fairsweep.metrics import accuracy_metrics, confusion

    for _ in range(200):
        n = int(rng.integers(2, 120))
        y = rng.integers(0, 2, size=n)
        y_pred = rng.integers(0, 2, size=n)
        s = rng.integers(0, 2, size=n)
        got = accuracy_metrics(confusion(y, y_pred, s), y_pred.astype(float), y)["MCC"]
        worst = max(worst, abs(got - mcc_from_correlation(y, y_pred)))
    verdict("oracle-mcc", worst <= 1e-12, f"max |diff| = {worst:.2e}")


def test_oracle_lr_gradient_finite_differences():
    rng = np.random.default_rng(17)
    worst = 0.0
    for _ in range(40):
        n = int(rng.integers(5, 40))
        d = int(rng.integers(1, 5))
        X = rng.standard_normal((n, d))
        y = rng.integers(0, 2, size=n).astype(float)
        w = rng.random(n) + 0.05
        beta = rng.standard_normal(d + 1)
        _, grad = loss_and_grad(beta, X, y, w, C=1.5, penalty="l2")
        eps = 1e-6
        for j in range(d + 1):
            hi, lo = beta.copy(), beta.copy()
            hi[j] += eps
            lo[j] -= eps
            f_hi, _ = loss_and_grad(hi, X, y, w, 1.5, "l2")
            f_lo, _ = loss_and_grad(lo, X, y, w, 1.5, "l2")
            numeric = (f_hi - f_lo) / (2 * eps)
            worst = max(worst, abs(grad[j] - numeric) / max(1.0, abs(numeric)))
    verdict("oracle-lr-gradient", worst <= 1e-5, f"max relative error = {worst:.2e}")


# -- criterion: mitigation efficacy at desk scale ----------------------------------------


@pytest.fixture(scope="module")
def efficacy_records():
    dataset = synth_biased(2000, spd_target=-0.3, base_rate=0.5, seed=42)
    plan = stratified_kfold(dataset, 5, seed=42)
    crit = CostCriterion(acc_metric="NORM_MCC", fair_metric="SPD")
    records = {}
    for mid in ("NONE", "RW", "ROC", "EGR"):
        cell = make_cell("LR", {"C": 1.0}, mid, 0.5)
        records[mid] = evaluate_cell(cell, dataset, plan, seed=42, criterion=crit)
    return records


def test_mitigation_efficacy_desk_scale(efficacy_records):
    def mean_abs_spd(record):
        vals = [r["SPD"] for r in record.fold_reports if r is not None and r["SPD"] is not None]
        return float(np.mean(np.abs(vals)))

    base = mean_abs_spd(efficacy_records["NONE"])
    details = [f"NONE={base:.4f}"]
    ok = True
    for mid in ("RW", "ROC", "EGR"):
        value = mean_abs_spd(efficacy_records[mid])
        details.append(f"{mid}={value:.4f}")
        ok = ok and value < base
    verdict("mitigation-efficacy", ok, "fold-mean |SPD|: " + ", ".join(details))


def test_mitigation_rw_classified_significant_decrease(efficacy_records):
    cells = cell_folds_from_records(
        [efficacy_records["NONE"], efficacy_records["RW"]]
    )
    summary = bm_effect_analysis(cells, metrics=("SPD",))
    effects = [e for e in summary.effects if e.mitigation == "RW" and e.metric == "SPD"]
    ok = (
        len(effects) == 1
        and effects[0].direction == DECREASE
        and effects[0].p < 0.05
    )
    detail = (
        f"direction={effects[0].direction} p={effects[0].p:.4g} bucket={effects[0].bucket}"
        if effects
        else "no scenario produced"
    )
    verdict("mitigation-rw-significant", ok, detail)


# -- criterion: determinism / order-independence ------------------------------------------


def test_determinism_order_independence(tmp_path):
    dataset = synth_biased(600, spd_target=-0.2, base_rate=0.5, seed=11)
    cfg = desk_config()  # 2 bases x 2 params x 3 taus x 4 mitigations, k=5
    assert len(enumerate_grid(cfg)) == 48
    outputs = {}
    for tag, jobs in (("serial", 1), ("parallel", 8), ("repeat", 1)):
        result = run(cfg, dataset, jobs=jobs)
        path = tmp_path / f"{tag}.csv"
        write_results_csv(result.records, path)
        outputs[tag] = path.read_bytes()
    ok = outputs["serial"] == outputs["parallel"] == outputs["repeat"]
    verdict(
        "determinism",
        ok,
        f"48-cell results.csv identical across 1/8 workers and reruns "
        f"({len(outputs['serial'])} bytes)",
    )


# -- criterion: end-to-end on real German Credit data --------------------------------------


def test_end_to_end_german_credit():
    csv_path = os.environ.get("GERMAN_CREDIT_CSV")
    if not csv_path:
        default = Path("data/german_credit.csv")
        csv_path = str(default) if default.exists() else None
    if not csv_path:
        pytest.skip(
            "German Credit CSV not supplied (set GERMAN_CREDIT_CSV; see README for "
            "the preparation recipe)"
        )
    schema = DatasetSchema(
        label=os.environ.get("GERMAN_CREDIT_LABEL", "credit"),
        favorable=os.environ.get("GERMAN_CREDIT_FAVORABLE", "1"),
        protected=os.environ.get("GERMAN_CREDIT_PROTECTED", "sex"),
        privileged=os.environ.get("GERMAN_CREDIT_PRIVILEGED", "male"),
        categorical=tuple(
            c
            for c in os.environ.get(
                "GERMAN_CREDIT_CATEGORICAL",
                "attr1,attr3,attr4,attr6,attr7,attr9,attr10,attr12,attr14,attr15,attr17,attr19,attr20",
            ).split(",")
            if c
        ),
    )
    dataset = load_csv(csv_path, schema)
    cfg = GridConfig(
        bases=(("LR", ({"C": 1.0}, {"C": 10.0})), ("GNB", ({"var_smoothing": 1e-9},))),
        thresholds=(0.5, 0.7),
        mitigations=("NONE", "RW", "ROC"),
        cv_k=5,
        seed=13,
        criterion=CostCriterion(acc_metric="NORM_MCC", fair_metric="EOD"),
    )
    result = run(cfg, dataset, jobs=1)
    best = select_best(result.records, cfg.criterion)
    ok_rows = [r for r in result.records if r.status == "ok" and r.cost is not None]
    ok = best.cost == min(r.cost for r in ok_rows)
    worst_recompute = max(
        abs(
            r.cost
            - total_cost(
                r.means[cfg.criterion.acc_metric],
                r.means[cfg.criterion.fair_metric],
                cfg.criterion,
            )
        )
        for r in ok_rows
    )
    ok = ok and worst_recompute <= 1e-12
    verdict(
        "german-credit-e2e",
        ok,
        f"n={dataset.n} cells={len(result.records)} best={best.cell.cell_id} "
        f"cost={best.cost:.4f} recompute_err={worst_recompute:.2e}",
    )


# -- criterion: correlation sanity -----------------------------------------------------------


def test_correlation_sanity_mcc_norm_mcc():
    dataset = synth_biased(600, spd_target=-0.2, base_rate=0.5, seed=11)
    cfg = desk_config()
    result = run(cfg, dataset, jobs=1)
    rows = [
        {m: r.means[m] for m in ("ACC", "BACC", "F1", "AUC", "MCC", "NORM_MCC")}
        for r in result.records
        if r.status == "ok"
    ]
    matrix = correlation_report(rows, "acc")
    i = matrix.metrics.index("MCC")
    j = matrix.metrics.index("NORM_MCC")
    ok = matrix.rho[i, j] == 1.0 and matrix.stars[i][j] == "***"
    verdict(
        "correlation-sanity",
        ok,
        f"rho(MCC, NORM_MCC)={matrix.rho[i, j]} stars={matrix.stars[i][j]!r}",
    )
