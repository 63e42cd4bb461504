"""Post-hoc analysis of result tables.

Two tools from the evaluation playbook: Spearman rank correlation matrices
over metric columns (with significance stars), and before/after-mitigation
effect classification via the Mann-Whitney U test plus Cohen's d buckets.

Fairness metrics enter the before/after comparison as distance to optimum
(|value|, or |value-1| for CNS), so "decrease" uniformly means bias
reduction; accuracy metrics are compared raw.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import stdtr

from .errors import ConfigError, ContractError
from .metrics import ACC_METRICS, ALL_METRICS, FAIR_METRICS, fairness_cost
from .metrics import _midranks

SIGNIFICANCE = 0.05

DECREASE = "sig. decrease"
INCREASE = "sig. increase"
INSIGNIFICANT = "insignificant"


def stars(p: float | None) -> str:
    """Significance stars: p < 0.05 '*', < 0.01 '**', < 0.001 '***'."""
    if p is None:
        return ""
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


def spearman(x, y) -> tuple[float | None, float | None]:
    """Spearman rho (Pearson on mid-ranks) with a two-sided t-approximate p.

    Returns (None, None) when either input is constant. |rho| = 1 maps to
    p = 0 directly.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ContractError("inputs must have equal lengths")
    n = x.size
    if n < 3:
        raise ContractError(f"spearman needs n >= 3, got {n}")
    rx = _midranks(x)
    ry = _midranks(y)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    sx = float(np.sqrt((dx * dx).sum()))
    sy = float(np.sqrt((dy * dy).sum()))
    if sx == 0.0 or sy == 0.0:
        return None, None
    rho = float(np.clip((dx * dy).sum() / (sx * sy), -1.0, 1.0))
    if abs(rho) >= 1.0 - 1e-15:
        return (1.0 if rho > 0 else -1.0), 0.0
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    p = 2.0 * float(stdtr(n - 2, -abs(t)))
    return rho, min(max(p, 0.0), 1.0)


def mann_whitney_u(a, b) -> tuple[float, float]:
    """Mann-Whitney U of sample ``a`` with a two-sided p.

    U comes from pooled mid-rank sums. The p-value is the exact permutation
    tail P(|U' - nm/2| >= |U - nm/2|) when min(|a|,|b|) < 8 (tie-aware
    dynamic programming over rank groups), and the tie-corrected normal
    approximation with continuity correction otherwise. All-tied input
    yields p = 1.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = a.size, b.size
    if na == 0 or nb == 0:
        raise ContractError("both samples must be nonempty")
    pooled = np.concatenate([a, b])
    n_total = na + nb
    ranks = _midranks(pooled)
    u = float(ranks[:na].sum() - na * (na + 1) / 2.0)

    if np.unique(pooled).size == 1:
        return u, 1.0

    if min(na, nb) >= 8:
        mu = na * nb / 2.0
        tie_sizes = np.array(list(Counter(pooled.tolist()).values()), dtype=np.float64)
        tie_term = float(((tie_sizes**3) - tie_sizes).sum()) / (n_total * (n_total - 1))
        sigma2 = (na * nb / 12.0) * ((n_total + 1) - tie_term)
        if sigma2 <= 0:
            return u, 1.0
        diff = u - mu
        # continuity correction toward the mean
        if diff > 0:
            diff -= 0.5
        elif diff < 0:
            diff += 0.5
        z = diff / math.sqrt(sigma2)
        p = 2.0 * 0.5 * math.erfc(abs(z) / math.sqrt(2.0))
        return u, min(max(p, 0.0), 1.0)

    return u, _exact_mwu_p(ranks, na, nb, u)


def _exact_mwu_p(ranks: np.ndarray, na: int, nb: int, u_obs: float) -> float:
    """Exact two-sided tail by DP over tie groups of doubled ranks."""
    rank2 = np.rint(2.0 * ranks).astype(np.int64)
    groups = sorted(Counter(rank2.tolist()).items())
    # dp[taken][rank2 sum] = number of subsets, exact big-int counts
    dp: list[dict[int, int]] = [dict() for _ in range(na + 1)]
    dp[0][0] = 1
    for value, count in groups:
        new: list[dict[int, int]] = [dict() for _ in range(na + 1)]
        for taken in range(na + 1):
            for total, ways in dp[taken].items():
                for j in range(0, min(count, na - taken) + 1):
                    key = total + j * value
                    new[taken + j][key] = new[taken + j].get(key, 0) + ways * math.comb(
                        count, j
                    )
        dp = new

    # 2*(U' - mean) = (rank2 sum - na(na+1)) - na*nb, an exact integer
    d_obs = abs(int(round(2.0 * u_obs)) - na * nb)
    extreme = 0
    total = 0
    for s, ways in dp[na].items():
        total += ways
        if abs(s - na * (na + 1) - na * nb) >= d_obs:
            extreme += ways
    return extreme / total


def cohens_d(a, b) -> tuple[float | None, str | None]:
    """Cohen's d with pooled (Bessel-corrected) std and its size bucket.

    Buckets: |d| in [0, 0.5) small, [0.5, 0.8) medium, [0.8, inf) large.
    Zero pooled variance yields (None, None).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ContractError("cohens_d needs at least 2 observations per sample")
    va = float(a.var(ddof=1))
    vb = float(b.var(ddof=1))
    pooled = ((a.size - 1) * va + (b.size - 1) * vb) / (a.size + b.size - 2)
    if pooled <= 0.0:
        return None, None
    d = float((a.mean() - b.mean()) / math.sqrt(pooled))
    return d, effect_bucket(d)


def effect_bucket(d: float) -> str:
    mag = abs(d)
    if mag < 0.5:
        return "small"
    if mag < 0.8:
        return "medium"
    return "large"


@dataclass
class CorrelationMatrix:
    """Pairwise Spearman matrix over metric columns with star annotations."""

    family: str
    metrics: tuple[str, ...]
    rho: np.ndarray  # NaN where undefined
    p: np.ndarray
    stars: list[list[str]]
    pairwise_n: np.ndarray


def correlation_report(rows: list[dict], family: str) -> CorrelationMatrix:
    """Spearman correlations between metric columns of a result table.

    ``rows`` map metric id to fold-mean value (None = undefined). Pairs use
    pairwise-complete rows; pairs with fewer than 3 complete rows come back
    NaN. Requires at least 3 defined values for every metric in the family.
    """
    if family == "acc":
        metrics = ACC_METRICS
    elif family == "fair":
        metrics = FAIR_METRICS
    else:
        raise ConfigError(f"metric family must be 'acc' or 'fair', got {family!r}")

    for metric in metrics:
        defined = sum(1 for row in rows if row.get(metric) is not None)
        if defined < 3:
            raise ConfigError(
                f"correlation_report needs >= 3 rows with defined {metric} "
                f"values, got {defined}"
            )

    m = len(metrics)
    rho = np.full((m, m), np.nan)
    p = np.full((m, m), np.nan)
    star_grid = [["" for _ in range(m)] for _ in range(m)]
    n_grid = np.zeros((m, m), dtype=np.int64)
    for i in range(m):
        rho[i, i] = 1.0
        p[i, i] = 0.0
        star_grid[i][i] = "***"
        n_grid[i, i] = sum(1 for row in rows if row.get(metrics[i]) is not None)
        for j in range(i + 1, m):
            xs, ys = [], []
            for row in rows:
                xv, yv = row.get(metrics[i]), row.get(metrics[j])
                if xv is not None and yv is not None:
                    xs.append(xv)
                    ys.append(yv)
            n_grid[i, j] = n_grid[j, i] = len(xs)
            if len(xs) < 3:
                continue
            r, pv = spearman(xs, ys)
            if r is None:
                continue
            rho[i, j] = rho[j, i] = r
            p[i, j] = p[j, i] = pv
            star_grid[i][j] = star_grid[j][i] = stars(pv)
    return CorrelationMatrix(
        family=family, metrics=metrics, rho=rho, p=p, stars=star_grid, pairwise_n=n_grid
    )


@dataclass(frozen=True)
class CellFoldValues:
    """Per-fold metric values for one grid cell (input to the BM analysis)."""

    base: str
    params_key: str
    mitigation: str
    tau: float
    values: dict[str, list[float | None]]


def cell_folds_from_records(records) -> list[CellFoldValues]:
    """Adapter from in-memory evaluation records (ok cells only)."""
    out = []
    for record in records:
        if record.status != "ok":
            continue
        values: dict[str, list[float | None]] = {m: [] for m in ALL_METRICS}
        for report in record.fold_reports:
            if report is None:
                continue
            for m in ALL_METRICS:
                values[m].append(report[m])
        out.append(
            CellFoldValues(
                base=record.cell.base or "",
                params_key=record.cell.params_json(),
                mitigation=record.cell.mitigation,
                tau=record.cell.tau,
                values=values,
            )
        )
    return out


def cell_folds_from_csv(path: str | Path) -> list[CellFoldValues]:
    """Adapter from a fold_metrics.csv produced by the run command."""
    cells: dict[tuple, dict[str, list[float | None]]] = {}
    meta: dict[tuple, tuple] = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            key = (row["cell_id"],)
            meta[key] = (row["base"], row["params"], row["bm"], float(row["tau"]))
            per_cell = cells.setdefault(key, {m: [] for m in ALL_METRICS})
            value = float(row["value"]) if row["value"] != "" else None
            per_cell[row["metric"]].append(value)
    out = []
    for key, values in cells.items():
        base, params_key, bm, tau = meta[key]
        out.append(
            CellFoldValues(
                base=base, params_key=params_key, mitigation=bm, tau=tau, values=values
            )
        )
    return out


@dataclass(frozen=True)
class EffectClassification:
    """One before/after scenario: (mitigation, base, metric)."""

    mitigation: str
    base: str
    metric: str
    direction: str
    p: float
    u: float
    d: float | None
    bucket: str | None
    n_after: int
    n_before: int


@dataclass
class BmEffectSummary:
    effects: list[EffectClassification]
    skipped: list[str]
    decrease_share_by_metric: dict[str, float]
    decrease_share_by_mitigation: dict[str, float]


def _comparison_values(metric: str, raw: list[float | None]) -> list[float]:
    if metric in ACC_METRICS:
        return [v for v in raw if v is not None]
    return [fairness_cost(v, metric) for v in raw if v is not None]


def bm_effect_analysis(
    cell_folds: list[CellFoldValues],
    alpha: float = SIGNIFICANCE,
    metrics: tuple[str, ...] = ALL_METRICS,
) -> BmEffectSummary:
    """Classify per-scenario metric shifts after mitigation.

    Each mitigated cell pairs with the NONE cell sharing (base, params, tau);
    per-fold values pool into (mitigation, base, metric) scenarios. The U
    test decides significance at ``alpha``; the direction compares medians
    of the transformed values, and Cohen's d sizes the effect.
    """
    baselines: dict[tuple, CellFoldValues] = {}
    for cfv in cell_folds:
        if cfv.mitigation == "NONE":
            baselines[(cfv.base, cfv.params_key, cfv.tau)] = cfv

    scenarios: dict[tuple[str, str, str], tuple[list[float], list[float]]] = {}
    skipped: list[str] = []
    for cfv in cell_folds:
        if cfv.mitigation == "NONE":
            continue
        counterpart = baselines.get((cfv.base, cfv.params_key, cfv.tau))
        if counterpart is None:
            skipped.append(
                f"no NONE baseline for base={cfv.base or '-'} params={cfv.params_key} "
                f"tau={cfv.tau}"
            )
            continue
        for metric in metrics:
            after = _comparison_values(metric, cfv.values.get(metric, []))
            before = _comparison_values(metric, counterpart.values.get(metric, []))
            key = (cfv.mitigation, cfv.base, metric)
            acc_after, acc_before = scenarios.setdefault(key, ([], []))
            acc_after.extend(after)
            acc_before.extend(before)

    effects: list[EffectClassification] = []
    for (mitigation, base, metric), (after, before) in scenarios.items():
        if len(after) < 2 or len(before) < 2:
            skipped.append(
                f"scenario {mitigation}/{base or '-'}/{metric}: "
                f"too few defined folds ({len(after)} vs {len(before)})"
            )
            continue
        u, p = mann_whitney_u(after, before)
        d, bucket = cohens_d(after, before)
        if p < alpha:
            med_after = float(np.median(after))
            med_before = float(np.median(before))
            if med_after == med_before:
                med_after, med_before = float(np.mean(after)), float(np.mean(before))
            direction = DECREASE if med_after < med_before else INCREASE
        else:
            direction = INSIGNIFICANT
        effects.append(
            EffectClassification(
                mitigation=mitigation,
                base=base,
                metric=metric,
                direction=direction,
                p=p,
                u=u,
                d=d,
                bucket=bucket,
                n_after=len(after),
                n_before=len(before),
            )
        )

    def share(group_key) -> dict[str, float]:
        totals: Counter = Counter()
        decreases: Counter = Counter()
        for e in effects:
            key = group_key(e)
            totals[key] += 1
            if e.direction == DECREASE:
                decreases[key] += 1
        return {k: decreases[k] / totals[k] for k in sorted(totals)}

    return BmEffectSummary(
        effects=effects,
        skipped=skipped,
        decrease_share_by_metric=share(lambda e: e.metric),
        decrease_share_by_mitigation=share(lambda e: e.mitigation),
    )


# -- CSV emission ---------------------------------------------------------

def write_correlation_csv(matrix: CorrelationMatrix, path: str | Path) -> None:
    """Square rho matrix; a parallel *_stars.csv carries the annotations."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", *matrix.metrics])
        for i, metric in enumerate(matrix.metrics):
            row = [metric]
            for j in range(len(matrix.metrics)):
                value = matrix.rho[i, j]
                row.append("" if np.isnan(value) else repr(float(value)))
            writer.writerow(row)
    star_path = path.with_name(path.stem + "_stars" + path.suffix)
    with star_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", *matrix.metrics])
        for i, metric in enumerate(matrix.metrics):
            writer.writerow([metric, *matrix.stars[i]])


def write_bm_effects_csv(summary: BmEffectSummary, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario", "metric", "direction", "p", "d", "bucket"])
        if not summary.effects:
            writer.writerow(["(none)", "", "no paired scenarios", "", "", ""])
            return
        for e in summary.effects:
            writer.writerow(
                [
                    f"{e.mitigation}|{e.base or '-'}",
                    e.metric,
                    e.direction,
                    repr(e.p),
                    "" if e.d is None else repr(e.d),
                    e.bucket or "",
                ]
            )
