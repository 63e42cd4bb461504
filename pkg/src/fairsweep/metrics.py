"""Accuracy and group/individual fairness metrics.

All metric values are plain floats; a metric whose defining rate hits a 0/0
is reported as ``None`` (an explicit undefined flag) so that fold averaging
can skip and count it rather than silently treating it as 0.

Group differences are oriented unprivileged minus privileged: a negative SPD
means the unprivileged group receives the favorable outcome less often.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError

ACC_METRICS: tuple[str, ...] = ("ACC", "BACC", "F1", "AUC", "MCC", "NORM_MCC")
FAIR_METRICS: tuple[str, ...] = ("SPD", "AOD", "EOD", "FORD", "PPVD", "CNS", "GEI", "TI")
ALL_METRICS: tuple[str, ...] = ACC_METRICS + FAIR_METRICS

# metrics whose optimum is 1 rather than 0 (used by fairness_cost)
_OPTIMUM_ONE = frozenset({"CNS"})


@dataclass(frozen=True)
class Counts:
    """Weighted confusion counts for one group (or overall)."""

    tp: float = 0.0
    fp: float = 0.0
    tn: float = 0.0
    fn: float = 0.0

    @property
    def n(self) -> float:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "Counts") -> "Counts":
        return Counts(
            self.tp + other.tp,
            self.fp + other.fp,
            self.tn + other.tn,
            self.fn + other.fn,
        )


@dataclass(frozen=True)
class GroupConfusion:
    """Confusion counts split by protected group."""

    priv: Counts
    unpriv: Counts

    @property
    def overall(self) -> Counts:
        return self.priv + self.unpriv


def confusion(
    y: np.ndarray,
    y_pred: np.ndarray,
    s: np.ndarray,
    w: np.ndarray | None = None,
) -> GroupConfusion:
    """Weighted confusion counts per protected group.

    ``s`` is 1 for the privileged group. ``w`` defaults to unit weights.
    """
    y = np.asarray(y)
    y_pred = np.asarray(y_pred)
    s = np.asarray(s)
    if not (y.shape == y_pred.shape == s.shape):
        raise ContractError("y, y_pred and s must have equal lengths")
    if w is None:
        w = np.ones_like(y, dtype=np.float64)
    else:
        w = np.asarray(w, dtype=np.float64)
        if w.shape != y.shape:
            raise ContractError("weight vector length mismatch")
    for name, arr in (("y", y), ("y_pred", y_pred), ("s", s)):
        if not set(np.unique(arr).tolist()) <= {0, 1}:
            raise ContractError(f"{name} must be binary 0/1")

    def counts(mask: np.ndarray) -> Counts:
        yy, pp, ww = y[mask], y_pred[mask], w[mask]
        return Counts(
            tp=float(ww[(yy == 1) & (pp == 1)].sum()),
            fp=float(ww[(yy == 0) & (pp == 1)].sum()),
            tn=float(ww[(yy == 0) & (pp == 0)].sum()),
            fn=float(ww[(yy == 1) & (pp == 0)].sum()),
        )

    return GroupConfusion(priv=counts(s == 1), unpriv=counts(s == 0))


def _ratio(num: float, den: float) -> float | None:
    return None if den == 0 else num / den


def accuracy_metrics(
    conf: GroupConfusion,
    scores: np.ndarray,
    y: np.ndarray,
) -> dict[str, float | None]:
    """ACC, BACC, F1, AUC, MCC and its [0,1] rescaling NORM_MCC.

    AUC is the rank (Mann-Whitney) form: the probability that a random
    positive outranks a random negative, ties counted one half. MCC uses the
    determinant formula with 0 substituted when any marginal count is 0.
    """
    c = conf.overall
    if c.n == 0:
        raise ContractError("empty confusion")
    tpr = _ratio(c.tp, c.tp + c.fn)
    tnr = _ratio(c.tn, c.tn + c.fp)
    acc = (c.tp + c.tn) / c.n
    bacc = None if tpr is None or tnr is None else 0.5 * (tpr + tnr)
    f1 = _ratio(2.0 * c.tp, 2.0 * c.tp + c.fp + c.fn)

    denom = (c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn)
    if denom == 0:
        mcc = 0.0
    else:
        mcc = (c.tp * c.tn - c.fp * c.fn) / math.sqrt(denom)

    return {
        "ACC": acc,
        "BACC": bacc,
        "F1": f1,
        "AUC": auc_score(y, scores),
        "MCC": mcc,
        "NORM_MCC": 0.5 * (mcc + 1.0),
    }


def auc_score(y: np.ndarray, scores: np.ndarray) -> float | None:
    """Rank-based AUC; None when only one class is present."""
    y = np.asarray(y)
    scores = np.asarray(scores, dtype=np.float64)
    if y.shape != scores.shape:
        raise ContractError("y and scores must have equal lengths")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = _midranks(scores)
    rank_sum = float(ranks[y == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the group mid-rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def group_fairness(conf: GroupConfusion) -> dict[str, float | None]:
    """SPD, AOD, EOD, FORD, PPVD as unprivileged-minus-privileged differences.

    Any difference whose underlying rate is a 0/0 comes back as None.
    """
    u, p = conf.unpriv, conf.priv

    def diff(fu: float | None, fp: float | None) -> float | None:
        return None if fu is None or fp is None else fu - fp

    fav_u = _ratio(u.tp + u.fp, u.n)
    fav_p = _ratio(p.tp + p.fp, p.n)
    tpr_u = _ratio(u.tp, u.tp + u.fn)
    tpr_p = _ratio(p.tp, p.tp + p.fn)
    fpr_u = _ratio(u.fp, u.fp + u.tn)
    fpr_p = _ratio(p.fp, p.fp + p.tn)
    for_u = _ratio(u.fn, u.fn + u.tn)
    for_p = _ratio(p.fn, p.fn + p.tn)
    ppv_u = _ratio(u.tp, u.tp + u.fp)
    ppv_p = _ratio(p.tp, p.tp + p.fp)

    tpr_diff = diff(tpr_u, tpr_p)
    fpr_diff = diff(fpr_u, fpr_p)
    aod = None if tpr_diff is None or fpr_diff is None else 0.5 * (fpr_diff + tpr_diff)
    return {
        "SPD": diff(fav_u, fav_p),
        "AOD": aod,
        "EOD": tpr_diff,
        "FORD": diff(for_u, for_p),
        "PPVD": diff(ppv_u, ppv_p),
    }


def consistency(X: np.ndarray, y_pred: np.ndarray, k: int = 5) -> float:
    """kNN consistency: 1 - mean |prediction - mean prediction of k nearest|.

    Euclidean distance on the (already standardized) feature rows, self
    excluded, distance ties broken by row index. Optimum is 1.

    Raises:
        ConfigError: k >= number of rows.
    """
    X = np.asarray(getattr(X, "X", X), dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    n = X.shape[0]
    if k >= n:
        raise ConfigError(f"consistency needs k < n (k={k}, n={n})")
    sq = (X * X).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.fill_diagonal(d2, np.inf)
    # stable argsort on distances = tie-break by row index
    neighbor_idx = np.argsort(d2, axis=1, kind="stable")[:, :k]
    neighbor_mean = y_pred[neighbor_idx].mean(axis=1)
    return float(1.0 - np.abs(y_pred - neighbor_mean).mean())


def generalized_entropy(y: np.ndarray, y_pred: np.ndarray, alpha: float) -> float | None:
    """Generalized entropy of per-individual benefits b = y_pred - y + 1.

    alpha=2 is the GEI reported by this package, alpha=1 the Theil index
    (with 0*ln 0 := 0). Undefined (None) when all benefits are 0.
    """
    y = np.asarray(y, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y.shape != y_pred.shape:
        raise ContractError("y and y_pred must have equal lengths")
    b = y_pred - y + 1.0
    mu = b.mean()
    if mu == 0.0:
        return None
    r = b / mu
    n = b.size
    if alpha == 1.0:
        terms = np.where(r > 0, r * np.log(np.where(r > 0, r, 1.0)), 0.0)
        return float(terms.sum() / n)
    if alpha == 0.0:
        if np.any(r <= 0):
            return None
        return float(-np.log(r).sum() / n)
    return float((np.power(r, alpha) - 1.0).sum() / (n * alpha * (alpha - 1.0)))


def fairness_cost(value: float | None, metric_id: str) -> float | None:
    """Distance of a metric value to its optimum (0, or 1 for CNS)."""
    if metric_id not in ALL_METRICS:
        raise ConfigError(f"unknown metric id {metric_id!r}")
    if value is None:
        return None
    if metric_id in _OPTIMUM_ONE:
        return abs(value - 1.0)
    return abs(value)


def full_report(
    y: np.ndarray,
    y_pred: np.ndarray,
    scores: np.ndarray,
    s: np.ndarray,
    X: np.ndarray,
    cns_k: int = 5,
    gei_alpha: float = 2.0,
) -> dict[str, float | None]:
    """All 14 metrics for one evaluation, keyed by canonical id."""
    conf = confusion(y, y_pred, s)
    report: dict[str, float | None] = {}
    report.update(accuracy_metrics(conf, scores, y))
    report.update(group_fairness(conf))
    report["CNS"] = consistency(X, y_pred, k=cns_k)
    report["GEI"] = generalized_entropy(y, y_pred, alpha=gei_alpha)
    report["TI"] = generalized_entropy(y, y_pred, alpha=1.0)
    return report
