"""Bias mitigation applied before, during, or after base-estimator training.

Implemented method ids: NONE, RW (reweighing), ROC (reject option), CEO
(calibrated score mixing), EGR (exponentiated-gradient reduction), and the
mixed RW_ROC / RW_CEO. LFR_PRE, LFR_IN and AD are reserved registry slots
that validate and enumerate but refuse to run.

Post-processors learn their parameters on the training fold's own
predictions and are then applied to the deployment (test) fold; learning
them on the test fold would leak.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import estimators
from .errors import (
    CapabilityError,
    ConfigError,
    ContractError,
    DataError,
    NotImplementedMitigationError,
)
from .estimators import EstimatorSpec, apply_threshold, fit, predict_proba
from .metrics import ALL_METRICS, FAIR_METRICS, confusion, consistency, fairness_cost
from .metrics import generalized_entropy, group_fairness

PRE, IN, POST, MIXED = "pre", "in", "post", "mixed"

# id -> (stage, implemented, base_invariant)
MITIGATION_REGISTRY: dict[str, tuple[str, bool, bool]] = {
    "NONE": ("none", True, False),
    "RW": (PRE, True, False),
    "LFR_PRE": (PRE, False, False),
    "LFR_IN": (IN, False, True),
    "AD": (IN, False, True),
    "EGR": (IN, True, False),
    "ROC": (POST, True, False),
    "CEO": (POST, True, False),
    "RW_ROC": (MIXED, True, False),
    "RW_CEO": (MIXED, True, False),
}

IMPLEMENTED_MITIGATIONS = tuple(k for k, v in MITIGATION_REGISTRY.items() if v[1])
RESERVED_MITIGATIONS = tuple(k for k, v in MITIGATION_REGISTRY.items() if not v[1])

# (base kind, mitigation) pairs that cannot run together and are skipped
# during grid enumeration
INCOMPATIBLE_PAIRS: frozenset[tuple[str, str]] = frozenset(
    {("TABTRANS", "LFR_PRE"), ("TABTRANS", "EGR")}
)

DEFAULT_ROC_BANDS: tuple[float, ...] = (0.0, 0.05, 0.10, 0.15, 0.20)


def validate_mitigation_id(mid: str) -> str:
    mid = mid.upper()
    if mid not in MITIGATION_REGISTRY:
        raise ConfigError(f"unknown mitigation id {mid!r}")
    return mid


def stage_of(mid: str) -> str:
    return MITIGATION_REGISTRY[validate_mitigation_id(mid)][0]


def is_base_invariant(mid: str) -> bool:
    return MITIGATION_REGISTRY[validate_mitigation_id(mid)][2]


def fit_stage_of(mid: str) -> str:
    """How the base fit is produced: 'plain', 'rw' (reweighed) or 'egr'."""
    mid = validate_mitigation_id(mid)
    if mid in ("RW", "RW_ROC", "RW_CEO"):
        return "rw"
    if mid == "EGR":
        return "egr"
    return "plain"


def post_stage_of(mid: str) -> str | None:
    mid = validate_mitigation_id(mid)
    if mid in ("ROC", "RW_ROC"):
        return "roc"
    if mid in ("CEO", "RW_CEO"):
        return "ceo"
    return None


def reweigh(y: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Per-row weights making label and group statistically independent.

    Row i in cell (s=a, y=b) receives P(s=a)P(y=b)/P(s=a, y=b). After
    weighting, both groups have the same weighted favorable-label rate and
    the weights sum to n. An empty (s, y) cell gets weight 0 with a warning.
    """
    y = np.asarray(y)
    s = np.asarray(s)
    if y.shape != s.shape:
        raise ContractError("y and s must have equal lengths")
    n = y.size
    if np.unique(s).size < 2 or np.unique(y).size < 2:
        raise DataError("reweighing needs both groups and both classes present")
    w = np.empty(n, dtype=np.float64)
    for a in (0, 1):
        for b in (0, 1):
            cell = (s == a) & (y == b)
            n_cell = int(cell.sum())
            if n_cell == 0:
                warnings.warn(f"empty (s={a}, y={b}) cell in reweighing", stacklevel=2)
                continue
            p_s = float((s == a).sum()) / n
            p_y = float((y == b).sum()) / n
            w[cell] = p_s * p_y / (n_cell / n)
    return w


def roc_adjust(
    scores: np.ndarray,
    s: np.ndarray,
    tau: float,
    band: float,
) -> np.ndarray:
    """Reject-option predictions.

    Outside the critical region |score - tau| >= band the plain threshold
    applies; strictly inside it, unprivileged rows get the favorable label
    and privileged rows the unfavorable one. band=0 is exactly the plain
    threshold.
    """
    scores = np.asarray(scores, dtype=np.float64)
    s = np.asarray(s)
    if not 0.0 <= band <= min(tau, 1.0 - tau) + 1e-12:
        raise ConfigError(
            f"ROC band must be in [0, min(tau, 1-tau)] = [0, {min(tau, 1 - tau)}], got {band}"
        )
    pred = apply_threshold(scores, tau)
    inside = np.abs(scores - tau) < band
    pred = np.where(inside & (s == 0), 1, pred)
    pred = np.where(inside & (s == 1), 0, pred)
    return pred.astype(np.int64)


def roc_select_band(
    scores: np.ndarray,
    y: np.ndarray,
    s: np.ndarray,
    tau: float,
    bands: tuple[float, ...],
    fair_metric: str,
    X: np.ndarray | None = None,
    cns_k: int = 5,
) -> float:
    """Grid band minimizing the target metric's distance to optimum.

    Evaluated on validation predictions (here: the training fold's own).
    Ties resolve to the smallest band; if every band leaves the metric
    undefined, returns band 0.
    """
    if len(bands) == 0:
        raise ConfigError("ROC band grid must be nonempty")
    if fair_metric not in ALL_METRICS:
        raise ConfigError(f"unknown fairness metric id {fair_metric!r}")
    max_band = min(tau, 1.0 - tau)
    best_band: float | None = None
    best_cost = np.inf
    for band in sorted(bands):
        if band > max_band + 1e-12:
            continue
        pred = roc_adjust(scores, s, tau, band)
        value = _metric_value(fair_metric, y, pred, s, X, cns_k)
        cost = fairness_cost(value, fair_metric)
        if cost is not None and cost < best_cost - 1e-15:
            best_cost = cost
            best_band = band
    return 0.0 if best_band is None else float(best_band)


def _metric_value(
    metric: str,
    y: np.ndarray,
    pred: np.ndarray,
    s: np.ndarray,
    X: np.ndarray | None,
    cns_k: int,
) -> float | None:
    if metric in ("GEI", "TI"):
        return generalized_entropy(y, pred, alpha=2.0 if metric == "GEI" else 1.0)
    if metric == "CNS":
        if X is None:
            raise ConfigError("CNS as a mitigation target requires validation features")
        return consistency(X, pred, k=cns_k)
    if metric in FAIR_METRICS:
        return group_fairness(confusion(y, pred, s))[metric]
    raise ConfigError(f"{metric} is not a fairness metric")


@dataclass(frozen=True)
class CeoAdjustment:
    """Learned calibrated-odds mixing: which group mixes, at what rate."""

    mix_group: int | None  # 0 unpriv / 1 priv / None (no mixing)
    p: float
    base_rate: float  # validation label base rate of the mixed group
    costs: tuple[float, float]  # (unpriv, priv) generalized costs

    def apply(
        self, scores: np.ndarray, s: np.ndarray, rng: np.random.Generator
    ) -> np.ndarray:
        if self.mix_group is None or self.p <= 0.0:
            return np.asarray(scores, dtype=np.float64).copy()
        scores = np.asarray(scores, dtype=np.float64).copy()
        rows = np.flatnonzero(np.asarray(s) == self.mix_group)
        mix = rng.random(rows.size) < self.p
        scores[rows[mix]] = self.base_rate
        return scores


def ceo_learn(
    scores: np.ndarray,
    y: np.ndarray,
    s: np.ndarray,
    cost: str = "fnr",
) -> CeoAdjustment:
    """Learn the mixing rate that equalizes generalized cost across groups.

    The lower-cost group's scores are mixed toward its label base rate with
    probability p = (cost_high - cost_low) / (trivial_low - cost_low),
    clamped to [0, 1]. A degenerate denominator yields p = 0.
    """
    if cost not in ("fnr", "fpr", "weighted"):
        raise ConfigError(f"CEO cost must be fnr, fpr or weighted, got {cost!r}")
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(y)
    s = np.asarray(s)
    if np.unique(s).size < 2:
        raise DataError("CEO needs both groups present in validation data")

    group_cost: dict[int, float] = {}
    group_trivial: dict[int, float] = {}
    group_rate: dict[int, float] = {}
    for g in (0, 1):
        mask = s == g
        yy, sc = y[mask], scores[mask]
        br = float(yy.mean())
        pos, neg = yy == 1, yy == 0
        gfnr = float((1.0 - sc[pos]).mean()) if pos.any() else None
        gfpr = float(sc[neg].mean()) if neg.any() else None
        if cost == "fnr":
            c, t = gfnr, 1.0 - br
        elif cost == "fpr":
            c, t = gfpr, br
        else:
            if gfnr is None or gfpr is None:
                c = None
            else:
                c = gfpr * (1.0 - br) + gfnr * br
            t = 2.0 * br * (1.0 - br)
        if c is None:
            warnings.warn(
                f"CEO cost undefined for group {g} (single-class validation data); "
                "mixing disabled",
                stacklevel=2,
            )
            return CeoAdjustment(mix_group=None, p=0.0, base_rate=0.0, costs=(0.0, 0.0))
        group_cost[g], group_trivial[g], group_rate[g] = c, t, br

    if group_cost[0] == group_cost[1]:
        return CeoAdjustment(
            mix_group=None, p=0.0, base_rate=0.0, costs=(group_cost[0], group_cost[1])
        )
    low = 0 if group_cost[0] < group_cost[1] else 1
    high = 1 - low
    denom = group_trivial[low] - group_cost[low]
    p = 0.0 if denom == 0.0 else (group_cost[high] - group_cost[low]) / denom
    p = float(np.clip(p, 0.0, 1.0))
    return CeoAdjustment(
        mix_group=low,
        p=p,
        base_rate=group_rate[low],
        costs=(group_cost[0], group_cost[1]),
    )


def ceo_adjust(
    val_scores: np.ndarray,
    val_y: np.ndarray,
    val_s: np.ndarray,
    deploy_scores: np.ndarray,
    deploy_s: np.ndarray,
    cost: str,
    rng: np.random.Generator,
) -> tuple[np.ndarray, CeoAdjustment]:
    """Learn on validation predictions, mix the deployment scores."""
    adj = ceo_learn(val_scores, val_y, val_s, cost=cost)
    return adj.apply(deploy_scores, deploy_s, rng), adj


@dataclass(frozen=True)
class EgrParams:
    eps: float = 0.01
    rounds: int = 50
    bound: float = 100.0
    eta: float = 2.0
    constraint: str = "dp"  # 'dp' or 'eo'

    def __post_init__(self) -> None:
        if self.eps <= 0:
            raise ConfigError("EGR eps must be > 0")
        if self.rounds < 1:
            raise ConfigError("EGR rounds must be >= 1")
        if self.bound <= 0:
            raise ConfigError("EGR bound must be > 0")
        if self.constraint not in ("dp", "eo"):
            raise ConfigError("EGR constraint must be 'dp' or 'eo'")


class EGRMixture:
    """Uniform mixture over the per-round fits; scores are member means."""

    kind = "EGR"

    def __init__(
        self,
        members: list,
        lambda_history: list[np.ndarray],
        params: dict,
    ):
        self.members = members
        self.lambda_history = lambda_history
        self.params = dict(params)

    @property
    def d(self) -> int:
        return self.members[0].d

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        acc = np.zeros(np.asarray(X).shape[0])
        for m in self.members:
            acc += predict_proba(m, X)
        return acc / len(self.members)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": self.params,
            "members": [estimators.model_to_dict(m) for m in self.members],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EGRMixture":
        members = [estimators.model_from_dict(m) for m in doc["members"]]
        return cls(members, lambda_history=[], params=doc.get("params", {}))


def _constraint_matrix(
    y: np.ndarray, s: np.ndarray, constraint: str
) -> np.ndarray:
    """Rows are signed constraint coefficient vectors c_k over examples.

    Demographic parity: per group a and sign, c = sign * (1{s=a}/n_a - 1/n).
    Equalized odds conditions additionally on the true label.
    """
    n = y.size
    rows = []
    if constraint == "dp":
        for a in (0, 1):
            ind = (s == a).astype(np.float64)
            n_a = ind.sum()
            base = ind / n_a - 1.0 / n
            rows.extend([base, -base])
    else:
        for y0 in (0, 1):
            in_y = (y == y0).astype(np.float64)
            n_y = in_y.sum()
            for a in (0, 1):
                ind = ((s == a) & (y == y0)).astype(np.float64)
                n_ay = ind.sum()
                if n_ay == 0 or n_y == 0:
                    rows.extend([np.zeros(n), np.zeros(n)])
                    continue
                base = ind / n_ay - in_y / n_y
                rows.extend([base, -base])
    return np.array(rows)


def egr_train(
    base: EstimatorSpec,
    X,
    y: np.ndarray,
    s: np.ndarray,
    params: EgrParams = EgrParams(),
) -> EGRMixture:
    """Exponentiated-gradient reduction to cost-sensitive fits.

    Multiplier logits start at 0 (so round 1 is the plain fit: the two signs
    of every constraint cancel), are updated by eta * violation, and map to
    multipliers on the ||lambda||_1 <= bound simplex-with-slack. Each round
    fits the base estimator on |cost| sample weights with negative-cost rows
    label-flipped; the result is the uniform mixture over rounds.
    """
    if base.kind in estimators.EXTENSION_KINDS:
        raise CapabilityError(
            f"EGR needs a weight-capable base estimator; {base.kind} is an extension point"
        )
    Xm = np.asarray(getattr(X, "X", X), dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    s = np.asarray(s, dtype=np.int64)
    n = y.size
    C = _constraint_matrix(y, s, params.constraint)
    k = C.shape[0]

    theta = np.zeros(k)
    members = []
    lambda_history: list[np.ndarray] = []
    seeds = np.random.SeedSequence(base.seed).generate_state(params.rounds)
    prev_model = None
    for t in range(params.rounds):
        expt = np.exp(theta - theta.max())
        # simplex-with-slack: the implicit slack coordinate keeps exp(0 - max)
        lam = params.bound * expt / (np.exp(-theta.max()) + expt.sum())
        lambda_history.append(lam.copy())

        g = C.T @ lam
        delta = (2.0 * y - 1.0) - n * g
        labels = (delta > 0).astype(np.int64)
        weights = np.abs(delta)
        # round 0 keeps the base seed so one round reproduces the plain fit
        round_spec = base if t == 0 else replace(base, seed=int(seeds[t]))
        try:
            model = fit(round_spec, Xm, labels, weights)
        except Exception:
            if prev_model is None:
                raise
            model = prev_model  # degenerate round: reuse the previous fit
        members.append(model)
        prev_model = model

        pred = apply_threshold(predict_proba(model, Xm), 0.5).astype(np.float64)
        violation = C @ pred - params.eps
        # eta is the base rate of the standard formulation, which steps the
        # multiplier logits by eta/bound per unit violation; an unscaled step
        # of this size makes the lambda game oscillate instead of converge
        theta = theta + (params.eta / params.bound) * violation

    return EGRMixture(
        members=members,
        lambda_history=lambda_history,
        params={
            "eps": params.eps,
            "rounds": params.rounds,
            "bound": params.bound,
            "eta": params.eta,
            "constraint": params.constraint,
            "base": {"kind": base.kind, "params": base.canonical_params()},
        },
    )


@dataclass
class MitigationContext:
    """Everything a mitigation pipeline needs for one train/deploy split."""

    base: EstimatorSpec
    X_train: np.ndarray
    y_train: np.ndarray
    s_train: np.ndarray
    X_deploy: np.ndarray
    s_deploy: np.ndarray
    tau: float
    fair_metric: str = "SPD"
    w_train: np.ndarray | None = None
    roc_bands: tuple[float, ...] = DEFAULT_ROC_BANDS
    ceo_cost: str = "fnr"
    egr: EgrParams = field(default_factory=EgrParams)
    cns_k: int = 5
    seed: int = 0


@dataclass
class PipelineOutcome:
    """Result of one mitigation pipeline on a split: model, scores, labels."""

    mitigation: str
    model: object
    train_weights: np.ndarray
    deploy_scores: np.ndarray
    predictions: np.ndarray
    details: dict


def fit_pipeline(
    fit_stage: str,
    base: EstimatorSpec,
    X_train: np.ndarray,
    y_train: np.ndarray,
    s_train: np.ndarray,
    w_train: np.ndarray | None,
    egr_params: EgrParams,
) -> tuple[object, np.ndarray]:
    """Produce the fitted model and the training weights for a fit stage."""
    w = np.ones(np.asarray(y_train).size) if w_train is None else np.asarray(w_train, dtype=np.float64)
    if fit_stage == "rw":
        w = w * reweigh(y_train, s_train)
        return fit(base, X_train, y_train, w), w
    if fit_stage == "egr":
        return egr_train(base, X_train, y_train, s_train, egr_params), w
    return fit(base, X_train, y_train, w), w


def apply_post(
    post: str | None,
    train_scores: np.ndarray,
    y_train: np.ndarray,
    s_train: np.ndarray,
    deploy_scores: np.ndarray,
    s_deploy: np.ndarray,
    tau: float,
    fair_metric: str,
    roc_bands: tuple[float, ...],
    ceo_cost: str,
    rng: np.random.Generator,
    X_train: np.ndarray | None = None,
    cns_k: int = 5,
) -> tuple[np.ndarray, np.ndarray, dict]:
    """Apply a post stage; returns (scores used, predictions, details)."""
    if post is None:
        return deploy_scores, apply_threshold(deploy_scores, tau), {}
    if post == "roc":
        band = roc_select_band(
            train_scores, y_train, s_train, tau, roc_bands, fair_metric, X_train, cns_k
        )
        return (
            deploy_scores,
            roc_adjust(deploy_scores, s_deploy, tau, band),
            {"roc_band": band},
        )
    if post == "ceo":
        mixed, adj = ceo_adjust(
            train_scores, y_train, s_train, deploy_scores, s_deploy, ceo_cost, rng
        )
        details = {
            "ceo_p": adj.p,
            "ceo_mix_group": adj.mix_group,
            "ceo_base_rate": adj.base_rate,
        }
        return mixed, apply_threshold(mixed, tau), details
    raise ConfigError(f"unknown post stage {post!r}")


def apply_mitigation(mid: str, ctx: MitigationContext) -> PipelineOutcome:
    """Run the full pre -> in -> post composition for one mitigation id."""
    mid = validate_mitigation_id(mid)
    if mid in RESERVED_MITIGATIONS:
        raise NotImplementedMitigationError(
            f"mitigation {mid} is a reserved registry slot and is not implemented"
        )
    model, weights = fit_pipeline(
        fit_stage_of(mid), ctx.base, ctx.X_train, ctx.y_train, ctx.s_train,
        ctx.w_train, ctx.egr,
    )
    train_scores = predict_proba(model, ctx.X_train)
    deploy_scores = predict_proba(model, ctx.X_deploy)
    rng = np.random.default_rng(ctx.seed)
    scores_used, predictions, details = apply_post(
        post_stage_of(mid),
        train_scores,
        ctx.y_train,
        ctx.s_train,
        deploy_scores,
        ctx.s_deploy,
        ctx.tau,
        ctx.fair_metric,
        ctx.roc_bands,
        ctx.ceo_cost,
        rng,
        X_train=ctx.X_train,
        cns_k=ctx.cns_k,
    )
    return PipelineOutcome(
        mitigation=mid,
        model=model,
        train_weights=weights,
        deploy_scores=scores_used,
        predictions=predictions,
        details=details,
    )


def pipeline_model_to_dict(model) -> dict:
    """Serialize either a base model or an EGR mixture."""
    if isinstance(model, EGRMixture):
        doc = model.to_dict()
        doc["format_version"] = estimators.MODEL_FORMAT_VERSION
        return doc
    return estimators.model_to_dict(model)


def pipeline_model_from_dict(doc: dict):
    if doc.get("kind") == "EGR":
        return EGRMixture.from_dict(doc)
    return estimators.model_from_dict(doc)
