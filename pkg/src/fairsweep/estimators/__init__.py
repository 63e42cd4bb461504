"""Sample-weight-capable probabilistic binary classifiers.

Four base estimator kinds are implemented from first principles: LR
(regularized logistic regression), RF (random forest), GB (gradient
boosting), GNB (Gaussian naive Bayes). SVM and TABTRANS are registered as
extension points only: their specs validate and enumerate in a grid, but
fitting raises :class:`CapabilityError`.

All fits are deterministic given the spec seed, and sample weights behave
like row replication (exactly for tree split statistics, to solver tolerance
for LR/GNB).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from ..errors import CapabilityError, ConfigError, ContractError, DataError, FitError
from .bayes import GaussianNBModel, fit_gaussian_nb
from .ensemble import (
    GradientBoostingModel,
    RandomForestModel,
    fit_gradient_boosting,
    fit_random_forest,
)
from .linear import LogisticModel, fit_logistic, loss_and_grad

__all__ = [
    "EstimatorSpec",
    "FittedModel",
    "fit",
    "predict_proba",
    "apply_threshold",
    "model_to_dict",
    "model_from_dict",
    "loss_and_grad",
    "IMPLEMENTED_KINDS",
    "EXTENSION_KINDS",
]

FittedModel = Union[LogisticModel, GaussianNBModel, RandomForestModel, GradientBoostingModel]

IMPLEMENTED_KINDS: tuple[str, ...] = ("LR", "RF", "GB", "GNB")
EXTENSION_KINDS: tuple[str, ...] = ("SVM", "TABTRANS")

_KIND_ALIASES = {"NB": "GNB", "TABTRANSFORMER": "TABTRANS"}

# solver tags are accepted as aliases for the penalty they imply
_SOLVER_PENALTY = {"liblinear": "l2", "saga": "l1"}


@dataclass(frozen=True)
class EstimatorSpec:
    """A base estimator kind plus validated hyperparameters and a seed."""

    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self) -> None:
        kind = _KIND_ALIASES.get(self.kind.upper(), self.kind.upper())
        object.__setattr__(self, "kind", kind)
        if kind not in IMPLEMENTED_KINDS + EXTENSION_KINDS:
            raise ConfigError(f"unknown base estimator kind {self.kind!r}")
        object.__setattr__(self, "params", _validate_params(kind, dict(self.params)))

    def canonical_params(self) -> dict:
        return dict(sorted(self.params.items()))


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _validate_params(kind: str, params: dict) -> dict:
    if kind == "LR":
        if "solver" in params:
            solver = params.pop("solver")
            _require(solver in _SOLVER_PENALTY, f"LR solver tag must be one of {sorted(_SOLVER_PENALTY)}")
            params.setdefault("penalty", _SOLVER_PENALTY[solver])
        out = {"C": float(params.pop("C", 1.0)), "penalty": params.pop("penalty", "l2")}
        _require(out["C"] > 0, "LR C must be > 0")
        _require(out["penalty"] in ("l1", "l2"), "LR penalty must be 'l1' or 'l2'")
    elif kind == "RF":
        out = {
            "n_estimators": int(params.pop("n_estimators", 50)),
            "criterion": params.pop("criterion", "gini"),
        }
        if "max_depth" in params:
            out["max_depth"] = int(params.pop("max_depth"))
            _require(out["max_depth"] >= 1, "RF max_depth must be >= 1")
        _require(out["n_estimators"] >= 1, "RF n_estimators must be >= 1")
        _require(out["criterion"] in ("gini", "entropy"), "RF criterion must be 'gini' or 'entropy'")
    elif kind == "GB":
        out = {
            "n_estimators": int(params.pop("n_estimators", 50)),
            "max_depth": int(params.pop("max_depth", 3)),
        }
        if "criterion" in params:
            crit = params.pop("criterion")
            _require(
                crit in ("friedman_mse", "squared_error"),
                "GB criterion tag must be 'friedman_mse' or 'squared_error'",
            )
            out["criterion"] = crit
        # n_estimators=0 is the prior-only degenerate model
        _require(out["n_estimators"] >= 0, "GB n_estimators must be >= 0")
        _require(out["max_depth"] >= 1, "GB max_depth must be >= 1")
    elif kind == "GNB":
        out = {"var_smoothing": float(params.pop("var_smoothing", 1e-9))}
        _require(out["var_smoothing"] >= 0, "GNB var_smoothing must be >= 0")
    else:  # extension points: keep params verbatim
        out = dict(params)
        params = {}
    if params:
        raise ConfigError(f"unknown {kind} parameter(s): {sorted(params)}")
    return out


def _as_matrix(X) -> np.ndarray:
    return np.asarray(getattr(X, "X", X), dtype=np.float64)


def fit(spec: EstimatorSpec, X, y: np.ndarray, w: np.ndarray | None = None) -> FittedModel:
    """Fit the spec'd estimator on weighted data.

    Raises:
        FitError: only one class carries positive weight.
        DataError: non-finite feature values.
        CapabilityError: the kind is an unimplemented extension point.
    """
    Xm = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    if w is None:
        w = np.ones(Xm.shape[0])
    w = np.asarray(w, dtype=np.float64)
    if not (Xm.shape[0] == y.size == w.size):
        raise ContractError("X, y and w must agree on the number of rows")
    if not np.all(np.isfinite(Xm)):
        raise DataError("feature matrix contains non-finite values")
    if np.any(w < 0):
        raise ContractError("weights must be nonnegative")
    if w.sum() <= 0:
        raise FitError("weights sum to zero")
    if (w * y).sum() <= 0 or (w * (1.0 - y)).sum() <= 0:
        raise FitError("both classes need positive total weight")

    p = spec.params
    if spec.kind == "LR":
        model = fit_logistic(Xm, y, w, C=p["C"], penalty=p["penalty"], params=p)
    elif spec.kind == "GNB":
        model = fit_gaussian_nb(Xm, y, w, var_smoothing=p["var_smoothing"], params=p)
    elif spec.kind == "RF":
        model = fit_random_forest(
            Xm,
            y,
            w,
            n_estimators=p["n_estimators"],
            criterion=p["criterion"],
            max_depth=p.get("max_depth"),
            seed=spec.seed,
            params=p,
        )
    elif spec.kind == "GB":
        model = fit_gradient_boosting(
            Xm, y, w, n_estimators=p["n_estimators"], max_depth=p["max_depth"], params=p
        )
    else:
        raise CapabilityError(
            f"base estimator {spec.kind} is an extension point and cannot be fitted"
        )
    model.meta["seed"] = spec.seed
    return model


def predict_proba(model: FittedModel, X) -> np.ndarray:
    """Favorable-class scores in [0,1]; raises on feature-count mismatch."""
    Xm = _as_matrix(X)
    if Xm.shape[1] != model.d:
        raise ContractError(
            f"feature count mismatch: model expects {model.d}, got {Xm.shape[1]}"
        )
    scores = np.asarray(model.predict_proba(Xm), dtype=np.float64)
    if not np.all(np.isfinite(scores)):
        raise ContractError("model produced non-finite scores")
    return np.clip(scores, 0.0, 1.0)


def apply_threshold(scores: np.ndarray, tau: float) -> np.ndarray:
    """Binary predictions: favorable iff score >= tau, tau in (0,1)."""
    if not 0.0 < tau < 1.0:
        raise ConfigError(f"threshold must be in (0,1), got {tau}")
    return (np.asarray(scores) >= tau).astype(np.int64)


_MODEL_CLASSES = {
    "LR": LogisticModel,
    "GNB": GaussianNBModel,
    "RF": RandomForestModel,
    "GB": GradientBoostingModel,
}

MODEL_FORMAT_VERSION = 1


def model_to_dict(model: FittedModel) -> dict:
    """Versioned JSON-ready document for a fitted model."""
    doc = model.to_dict()
    doc["format_version"] = MODEL_FORMAT_VERSION
    return doc


def model_from_dict(doc: dict) -> FittedModel:
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ConfigError(f"unsupported model format version {version!r}")
    kind = doc.get("kind")
    if kind not in _MODEL_CLASSES:
        raise ConfigError(f"unknown model kind {kind!r}")
    return _MODEL_CLASSES[kind].from_dict(doc)
