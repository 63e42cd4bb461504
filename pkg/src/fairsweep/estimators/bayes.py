"""Weighted Gaussian naive Bayes."""

from __future__ import annotations

import numpy as np

_VAR_ABS_FLOOR = 1e-12


class GaussianNBModel:
    """Per-class weighted Gaussian feature likelihoods with a variance floor.

    The floor is ``var_smoothing * max feature variance`` (variance taken over
    the whole weighted training set), so class-constant features cannot
    produce degenerate likelihoods.
    """

    kind = "GNB"

    def __init__(
        self,
        log_prior: np.ndarray,
        mean: np.ndarray,
        var: np.ndarray,
        params: dict,
        meta: dict | None = None,
    ):
        self.log_prior = np.asarray(log_prior, dtype=np.float64)  # (2,)
        self.mean = np.asarray(mean, dtype=np.float64)  # (2, d)
        self.var = np.asarray(var, dtype=np.float64)  # (2, d)
        self.params = dict(params)
        self.meta = dict(meta or {})

    @property
    def d(self) -> int:
        return int(self.mean.shape[1])

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        log_post = np.empty((X.shape[0], 2))
        for c in (0, 1):
            diff = X - self.mean[c]
            log_like = -0.5 * (np.log(2.0 * np.pi * self.var[c]) + diff * diff / self.var[c])
            log_post[:, c] = self.log_prior[c] + log_like.sum(axis=1)
        log_post -= log_post.max(axis=1, keepdims=True)
        post = np.exp(log_post)
        return post[:, 1] / post.sum(axis=1)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": self.params,
            "log_prior": self.log_prior.tolist(),
            "mean": self.mean.tolist(),
            "var": self.var.tolist(),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianNBModel":
        return cls(
            np.array(d["log_prior"]),
            np.array(d["mean"]),
            np.array(d["var"]),
            d["params"],
            d.get("meta"),
        )


def fit_gaussian_nb(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    var_smoothing: float,
    params: dict,
) -> GaussianNBModel:
    wsum = float(w.sum())
    global_mean = (w[:, None] * X).sum(axis=0) / wsum
    global_var = (w[:, None] * (X - global_mean) ** 2).sum(axis=0) / wsum
    floor = max(var_smoothing * float(global_var.max(initial=0.0)), _VAR_ABS_FLOOR)

    log_prior = np.empty(2)
    mean = np.empty((2, X.shape[1]))
    var = np.empty((2, X.shape[1]))
    for c in (0, 1):
        mask = y == c
        wc = w[mask]
        wc_sum = float(wc.sum())
        log_prior[c] = np.log(wc_sum / wsum)
        mean[c] = (wc[:, None] * X[mask]).sum(axis=0) / wc_sum
        var[c] = np.maximum(
            (wc[:, None] * (X[mask] - mean[c]) ** 2).sum(axis=0) / wc_sum, floor
        )
    return GaussianNBModel(
        log_prior=log_prior,
        mean=mean,
        var=var,
        params=params,
        meta={"weight_total": wsum},
    )
