"""Random forest and gradient boosting built on the shared tree grower."""

from __future__ import annotations

import numpy as np

from .tree import SQUARED_ERROR, Tree, grow_tree

GB_SHRINKAGE = 0.1
_P_CLIP = 1e-12


class RandomForestModel:
    """Bagged classification trees; scores are mean leaf positive fractions."""

    kind = "RF"

    def __init__(self, trees: list[Tree], d: int, params: dict, meta: dict | None = None):
        self.trees = trees
        self._d = d
        self.params = dict(params)
        self.meta = dict(meta or {})

    @property
    def d(self) -> int:
        return self._d

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        acc = np.zeros(X.shape[0])
        for tree in self.trees:
            acc += tree.predict(X)
        return acc / len(self.trees)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": self.params,
            "d": self._d,
            "trees": [t.to_dict() for t in self.trees],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RandomForestModel":
        return cls([Tree.from_dict(t) for t in d["trees"]], d["d"], d["params"], d.get("meta"))


def fit_random_forest(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    n_estimators: int,
    criterion: str,
    max_depth: int | None,
    seed: int,
    params: dict,
) -> RandomForestModel:
    """Trees on weight-proportional bootstrap resamples, sqrt(d) features per split.

    Each resample draws n rows with probability proportional to the sample
    weights; the realized draw counts become the tree's row weights.
    """
    n, d = X.shape
    max_features = max(1, int(round(np.sqrt(d))))
    prob = w / w.sum()
    children = np.random.SeedSequence(seed).spawn(n_estimators)
    trees = []
    for child in children:
        rng = np.random.default_rng(child)
        idx = rng.choice(n, size=n, replace=True, p=prob)
        boot_w = np.bincount(idx, minlength=n).astype(np.float64)
        trees.append(
            grow_tree(
                X,
                y,
                boot_w,
                criterion=criterion,
                max_depth=max_depth,
                max_features=max_features,
                rng=rng,
            )
        )
    return RandomForestModel(
        trees=trees,
        d=d,
        params=params,
        meta={"seed": seed, "weight_total": float(w.sum())},
    )


class GradientBoostingModel:
    """Shrunken sum of regression trees on logistic-loss gradients."""

    kind = "GB"

    def __init__(
        self,
        prior_logit: float,
        trees: list[Tree],
        d: int,
        params: dict,
        meta: dict | None = None,
    ):
        self.prior_logit = float(prior_logit)
        self.trees = trees
        self._d = d
        self.params = dict(params)
        self.meta = dict(meta or {})

    @property
    def d(self) -> int:
        return self._d

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        f = np.full(X.shape[0], self.prior_logit)
        for tree in self.trees:
            f += GB_SHRINKAGE * tree.predict(X)
        return f

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.decision_function(X)))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": self.params,
            "d": self._d,
            "prior_logit": self.prior_logit,
            "trees": [t.to_dict() for t in self.trees],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GradientBoostingModel":
        return cls(
            d["prior_logit"],
            [Tree.from_dict(t) for t in d["trees"]],
            d["d"],
            d["params"],
            d.get("meta"),
        )


def fit_gradient_boosting(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    n_estimators: int,
    max_depth: int,
    params: dict,
) -> GradientBoostingModel:
    """Depth-capped squared-error trees fit to residuals y - p, shrinkage 0.1.

    The initial score is the log-odds of the weighted base rate;
    ``n_estimators=0`` yields that prior alone.
    """
    base = float(np.clip((w * y).sum() / w.sum(), _P_CLIP, 1.0 - _P_CLIP))
    prior = np.log(base / (1.0 - base))
    f = np.full(X.shape[0], prior)
    trees = []
    for _ in range(n_estimators):
        p = 1.0 / (1.0 + np.exp(-f))
        residual = y - p
        tree = grow_tree(X, residual, w, criterion=SQUARED_ERROR, max_depth=max_depth)
        trees.append(tree)
        f += GB_SHRINKAGE * tree.predict(X)
    return GradientBoostingModel(
        prior_logit=prior,
        trees=trees,
        d=X.shape[1],
        params=params,
        meta={"weight_total": float(w.sum())},
    )
