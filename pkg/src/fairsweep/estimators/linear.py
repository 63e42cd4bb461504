"""Weighted regularized logistic regression via proximal gradient descent.

The objective is the weight-normalized logistic loss plus a penalty:

    f(b) = sum_i w_i * logloss_i / sum_i w_i  +  penalty(b) / (C * N_REF)

with an L2 penalty ||b||^2/2 (smooth, plain accelerated gradient) or an L1
penalty ||b||_1 (soft-threshold proximal step). The intercept is never
penalized.

Normalizing the data term by the weight total makes the fit invariant to
rescaling all weights and makes replicating a row r times equivalent to
weighting it by r; that forces the penalty coefficient to be constant in
both n and w. N_REF fixes its absolute scale so that C behaves like the
familiar per-total-loss convention at a reference sample size of 100.
"""

from __future__ import annotations

import numpy as np

from ..errors import FitError

MAX_ITER = 5000
GRAD_TOL = 1e-6
N_REF = 100.0
_P_CLIP = 1e-12


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def loss_and_grad(
    beta: np.ndarray,
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    C: float,
    penalty: str,
) -> tuple[float, np.ndarray]:
    """Smooth part of the objective and its gradient.

    ``beta`` is (d+1,) with the intercept last. For the L1 penalty this is
    the data term only; for L2 the penalty is included (it is smooth).
    """
    z = X @ beta[:-1] + beta[-1]
    p = _sigmoid(z)
    p_safe = np.clip(p, _P_CLIP, 1.0 - _P_CLIP)
    wsum = w.sum()
    loss = float(-(w * (y * np.log(p_safe) + (1.0 - y) * np.log(1.0 - p_safe))).sum() / wsum)
    resid = w * (p - y) / wsum
    grad = np.empty_like(beta)
    grad[:-1] = X.T @ resid
    grad[-1] = resid.sum()
    if penalty == "l2":
        loss += float(beta[:-1] @ beta[:-1]) / (2.0 * C * N_REF)
        grad[:-1] += beta[:-1] / (C * N_REF)
    return loss, grad


class LogisticModel:
    """Fitted logistic regression: coefficients plus intercept."""

    kind = "LR"

    def __init__(self, coef: np.ndarray, intercept: float, params: dict, meta: dict | None = None):
        self.coef = np.asarray(coef, dtype=np.float64)
        self.intercept = float(intercept)
        self.params = dict(params)
        self.meta = dict(meta or {})

    @property
    def d(self) -> int:
        return int(self.coef.size)

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return X @ self.coef + self.intercept

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(self.decision_function(X))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": self.params,
            "coef": self.coef.tolist(),
            "intercept": self.intercept,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LogisticModel":
        return cls(np.array(d["coef"]), d["intercept"], d["params"], d.get("meta"))


def fit_logistic(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    C: float,
    penalty: str,
    params: dict,
) -> LogisticModel:
    """FISTA with a fixed 1/L step; stops at gradient-map inf-norm < 1e-6.

    L is the Lipschitz constant of the smooth part, computed from the top
    eigenvalue of the weighted Gram matrix by power iteration (deterministic
    start), so the whole solve is randomness-free.
    """
    n, d = X.shape
    wsum = float(w.sum())
    if wsum <= 0:
        raise FitError("weights sum to zero")

    Xa = np.hstack([X, np.ones((n, 1))])
    gram = (Xa * w[:, None]).T @ Xa / (4.0 * wsum)
    lip = _top_eigenvalue(gram)
    if penalty == "l2":
        lip += 1.0 / (C * N_REF)
    step = 1.0 / max(lip, 1e-12)
    l1_scale = (step / (C * N_REF)) if penalty == "l1" else 0.0

    beta = np.zeros(d + 1)
    momentum = beta.copy()
    t_prev = 1.0
    for _ in range(MAX_ITER):
        _, grad = loss_and_grad(momentum, X, y, w, C, penalty)
        candidate = momentum - step * grad
        if penalty == "l1":
            candidate[:-1] = np.sign(candidate[:-1]) * np.maximum(
                np.abs(candidate[:-1]) - l1_scale, 0.0
            )
        # gradient map: fixed point iff the (prox-)gradient step is a no-op
        _, grad_at = loss_and_grad(beta, X, y, w, C, penalty)
        stepped = beta - step * grad_at
        if penalty == "l1":
            stepped[:-1] = np.sign(stepped[:-1]) * np.maximum(
                np.abs(stepped[:-1]) - l1_scale, 0.0
            )
        if np.max(np.abs(beta - stepped)) / step < GRAD_TOL:
            break
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_prev * t_prev))
        momentum = candidate + ((t_prev - 1.0) / t_next) * (candidate - beta)
        beta = candidate
        t_prev = t_next

    return LogisticModel(
        coef=beta[:-1],
        intercept=float(beta[-1]),
        params=params,
        meta={"weight_total": wsum},
    )


def _top_eigenvalue(A: np.ndarray, iters: int = 200, tol: float = 1e-10) -> float:
    v = np.ones(A.shape[0]) / np.sqrt(A.shape[0])
    prev = 0.0
    for _ in range(iters):
        Av = A @ v
        norm = float(np.linalg.norm(Av))
        if norm == 0.0:
            return 0.0
        v = Av / norm
        if abs(norm - prev) < tol * max(1.0, norm):
            break
        prev = norm
    return float(v @ A @ v)
