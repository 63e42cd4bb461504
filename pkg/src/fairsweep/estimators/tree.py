"""Weighted decision trees used by the forest and boosting models.

One builder grows both tree kinds: classification trees minimize weighted
gini or entropy impurity and store the weighted positive fraction per leaf;
regression trees minimize weighted squared error and store the weighted mean
target. Splits are searched exhaustively over midpoints between consecutive
distinct feature values; ties in gain resolve to the lowest feature index,
then the lowest threshold, so growth is fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GINI = "gini"
ENTROPY = "entropy"
SQUARED_ERROR = "squared_error"

_LEAF = -1


@dataclass
class Tree:
    """Flat-array tree. ``feature[i] == -1`` marks node i as a leaf."""

    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[float] = field(default_factory=list)

    def _new_node(self) -> int:
        self.feature.append(_LEAF)
        self.threshold.append(0.0)
        self.left.append(_LEAF)
        self.right.append(_LEAF)
        self.value.append(0.0)
        return len(self.feature) - 1

    def predict(self, X: np.ndarray) -> np.ndarray:
        feature = np.asarray(self.feature, dtype=np.int64)
        threshold = np.asarray(self.threshold, dtype=np.float64)
        left = np.asarray(self.left, dtype=np.int64)
        right = np.asarray(self.right, dtype=np.int64)
        value = np.asarray(self.value, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            at_split = feature[node] != _LEAF
            if not at_split.any():
                break
            rows = np.flatnonzero(at_split)
            cur = node[rows]
            go_left = X[rows, feature[cur]] <= threshold[cur]
            node[rows] = np.where(go_left, left[cur], right[cur])
        return value[node]

    def to_dict(self) -> dict:
        return {
            "feature": list(self.feature),
            "threshold": list(self.threshold),
            "left": list(self.left),
            "right": list(self.right),
            "value": list(self.value),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            feature=[int(v) for v in d["feature"]],
            threshold=[float(v) for v in d["threshold"]],
            left=[int(v) for v in d["left"]],
            right=[int(v) for v in d["right"]],
            value=[float(v) for v in d["value"]],
        )


def _impurity_sum(criterion: str, w: np.ndarray, wt: np.ndarray, wt2: np.ndarray) -> np.ndarray:
    """Weighted impurity of partitions given (weight, weight*t, weight*t^2) sums."""
    with np.errstate(divide="ignore", invalid="ignore"):
        if criterion == SQUARED_ERROR:
            out = wt2 - np.where(w > 0, wt * wt / np.where(w > 0, w, 1.0), 0.0)
        else:
            p = np.where(w > 0, wt / np.where(w > 0, w, 1.0), 0.0)
            if criterion == GINI:
                out = w * 2.0 * p * (1.0 - p)
            else:  # entropy
                q = 1.0 - p
                plogp = np.where(p > 0, p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
                qlogq = np.where(q > 0, q * np.log2(np.where(q > 0, q, 1.0)), 0.0)
                out = w * -(plogp + qlogq)
    return out


def grow_tree(
    X: np.ndarray,
    t: np.ndarray,
    w: np.ndarray,
    criterion: str,
    max_depth: int | None = None,
    max_features: int | None = None,
    rng: np.random.Generator | None = None,
) -> Tree:
    """Grow a tree on rows with positive weight.

    ``t`` is the target: 0/1 labels for gini/entropy, real residuals for
    squared error. ``max_features`` limits the candidate features per node
    (sampled without replacement from ``rng``); None means all features.
    """
    X = np.asarray(X, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    live = w > 0
    X, t, w = X[live], t[live], w[live]
    d = X.shape[1]
    tree = Tree()
    root = tree._new_node()
    # stack of (node_id, row_indices, depth)
    stack: list[tuple[int, np.ndarray, int]] = [(root, np.arange(X.shape[0]), 0)]
    while stack:
        node, rows, depth = stack.pop()
        tw = float(w[rows].sum())
        twt = float((w[rows] * t[rows]).sum())
        tree.value[node] = twt / tw
        if max_depth is not None and depth >= max_depth:
            continue
        if criterion in (GINI, ENTROPY):
            mean = twt / tw
            if mean in (0.0, 1.0):
                continue
        elif rows.size < 2:
            continue

        if max_features is not None and max_features < d:
            candidates = np.sort(rng.choice(d, size=max_features, replace=False))
        else:
            candidates = np.arange(d)

        best = _best_split(X, t, w, rows, candidates, criterion)
        if best is None:
            continue
        j, thr, left_rows, right_rows = best
        tree.feature[node] = int(j)
        tree.threshold[node] = float(thr)
        left_id = tree._new_node()
        right_id = tree._new_node()
        tree.left[node] = left_id
        tree.right[node] = right_id
        # push right first so the left branch is processed first (cosmetic)
        stack.append((right_id, right_rows, depth + 1))
        stack.append((left_id, left_rows, depth + 1))
    return tree


def _best_split(
    X: np.ndarray,
    t: np.ndarray,
    w: np.ndarray,
    rows: np.ndarray,
    candidates: np.ndarray,
    criterion: str,
) -> tuple[int, float, np.ndarray, np.ndarray] | None:
    tw = w[rows]
    tt = t[rows]
    total_w = tw.sum()
    total_wt = (tw * tt).sum()
    total_wt2 = (tw * tt * tt).sum()
    parent = float(
        _impurity_sum(
            criterion,
            np.array([total_w]),
            np.array([total_wt]),
            np.array([total_wt2]),
        )[0]
    )

    best_gain = 0.0
    best: tuple[int, float, np.ndarray, np.ndarray] | None = None
    for j in candidates:
        col = X[rows, j]
        order = np.argsort(col, kind="stable")
        xs = col[order]
        ws = tw[order]
        ts = tt[order]
        cw = np.cumsum(ws)
        cwt = np.cumsum(ws * ts)
        cwt2 = np.cumsum(ws * ts * ts)
        boundary = np.flatnonzero(xs[:-1] < xs[1:])
        if boundary.size == 0:
            continue
        lw, lwt, lwt2 = cw[boundary], cwt[boundary], cwt2[boundary]
        imp = _impurity_sum(criterion, lw, lwt, lwt2) + _impurity_sum(
            criterion, total_w - lw, total_wt - lwt, total_wt2 - lwt2
        )
        gains = parent - imp
        k = int(np.argmax(gains))  # first max -> lowest threshold on ties
        if gains[k] > best_gain + 1e-12:
            cut = boundary[k]
            thr = 0.5 * (xs[cut] + xs[cut + 1])
            left_rows = rows[order[: cut + 1]]
            right_rows = rows[order[cut + 1 :]]
            best_gain = float(gains[k])
            best = (int(j), float(thr), left_rows, right_rows)
    return best
