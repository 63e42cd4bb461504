"""Tabular binary-classification datasets with a designated protected attribute.

A :class:`Dataset` is an immutable column store. The label column is mapped so
the favorable outcome is 1, the protected column so the privileged group is 1.
Feature encoding (one-hot + standardization) is split into a fit/transform
pair so that train-fold statistics can be reused on the test fold without
leakage.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, SchemaError

NUMERIC = "numeric"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class DatasetSchema:
    """Column designations for loading a CSV file.

    Args:
        label: name of the label column.
        favorable: raw value of the beneficial outcome (compared as text).
        protected: name of the protected-attribute column.
        privileged: raw value marking the privileged group (compared as text).
        categorical: names of categorical feature columns; all other feature
            columns are parsed as numeric.
        drop: columns to exclude entirely.
        protected_as_feature: keep the (binarized) protected column as a
            model feature. Defaults to True.
    """

    label: str
    favorable: str
    protected: str
    privileged: str
    categorical: tuple[str, ...] = ()
    drop: tuple[str, ...] = ()
    protected_as_feature: bool = True


@dataclass(frozen=True)
class Dataset:
    """Immutable tabular dataset with binary label and protected attribute.

    ``y`` and ``s`` are 0/1 int arrays (favorable label -> 1, privileged
    group -> 1). Feature columns live in ``numeric``/``categorical`` keyed by
    name; ``feature_names`` fixes their order. All arrays are read-only.
    """

    feature_names: tuple[str, ...]
    kinds: dict[str, str]
    numeric: dict[str, np.ndarray]
    categorical: dict[str, np.ndarray]
    y: np.ndarray
    s: np.ndarray
    label_name: str
    protected_name: str
    dropped_rows: int = 0
    schema: DatasetSchema | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        n = self.y.shape[0]
        if self.s.shape[0] != n:
            raise DataError("label and protected columns have different lengths")
        if n < 2:
            raise DataError(f"dataset needs at least 2 rows, got {n}")
        classes = np.unique(self.y)
        if not np.array_equal(classes, np.array([0, 1])):
            raise DataError("label column must contain both classes 0 and 1 after mapping")
        if not set(np.unique(self.s).tolist()) <= {0, 1}:
            raise DataError("protected column must be binary after mapping")
        names = list(self.feature_names) + [self.label_name]
        if len(set(names)) != len(names):
            raise DataError("column name collision")
        for name in self.feature_names:
            store = self.numeric if self.kinds[name] == NUMERIC else self.categorical
            if store[name].shape[0] != n:
                raise DataError(f"column {name!r} has wrong length")
        self.y.setflags(write=False)
        self.s.setflags(write=False)
        for col in (*self.numeric.values(), *self.categorical.values()):
            col.setflags(write=False)

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    def column(self, name: str) -> np.ndarray:
        if self.kinds[name] == NUMERIC:
            return self.numeric[name]
        return self.categorical[name]


@dataclass(frozen=True)
class FeatureMatrix:
    """Dense encoded feature matrix with the scaling used to build it."""

    X: np.ndarray
    feature_names: tuple[str, ...]
    scaling: dict[str, tuple[float, float]]

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.X)):
            raise DataError("encoded feature matrix contains non-finite values")
        self.X.setflags(write=False)

    @property
    def n(self) -> int:
        return int(self.X.shape[0])

    @property
    def d(self) -> int:
        return int(self.X.shape[1])


def load_csv(path: str | Path, schema: DatasetSchema) -> Dataset:
    """Load an RFC 4180 CSV into a :class:`Dataset`.

    Rows with a missing label or protected value are dropped and counted in
    ``Dataset.dropped_rows``. Missing feature values are kept as NaN (numeric)
    or "" (categorical) and imputed later from training statistics.

    Raises:
        SchemaError: a declared column is absent from the header.
        DataError: the label is not binary, or a numeric cell fails to parse.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [row for row in reader if row]

    index = {name: i for i, name in enumerate(header)}
    for required in (schema.label, schema.protected):
        if required not in index:
            raise SchemaError(f"{path}: column {required!r} not found in header")
    for name in schema.categorical:
        if name not in index:
            raise SchemaError(f"{path}: declared categorical column {name!r} not in header")

    li, pi = index[schema.label], index[schema.protected]
    kept: list[list[str]] = []
    dropped = 0
    for row in rows:
        if len(row) != len(header):
            raise DataError(f"{path}: row with {len(row)} fields, expected {len(header)}")
        if row[li].strip() == "" or row[pi].strip() == "":
            dropped += 1
            continue
        kept.append(row)

    raw_labels = {row[li] for row in kept}
    if len(raw_labels) != 2 or schema.favorable not in raw_labels:
        raise DataError(
            f"{path}: label column {schema.label!r} must take exactly two values "
            f"including the favorable one {schema.favorable!r}; saw {sorted(raw_labels)}"
        )

    y = np.array([1 if row[li] == schema.favorable else 0 for row in kept], dtype=np.int64)
    s = np.array([1 if row[pi] == schema.privileged else 0 for row in kept], dtype=np.int64)

    excluded = set(schema.drop) | {schema.label, schema.protected}
    feature_names: list[str] = []
    kinds: dict[str, str] = {}
    numeric: dict[str, np.ndarray] = {}
    categorical: dict[str, np.ndarray] = {}
    for name in header:
        if name in excluded:
            continue
        col_idx = index[name]
        values = [row[col_idx] for row in kept]
        if name in schema.categorical:
            kinds[name] = CATEGORICAL
            categorical[name] = np.array(values, dtype=object)
        else:
            kinds[name] = NUMERIC
            numeric[name] = _parse_numeric(path, name, values)
        feature_names.append(name)

    if schema.protected_as_feature:
        feature_names.append(schema.protected)
        kinds[schema.protected] = NUMERIC
        numeric[schema.protected] = s.astype(np.float64)

    return Dataset(
        feature_names=tuple(feature_names),
        kinds=kinds,
        numeric=numeric,
        categorical=categorical,
        y=y,
        s=s,
        label_name=schema.label,
        protected_name=schema.protected,
        dropped_rows=dropped,
        schema=schema,
    )


def _parse_numeric(path: Path, name: str, values: list[str]) -> np.ndarray:
    out = np.empty(len(values), dtype=np.float64)
    for i, v in enumerate(values):
        v = v.strip()
        if v == "":
            out[i] = np.nan
            continue
        try:
            out[i] = float(v)
        except ValueError:
            raise DataError(
                f"{path}: column {name!r} row {i}: {v!r} is not numeric "
                f"(declare it categorical?)"
            ) from None
    return out


class Encoder:
    """One-hot + standardization fitted on a training row subset.

    Numeric columns are standardized with the training mean and population
    std; constant columns (std 0) are dropped with a warning. Categorical
    columns expand to one indicator per category value seen in training,
    sorted lexicographically. Missing values are imputed with the training
    mean/mode; category values unseen in training encode as all zeros.
    """

    def __init__(self) -> None:
        self.numeric_stats: dict[str, tuple[float, float]] = {}
        self.dropped_constant: tuple[str, ...] = ()
        self.categories: dict[str, tuple[str, ...]] = {}
        self.modes: dict[str, str] = {}
        self.feature_names: tuple[str, ...] = ()
        self._source_order: tuple[str, ...] = ()

    @classmethod
    def fit(cls, d: Dataset, rows: np.ndarray | None = None) -> "Encoder":
        enc = cls()
        idx = np.arange(d.n) if rows is None else np.asarray(rows)
        dropped = []
        names: list[str] = []
        for name in d.feature_names:
            if d.kinds[name] == NUMERIC:
                col = d.numeric[name][idx]
                finite = col[~np.isnan(col)]
                if finite.size == 0:
                    raise DataError(f"column {name!r} has no observed values in the training split")
                mean = float(finite.mean())
                std = float(finite.std())
                if std == 0.0:
                    dropped.append(name)
                    continue
                enc.numeric_stats[name] = (mean, std)
                names.append(name)
            else:
                col = d.categorical[name][idx]
                observed = sorted({str(v) for v in col if str(v) != ""})
                if not observed:
                    raise DataError(f"column {name!r} has no observed values in the training split")
                counts = {c: 0 for c in observed}
                for v in col:
                    if str(v) != "":
                        counts[str(v)] += 1
                # mode, ties broken lexicographically
                mode = sorted(observed, key=lambda c: (-counts[c], c))[0]
                enc.categories[name] = tuple(observed)
                enc.modes[name] = mode
                names.extend(f"{name}={value}" for value in observed)
        if dropped:
            warnings.warn(
                f"dropping constant numeric column(s): {', '.join(dropped)}",
                stacklevel=2,
            )
        enc.dropped_constant = tuple(dropped)
        enc.feature_names = tuple(names)
        enc._source_order = tuple(
            n for n in d.feature_names if n not in enc.dropped_constant
        )
        return enc

    def transform(self, d: Dataset, rows: np.ndarray | None = None) -> FeatureMatrix:
        idx = np.arange(d.n) if rows is None else np.asarray(rows)
        blocks: list[np.ndarray] = []
        for name in self._source_order:
            if d.kinds[name] == NUMERIC:
                mean, std = self.numeric_stats[name]
                col = d.numeric[name][idx].copy()
                col[np.isnan(col)] = mean
                blocks.append(((col - mean) / std)[:, None])
            else:
                cats = self.categories[name]
                col = d.categorical[name][idx]
                block = np.zeros((idx.size, len(cats)), dtype=np.float64)
                pos = {c: j for j, c in enumerate(cats)}
                for i, v in enumerate(col):
                    v = str(v) if str(v) != "" else self.modes[name]
                    j = pos.get(v)
                    if j is not None:
                        block[i, j] = 1.0
                blocks.append(block)
        X = np.hstack(blocks) if blocks else np.zeros((idx.size, 0))
        return FeatureMatrix(X=X, feature_names=self.feature_names, scaling=dict(self.numeric_stats))


def encode(d: Dataset) -> FeatureMatrix:
    """Encode the full dataset using its own statistics (no split)."""
    return Encoder.fit(d).transform(d)


@dataclass(frozen=True)
class FoldPlan:
    """Stratified k-fold assignment: ``assignments[i]`` is row i's fold."""

    k: int
    assignments: np.ndarray
    seed: int

    def __post_init__(self) -> None:
        self.assignments.setflags(write=False)

    def test_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)


def stratified_kfold(d: Dataset, k: int, seed: int) -> FoldPlan:
    """Deterministic stratified fold assignment.

    Positives and negatives are shuffled separately and dealt round-robin;
    the negative deal starts where the positive remainders stop, so fold
    sizes stay balanced. Every fold's positive rate is within 1/(fold size)
    of the global rate.

    Raises:
        ConfigError: k < 2 or either class has fewer than k members.
    """
    if k < 2:
        raise ConfigError(f"fold count must be >= 2, got {k}")
    pos = np.flatnonzero(d.y == 1)
    neg = np.flatnonzero(d.y == 0)
    if pos.size < k or neg.size < k:
        raise ConfigError(
            f"each class needs at least k={k} members "
            f"(positives={pos.size}, negatives={neg.size})"
        )
    rng = np.random.default_rng(seed)
    pos = rng.permutation(pos)
    neg = rng.permutation(neg)
    assignments = np.empty(d.n, dtype=np.int64)
    assignments[pos] = np.arange(pos.size) % k
    assignments[neg] = (np.arange(neg.size) + pos.size) % k
    return FoldPlan(k=k, assignments=assignments, seed=seed)


def synth_biased(n: int, spd_target: float, base_rate: float, seed: int) -> Dataset:
    """Generate a biased test fixture with a controllable label-rate gap.

    The favorable-label rate is ``base_rate + spd_target/2`` in the
    unprivileged group and ``base_rate - spd_target/2`` in the privileged
    group, realized with exact per-group counts, so the empirical label SPD
    (unprivileged minus privileged) lands on ``spd_target`` up to rounding.
    Two numeric features carry label signal.

    Raises:
        ConfigError: n < 20, base_rate outside (0,1), or infeasible target.
    """
    if n < 20:
        raise ConfigError(f"synth_biased needs n >= 20, got {n}")
    if not 0.0 < base_rate < 1.0:
        raise ConfigError(f"base_rate must be in (0,1), got {base_rate}")
    if abs(spd_target) > min(base_rate, 1.0 - base_rate) + 1e-12:
        raise ConfigError(
            f"spd_target {spd_target} infeasible for base_rate {base_rate}"
        )

    rng = np.random.default_rng(seed)
    n_unpriv = n // 2
    n_priv = n - n_unpriv
    rate_unpriv = base_rate + spd_target / 2.0
    rate_priv = base_rate - spd_target / 2.0

    def labels(count: int, rate: float) -> np.ndarray:
        k_pos = int(round(rate * count))
        k_pos = min(max(k_pos, 0), count)
        arr = np.zeros(count, dtype=np.int64)
        arr[:k_pos] = 1
        return rng.permutation(arr)

    s = np.concatenate([np.zeros(n_unpriv, dtype=np.int64), np.ones(n_priv, dtype=np.int64)])
    y = np.concatenate([labels(n_unpriv, rate_unpriv), labels(n_priv, rate_priv)])
    order = rng.permutation(n)
    s, y = s[order], y[order]

    if np.unique(y).size < 2:
        raise ConfigError("generated labels collapsed to a single class; adjust base_rate")

    x1 = 1.2 * y + rng.standard_normal(n)
    x2 = -0.8 * y + rng.standard_normal(n)

    return Dataset(
        feature_names=("x1", "x2", "group"),
        kinds={"x1": NUMERIC, "x2": NUMERIC, "group": NUMERIC},
        numeric={"x1": x1, "x2": x2, "group": s.astype(np.float64)},
        categorical={},
        y=y,
        s=s,
        label_name="label",
        protected_name="group",
    )
