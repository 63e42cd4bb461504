from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairsweep.data import (
    DatasetSchema,
    Encoder,
    encode,
    load_csv,
    stratified_kfold,
    synth_biased,
)
from fairsweep.errors import ConfigError, DataError, SchemaError


def write_csv(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


BASIC_SCHEMA = DatasetSchema(
    label="y", favorable="good", protected="grp", privileged="a", categorical=("color",)
)


def test_load_csv_maps_favorable_to_one(tmp_path):
    path = write_csv(
        tmp_path,
        "basic.csv",
        "y,grp,color,age\n"
        "good,a,red,30\n"
        "bad,b,blue,40\n"
        "good,b,red,50\n"
        "bad,a,blue,60\n",
    )
    d = load_csv(path, BASIC_SCHEMA)
    assert d.n == 4
    assert d.y.tolist() == [1, 0, 1, 0]
    assert d.s.tolist() == [1, 0, 0, 1]
    assert d.dropped_rows == 0
    # protected kept as a numeric feature by default
    assert "grp" in d.feature_names
    assert d.numeric["grp"].tolist() == [1.0, 0.0, 0.0, 1.0]


def test_load_csv_missing_protected_column_is_schema_error(tmp_path):
    path = write_csv(tmp_path, "nop.csv", "y,color\ngood,red\nbad,blue\n")
    with pytest.raises(SchemaError, match="grp"):
        load_csv(path, BASIC_SCHEMA)


def test_load_csv_nonbinary_label_is_data_error(tmp_path):
    path = write_csv(
        tmp_path,
        "tri.csv",
        "y,grp,color,age\ngood,a,red,1\nbad,b,red,2\nugly,a,red,3\n",
    )
    with pytest.raises(DataError, match="exactly two values"):
        load_csv(path, BASIC_SCHEMA)


def test_load_csv_drops_and_counts_rows_missing_label_or_protected(tmp_path):
    path = write_csv(
        tmp_path,
        "missing.csv",
        "y,grp,color,age\n"
        "good,a,red,1\n"
        ",a,red,2\n"
        "bad,,blue,3\n"
        "bad,b,blue,4\n"
        "good,b,red,5\n",
    )
    d = load_csv(path, BASIC_SCHEMA)
    assert d.n == 3
    assert d.dropped_rows == 2
    # load -> encode round trip preserves the kept row count
    assert encode(d).n == 3


def test_load_csv_german_credit_shape(tmp_path):
    # a German-Credit-shaped file: 1000 rows, 21 columns
    rng = np.random.default_rng(0)
    header = [f"a{i}" for i in range(19)] + ["sex", "credit"]
    lines = [",".join(header)]
    for i in range(1000):
        feats = [f"{rng.standard_normal():.3f}" for _ in range(19)]
        sex = "male" if rng.random() < 0.7 else "female"
        credit = "1" if rng.random() < 0.7 else "2"
        lines.append(",".join(feats + [sex, credit]))
    path = write_csv(tmp_path, "gc.csv", "\n".join(lines) + "\n")
    schema = DatasetSchema(
        label="credit", favorable="1", protected="sex", privileged="male"
    )
    d = load_csv(path, schema)
    assert d.n == 1000
    assert len(d.feature_names) == 20  # 19 features + protected-as-feature


def test_encode_one_hot_expands_sorted_categories(tmp_path):
    path = write_csv(
        tmp_path,
        "cats.csv",
        "y,grp,color,age\n"
        "good,a,c,1\n"
        "bad,b,a,2\n"
        "good,a,b,3\n"
        "bad,b,a,4\n",
    )
    d = load_csv(path, BASIC_SCHEMA)
    fm = encode(d)
    assert [n for n in fm.feature_names if n.startswith("color=")] == [
        "color=a",
        "color=b",
        "color=c",
    ]


def test_encode_standardizes_with_population_std():
    d = synth_biased(20, 0.0, 0.5, seed=1)
    # hand case: [1,2,3] -> (x - 2)/sqrt(2/3)
    col = np.array([1.0, 2.0, 3.0])
    expected = (col - 2.0) / np.sqrt(2.0 / 3.0)
    assert expected == pytest.approx([-1.2247448, 0.0, 1.2247448])
    enc = Encoder.fit(d)
    fm = enc.transform(d)
    for j, name in enumerate(fm.feature_names):
        if name in ("x1", "x2"):
            assert fm.X[:, j].mean() == pytest.approx(0.0, abs=1e-12)
            assert fm.X[:, j].std() == pytest.approx(1.0, abs=1e-12)


def test_encode_is_pure():
    d = synth_biased(100, -0.1, 0.4, seed=5)
    a = encode(d)
    b = encode(d)
    assert np.array_equal(a.X, b.X)
    assert a.feature_names == b.feature_names


def test_encode_drops_constant_column(tmp_path):
    path = write_csv(
        tmp_path,
        "const.csv",
        "y,grp,color,age,k\n"
        "good,a,c,1,7\n"
        "bad,b,a,2,7\n"
        "good,a,b,3,7\n"
        "bad,b,a,4,7\n",
    )
    d = load_csv(path, BASIC_SCHEMA)
    with pytest.warns(UserWarning, match="constant"):
        fm = encode(d)
    assert all(not n.startswith("k") for n in fm.feature_names)


def test_encoder_train_statistics_apply_to_test_split():
    d = synth_biased(200, 0.0, 0.5, seed=9)
    train = np.arange(150)
    test = np.arange(150, 200)
    enc = Encoder.fit(d, train)
    fm_train = enc.transform(d, train)
    fm_test = enc.transform(d, test)
    j = fm_train.feature_names.index("x1")
    assert fm_train.X[:, j].mean() == pytest.approx(0.0, abs=1e-12)
    # test split standardized with train stats, so not exactly centered
    assert fm_test.X[:, j].mean() != pytest.approx(0.0, abs=1e-12)
    mean, std = enc.numeric_stats["x1"]
    assert fm_test.X[0, j] == pytest.approx((d.numeric["x1"][150] - mean) / std)


def test_encoder_unknown_category_encodes_all_zeros(tmp_path):
    path = write_csv(
        tmp_path,
        "unk.csv",
        "y,grp,color,age\n"
        "good,a,red,1\n"
        "bad,b,red,2\n"
        "good,a,blue,3\n"
        "bad,b,blue,4\n"
        "good,a,green,5\n"
        "bad,b,green,6\n",
    )
    d = load_csv(path, BASIC_SCHEMA)
    train = np.array([0, 1, 2, 3])  # only red/blue seen
    enc = Encoder.fit(d, train)
    fm = enc.transform(d, np.array([4, 5]))  # green rows
    cols = [j for j, n in enumerate(fm.feature_names) if n.startswith("color=")]
    assert np.all(fm.X[:, cols] == 0.0)


def test_encoder_imputes_missing_values_from_train(tmp_path):
    path = write_csv(
        tmp_path,
        "holes.csv",
        "y,grp,color,age\n"
        "good,a,red,10\n"
        "bad,b,blue,20\n"
        "good,a,,30\n"
        "bad,b,red,\n",
    )
    d = load_csv(path, BASIC_SCHEMA)
    assert d.n == 4  # feature holes do not drop rows
    enc = Encoder.fit(d, np.array([0, 1]))  # train stats: age mean 15, mode by count
    fm = enc.transform(d)
    j = fm.feature_names.index("age")
    mean, std = enc.numeric_stats["age"]
    assert mean == pytest.approx(15.0)
    assert fm.X[3, j] == pytest.approx(0.0)  # imputed with train mean
    # missing category imputed with the train mode's indicator
    cat_cols = [k for k, n in enumerate(fm.feature_names) if n.startswith("color=")]
    assert fm.X[2, cat_cols].sum() == pytest.approx(1.0)


def test_protected_as_feature_switch(tmp_path):
    path = write_csv(
        tmp_path,
        "sw.csv",
        "y,grp,color,age\n"
        "good,a,red,1\n"
        "bad,b,blue,2\n"
        "good,b,red,3\n"
        "bad,a,blue,4\n",
    )
    schema = DatasetSchema(
        label="y",
        favorable="good",
        protected="grp",
        privileged="a",
        categorical=("color",),
        protected_as_feature=False,
    )
    d = load_csv(path, schema)
    assert "grp" not in d.feature_names
    assert d.s.tolist() == [1, 0, 0, 1]  # still available for fairness metrics


def test_stratified_kfold_divisible_case():
    y = np.array([1] * 30 + [0] * 70)
    s = np.array([0, 1] * 50)
    from conftest import make_dataset

    d = make_dataset(y, s)
    plan = stratified_kfold(d, 5, seed=3)
    for fold in range(5):
        rows = plan.test_rows(fold)
        assert rows.size == 20
        assert int(d.y[rows].sum()) == 6


def test_stratified_kfold_deterministic():
    d = synth_biased(300, -0.1, 0.5, seed=2)
    a = stratified_kfold(d, 5, seed=11)
    b = stratified_kfold(d, 5, seed=11)
    assert np.array_equal(a.assignments, b.assignments)
    c = stratified_kfold(d, 5, seed=12)
    assert not np.array_equal(a.assignments, c.assignments)


def test_stratified_kfold_small_class_spread():
    from conftest import make_dataset

    y = np.array([1, 1, 1, 0, 0, 0, 0, 0, 0, 0])
    s = np.array([0, 1] * 5)
    d = make_dataset(y, s)
    # 3 positives cannot fill 5 folds: configuration error
    with pytest.raises(ConfigError):
        stratified_kfold(d, 5, seed=0)
    plan = stratified_kfold(d, 3, seed=0)
    pos_counts = [int(d.y[plan.test_rows(f)].sum()) for f in range(3)]
    assert pos_counts == [1, 1, 1]


def test_stratified_kfold_partitions_rows():
    d = synth_biased(157, -0.2, 0.4, seed=8)
    plan = stratified_kfold(d, 4, seed=5)
    seen = np.concatenate([plan.test_rows(f) for f in range(4)])
    assert sorted(seen.tolist()) == list(range(157))


@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(40, 400),
    rate=st.floats(0.1, 0.9),
    k=st.integers(2, 8),
    seed=st.integers(0, 10_000),
)
def test_stratification_invariant(n, rate, k, seed):
    rng = np.random.default_rng(seed)
    n_pos = max(k, min(n - k, int(round(rate * n))))
    y = np.zeros(n, dtype=np.int64)
    y[rng.choice(n, size=n_pos, replace=False)] = 1
    s = rng.integers(0, 2, size=n)
    from conftest import make_dataset

    d = make_dataset(y, s, seed=seed)
    plan = stratified_kfold(d, k, seed=seed)
    global_rate = d.y.mean()
    for fold in range(k):
        rows = plan.test_rows(fold)
        fold_rate = d.y[rows].mean()
        assert abs(fold_rate - global_rate) <= 1.0 / rows.size + 1e-12


def test_synth_biased_unbiased_case():
    d = synth_biased(1000, 0.0, 0.5, seed=42)
    spd = d.y[d.s == 0].mean() - d.y[d.s == 1].mean()
    assert abs(spd) <= 0.05


def test_synth_biased_hits_target():
    d = synth_biased(2000, -0.2, 0.5, seed=7)
    spd = d.y[d.s == 0].mean() - d.y[d.s == 1].mean()
    assert -0.25 <= spd <= -0.15


def test_synth_biased_rejects_bad_inputs():
    with pytest.raises(ConfigError):
        synth_biased(10, 0.0, 0.5, seed=0)
    with pytest.raises(ConfigError):
        synth_biased(100, 0.0, 1.5, seed=0)
    with pytest.raises(ConfigError):
        synth_biased(100, 0.8, 0.3, seed=0)  # infeasible gap


def test_synth_biased_features_carry_signal():
    d = synth_biased(1000, -0.2, 0.5, seed=3)
    x1 = d.numeric["x1"]
    corr = np.corrcoef(x1, d.y)[0, 1]
    assert corr > 0.3
