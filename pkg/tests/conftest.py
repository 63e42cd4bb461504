from __future__ import annotations

import numpy as np
import pytest

from fairsweep import synth_biased
from fairsweep.data import Dataset


@pytest.fixture(scope="session")
def biased_dataset() -> Dataset:
    """The fixed mitigation fixture: n=2000, label SPD target -0.3."""
    return synth_biased(2000, spd_target=-0.3, base_rate=0.5, seed=42)


@pytest.fixture()
def separable_blobs():
    """Two well-separated 2-feature Gaussian blobs, 100 rows per class."""
    rng = np.random.default_rng(3)
    lo = rng.standard_normal((100, 2)) * 0.5 + np.array([-2.0, -1.0])
    hi = rng.standard_normal((100, 2)) * 0.5 + np.array([2.0, 1.0])
    X = np.vstack([lo, hi])
    y = np.array([0] * 100 + [1] * 100)
    return X, y


def make_dataset(y: np.ndarray, s: np.ndarray, seed: int = 0) -> Dataset:
    """Wrap given labels/groups into a Dataset with two noise features."""
    rng = np.random.default_rng(seed)
    n = y.size
    return Dataset(
        feature_names=("f0", "f1"),
        kinds={"f0": "numeric", "f1": "numeric"},
        numeric={
            "f0": 0.8 * y + rng.standard_normal(n),
            "f1": rng.standard_normal(n),
        },
        categorical={},
        y=np.asarray(y, dtype=np.int64),
        s=np.asarray(s, dtype=np.int64),
        label_name="y",
        protected_name="s",
    )
