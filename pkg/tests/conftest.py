import numpy as np
import pytest

from mscatter import Dataset, normalize_dataset


# Three unit vectors at 120 degrees: a tight frame in R^2, so every
# symmetric weighting with equal weights reproduces a multiple of I and the
# scatter solutions are exactly the identity.
FRAME = np.array([
    [1.0, 0.0],
    [0.5, np.sqrt(3.0) / 2.0],
    [-0.5, np.sqrt(3.0) / 2.0],
])


@pytest.fixture
def frame_dataset():
    return normalize_dataset(FRAME)


def gaussian_dataset(m, n, seed, normalize=True):
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((n, m))
    if normalize:
        return normalize_dataset(raw)
    return Dataset(raw, unit_norm=False)


@pytest.fixture
def small_dataset():
    return gaussian_dataset(5, 20, seed=42)
