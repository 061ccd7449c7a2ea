"""Shared builders for randomized test instances."""

import numpy as np
import pytest

from countcp import FactorSet, SparseCountTensor


def random_tensor(shape, rng, nnz=None, max_count=9, labels=None):
    """A random sparse count tensor with distinct coordinates."""
    total = int(np.prod(shape))
    if nnz is None:
        nnz = max(1, total // 4)
    flat = rng.choice(total, size=min(nnz, total), replace=False)
    coords = np.stack(np.unravel_index(flat, shape), axis=1)
    values = rng.integers(1, max_count + 1, size=coords.shape[0])
    return SparseCountTensor(shape, coords, values, labels or _labels(shape))


def _labels(shape):
    return [[str(i) for i in range(s)] for s in shape]


def random_factors(shape, k, rng, low=0.1, high=2.0):
    return FactorSet([rng.uniform(low, high, size=(s, k)) for s in shape])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
