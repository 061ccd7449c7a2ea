"""Synthetic count tensors drawn from the Gamma-Poisson generative model.

Factors are sampled from per-mode Gamma priors (shape alpha, rate
alpha * beta[m]) and each cell's count from a Poisson at its CP
reconstruction.  Small alpha produces sparse tensors with highly
dispersed non-zero counts, mimicking real dyadic event data.
"""

from __future__ import annotations

import numpy as np

from .bptf import Hyperparameters
from .cp import FactorSet
from .tensors import SparseCountTensor, default_labels


def sample_factors(shape, k: int, hyper: Hyperparameters, rng) -> FactorSet:
    """Draw one factor matrix per mode from its Gamma prior."""
    mats = []
    for m, size in enumerate(shape):
        mats.append(rng.gamma(hyper.alpha, 1.0 / hyper.rate(m), size=(size, k)))
    return FactorSet(mats)


def expected_total_count(shape, k: int, hyper: Hyperparameters) -> float:
    """Analytic expectation of the tensor's total count.

    Each cell's expected reconstruction is k times the product of the
    per-mode prior means 1 / beta[m].
    """
    mean = float(k)
    for m, size in enumerate(shape):
        mean *= size / hyper.beta[m]
    return mean


def sample_count_tensor(
    shape,
    k: int,
    hyper: Hyperparameters,
    seed: int,
    mode_labels=None,
    row_chunk: int = 64,
):
    """Sample (tensor, true factors) from the generative model.

    The dense reconstruction is materialized ``row_chunk`` mode-0 rows at a
    time, so memory stays bounded for moderately large shapes.  Only
    non-zero cells are stored.  Deterministic per seed.
    """
    shape = tuple(int(s) for s in shape)
    rng = np.random.default_rng(seed)
    factors = sample_factors(shape, k, hyper, rng)
    if mode_labels is None:
        mode_labels = default_labels(shape)

    coords_parts, values_parts = [], []
    tail_mats = factors.factors[1:]
    for lo in range(0, shape[0], row_chunk):
        hi = min(lo + row_chunk, shape[0])
        block = np.zeros((hi - lo,) + shape[1:])
        for comp in range(k):
            term = factors.factors[0][lo:hi, comp]
            for mat in tail_mats:
                term = np.multiply.outer(term, mat[:, comp])
            block += term
        counts = rng.poisson(block)
        nz = np.nonzero(counts)
        if nz[0].size:
            cc = np.stack(nz, axis=1)
            cc[:, 0] += lo
            coords_parts.append(cc)
            values_parts.append(counts[nz])
    if coords_parts:
        coords = np.vstack(coords_parts)
        values = np.concatenate(values_parts)
    else:
        coords = np.zeros((0, len(shape)), dtype=np.int64)
        values = np.zeros(0, dtype=np.int64)
    tensor = SparseCountTensor(shape, coords, values, mode_labels)
    return tensor, factors
