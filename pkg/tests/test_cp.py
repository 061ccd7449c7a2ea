"""Reconstruction and objective functions against brute-force oracles."""

import math

import numpy as np
import pytest

from countcp import (
    FactorSet,
    Region,
    SparseCountTensor,
    generalized_kl,
    load_factors,
    poisson_log_likelihood,
    reconstruct,
    reconstruct_dense,
    save_factors,
)
from conftest import random_factors, random_tensor


def loop_reconstruct(f, coord):
    """Quadruple-loop oracle: explicit sum over components."""
    total = 0.0
    for k in range(f.k):
        term = 1.0
        for m, c in enumerate(coord):
            term *= f.factors[m][c, k]
        total += term
    return total


def dense_poisson_ll(t, f):
    dense_y = t.todense().astype(float)
    dense_yhat = reconstruct_dense(f)
    total = 0.0
    for y, yhat in zip(dense_y.ravel(), dense_yhat.ravel()):
        if y > 0 and yhat == 0.0:
            return -math.inf
        term = -yhat - math.lgamma(y + 1.0)
        if y > 0:
            term += y * math.log(yhat)
        total += term
    return total


def dense_kl(t, f):
    dense_y = t.todense().astype(float)
    dense_yhat = reconstruct_dense(f)
    total = 0.0
    for y, yhat in zip(dense_y.ravel(), dense_yhat.ravel()):
        if y > 0:
            if yhat == 0.0:
                return math.inf
            total += y * math.log(y / yhat) - y + yhat
        else:
            total += yhat
    return total


class TestReconstruct:
    def test_single_component_of_ones(self):
        f = FactorSet([np.ones((2, 1)) for _ in range(4)])
        assert reconstruct(f, (0, 1, 0, 1)) == 1.0

    def test_two_component_hand_arithmetic(self):
        mats = [np.array([[2.0, 3.0]]), np.ones((1, 2)), np.ones((1, 2)), np.ones((1, 2))]
        f = FactorSet(mats)
        assert reconstruct(f, (0, 0, 0, 0)) == 5.0

    def test_matches_loop_oracle_everywhere(self, rng):
        f = random_factors((3, 3, 2, 4), 3, rng)
        for coord in np.ndindex(3, 3, 2, 4):
            assert reconstruct(f, coord) == pytest.approx(
                loop_reconstruct(f, coord), rel=1e-12
            )

    def test_out_of_range_coordinate_raises(self, rng):
        f = random_factors((3, 3, 2, 4), 2, rng)
        with pytest.raises(IndexError):
            reconstruct(f, (3, 0, 0, 0))

    def test_multilinear_in_each_column(self, rng):
        f = random_factors((3, 3, 2, 4), 2, rng)
        scaled = f.replace_mode(1, f.factors[1] * np.array([3.0, 1.0]))
        for coord in [(0, 1, 0, 2), (2, 2, 1, 3)]:
            base = [np.prod([f.factors[m][coord[m], k] for m in range(4)]) for k in range(2)]
            got = reconstruct(scaled, coord)
            assert got == pytest.approx(3.0 * base[0] + base[1], rel=1e-12)


class TestPoissonLogLikelihood:
    def test_zero_count_contributes_minus_recon(self):
        t = SparseCountTensor.from_entries((1, 1, 1, 1), [])
        f = FactorSet([np.full((1, 1), v) for v in (2.0, 1.0, 1.0, 1.0)])
        assert poisson_log_likelihood(f, t) == pytest.approx(-2.0)

    def test_count_one_recon_one(self):
        t = SparseCountTensor.from_entries((1, 1, 1, 1), [((0, 0, 0, 0), 1)])
        f = FactorSet([np.ones((1, 1)) for _ in range(4)])
        assert poisson_log_likelihood(f, t) == pytest.approx(-1.0)

    def test_matches_dense_oracle(self, rng):
        t = random_tensor((3, 3, 2, 4), rng, nnz=20)
        f = random_factors((3, 3, 2, 4), 3, rng)
        assert poisson_log_likelihood(f, t) == pytest.approx(
            dense_poisson_ll(t, f), rel=1e-12
        )

    def test_zero_recon_under_count_is_minus_inf(self):
        t = SparseCountTensor.from_entries((2, 1, 1, 1), [((0, 0, 0, 0), 2)])
        mats = [np.array([[0.0], [1.0]]), np.ones((1, 1)), np.ones((1, 1)), np.ones((1, 1))]
        f = FactorSet(mats)
        assert poisson_log_likelihood(f, t) == -math.inf


class TestGeneralizedKl:
    def test_zero_at_perfect_reconstruction(self):
        entries = [((i, j, 0, 0), 2) for i in range(2) for j in range(2)]
        t = SparseCountTensor.from_entries((2, 2, 1, 1), entries)
        f = FactorSet(
            [np.full((2, 1), 2.0), np.ones((2, 1)), np.ones((1, 1)), np.ones((1, 1))]
        )
        assert generalized_kl(t, f) == pytest.approx(0.0, abs=1e-12)

    def test_all_zero_counts_leaves_recon_mass(self):
        t = SparseCountTensor.from_entries((2, 2, 1, 1), [])
        f = FactorSet([np.ones((2, 1)), np.ones((2, 1)), np.ones((1, 1)), np.ones((1, 1))])
        assert generalized_kl(t, f) == pytest.approx(4.0)

    def test_matches_dense_oracle(self, rng):
        t = random_tensor((3, 3, 2, 4), rng, nnz=18)
        f = random_factors((3, 3, 2, 4), 3, rng)
        assert generalized_kl(t, f) == pytest.approx(dense_kl(t, f), rel=1e-12)

    def test_zero_recon_under_count_is_plus_inf(self):
        t = SparseCountTensor.from_entries((2, 1, 1, 1), [((0, 0, 0, 0), 2)])
        mats = [np.array([[0.0], [1.0]]), np.ones((1, 1)), np.ones((1, 1)), np.ones((1, 1))]
        assert generalized_kl(t, FactorSet(mats)) == math.inf

    def test_non_negative_on_random_instances(self, rng):
        for _ in range(20):
            t = random_tensor((3, 2, 2, 3), rng, nnz=12)
            f = random_factors((3, 2, 2, 3), 2, rng)
            assert generalized_kl(t, f) >= 0.0


class TestObjectiveEquivalence:
    def test_kl_difference_equals_negated_ll_difference(self, rng):
        shape = (3, 3, 2, 4)
        for _ in range(100):
            t = random_tensor(shape, rng, nnz=int(rng.integers(5, 40)))
            f1 = random_factors(shape, 3, rng)
            f2 = random_factors(shape, 3, rng)
            kl_diff = generalized_kl(t, f1) - generalized_kl(t, f2)
            ll_diff = poisson_log_likelihood(f2, t) - poisson_log_likelihood(f1, t)
            assert kl_diff == pytest.approx(ll_diff, rel=1e-9, abs=1e-9)


class TestMaskedObjectives:
    def test_coordinate_predicate_agrees_with_region(self, rng):
        shape = (4, 4, 2, 3)
        t = random_tensor(shape, rng, nnz=20)
        f = random_factors(shape, 2, rng)
        region = Region(shape, rows=[0, 2], cols=[1, 3], complement=True)
        predicate = region.contains
        assert poisson_log_likelihood(f, t, predicate) == pytest.approx(
            poisson_log_likelihood(f, t, region), rel=1e-12
        )
        assert generalized_kl(t, f, predicate) == pytest.approx(
            generalized_kl(t, f, region), rel=1e-12
        )

    def test_non_block_predicate_matches_dense_loop(self, rng):
        # a parity mask is not a block product, so the mass is enumerated
        shape = (3, 4, 2, 3)
        t = random_tensor(shape, rng, nnz=15)
        f = random_factors(shape, 2, rng)

        def checkerboard(coords):
            return (np.asarray(coords).sum(axis=1) % 2) == 0

        dense_y = t.todense().astype(float)
        dense_yhat = reconstruct_dense(f)
        ll = kl = 0.0
        for coord in np.ndindex(*shape):
            if sum(coord) % 2 != 0:
                continue
            y, yhat = dense_y[coord], dense_yhat[coord]
            ll += (y * math.log(yhat) if y > 0 else 0.0) - yhat - math.lgamma(y + 1)
            kl += (y * math.log(y / yhat) - y if y > 0 else 0.0) + yhat
        assert poisson_log_likelihood(f, t, checkerboard) == pytest.approx(ll, rel=1e-12)
        assert generalized_kl(t, f, checkerboard) == pytest.approx(kl, rel=1e-12)

    @pytest.mark.parametrize("complement", [False, True])
    def test_masked_sums_match_explicit_enumeration(self, rng, complement):
        shape = (4, 4, 2, 3)
        t = random_tensor(shape, rng, nnz=25)
        f = random_factors(shape, 2, rng)
        region = Region(shape, rows=[0, 1], cols=[0, 1, 2], complement=complement)
        dense_y = t.todense().astype(float)
        dense_yhat = reconstruct_dense(f)
        ll = kl = 0.0
        for coord in np.ndindex(*shape):
            inside = (coord[0] in (0, 1)) and (coord[1] in (0, 1, 2))
            if complement:
                inside = not inside
            if not inside:
                continue
            y, yhat = dense_y[coord], dense_yhat[coord]
            ll += (y * math.log(yhat) if y > 0 else 0.0) - yhat - math.lgamma(y + 1)
            kl += (y * math.log(y / yhat) - y if y > 0 else 0.0) + yhat
        assert poisson_log_likelihood(f, t, region) == pytest.approx(ll, rel=1e-12)
        assert generalized_kl(t, f, region) == pytest.approx(kl, rel=1e-12)


class TestFactorFiles:
    def test_round_trip_preserves_all_digits(self, rng, tmp_path):
        f = random_factors((3, 4, 2, 5), 3, rng)
        labels = [[f"{m}_{i}" for i in range(s)] for m, s in enumerate((3, 4, 2, 5))]
        save_factors(f, tmp_path / "bundle", labels)
        back, back_labels = load_factors(tmp_path / "bundle")
        assert back_labels == labels
        for a, b in zip(f.factors, back.factors):
            assert np.array_equal(a, b)

    def test_negative_factors_rejected(self):
        with pytest.raises(ValueError, match="non-negative"):
            FactorSet([np.array([[-0.1]]), np.ones((1, 1))])
