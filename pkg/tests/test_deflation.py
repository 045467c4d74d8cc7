"""Tests for the deflation loop, ground-truth matching, and reconstruction."""
import numpy as np
import pytest

from sroa.deflation import (
    DecompositionResult,
    decompose,
    deflation_delta_norms,
    match_to_ground_truth,
    reconstruct,
)
from sroa.rank_one import SolverConfig, SpectralPair, operator_norm_estimate
from sroa.tensor import SymmetricTensor, frobenius_norm, make_rank_one, symmetrize

from conftest import factorial_best_matching


def basis_vector(n, i):
    e = np.zeros(n)
    e[i] = 1.0
    return e


def diagonal_tensor(weights, order):
    n = len(weights)
    T = SymmetricTensor(np.zeros((n,) * order))
    for i, w in enumerate(weights):
        T = T + make_rank_one(float(w), basis_vector(n, i), order)
    return T


def random_orthonormal(n, rng):
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


def sod_tensor(weights, basis, order):
    n = basis.shape[0]
    T = SymmetricTensor(np.zeros((n,) * order))
    for w, v in zip(weights, basis.T):
        T = T + make_rank_one(float(w), v, order)
    return T


class TestDecompose:
    def test_exact_identity_basis(self):
        n = 10
        T = diagonal_tensor([1.0] * n, 3)
        result = decompose(T, n)
        assert len(result.pairs) == n
        truth = [SpectralPair(1.0, basis_vector(n, i)) for i in range(n)]
        report = match_to_ground_truth(result, truth)
        assert report.weight_errors.max() <= 1e-8
        assert report.vector_errors.max() <= 1e-8
        assert result.residual_frobenius[-1] <= 1e-8
        assert all(f.converged for f in result.solver_flags)

    def test_extraction_order_is_descending_weight(self):
        T = diagonal_tensor([3.0, 1.0], 3)
        result = decompose(T, 2)
        assert result.pairs[0].weight == pytest.approx(3.0, abs=1e-9)
        np.testing.assert_allclose(result.pairs[0].vector, basis_vector(2, 0), atol=1e-8)
        assert result.pairs[1].weight == pytest.approx(1.0, abs=1e-9)
        np.testing.assert_allclose(result.pairs[1].vector, basis_vector(2, 1), atol=1e-8)

    @pytest.mark.parametrize("k", [0, 4])
    def test_rejects_k_out_of_range(self, k):
        T = diagonal_tensor([1.0, 1.0, 1.0], 3)
        with pytest.raises(ValueError):
            decompose(T, k)

    def test_even_order_switches_to_abs_mode(self):
        T = diagonal_tensor([2.0, -1.0], 4)
        result = decompose(T, 2)
        assert result.pairs[0].weight == pytest.approx(2.0, abs=1e-9)
        assert result.pairs[1].weight == pytest.approx(-1.0, abs=1e-9)

    def test_list_lengths_match_step_count(self, rng):
        T = symmetrize(rng.standard_normal((5, 5, 5)))
        result = decompose(T, 3)
        assert len(result.pairs) == 3
        assert len(result.residual_frobenius) == 3
        assert len(result.stationarity) == 3
        assert len(result.solver_flags) == 3
        assert result.order == 3
        assert result.dim == 5

    def test_early_stop_on_low_rank_input(self, rng):
        basis = random_orthonormal(5, rng)
        T = sod_tensor([2.0, 1.0], basis[:, :2], 3)
        result = decompose(T, 5, early_stop=True)
        assert len(result.pairs) == 2
        assert result.residual_frobenius[-1] <= 1e-10 * frobenius_norm(T) + 1e-14

    def test_degenerate_residual_is_flagged(self):
        T = SymmetricTensor(np.zeros((3, 3, 3)))
        result = decompose(T, 2)
        assert result.solver_flags[0].degenerate
        assert result.solver_flags[0].nonpositive_weight
        assert result.pairs[0].weight == 0.0

    def test_residual_identity_on_noise(self, rng):
        T = symmetrize(rng.standard_normal((5, 5, 5)))
        result = decompose(T, 3, SolverConfig(seed=1))
        gap = frobenius_norm(T - reconstruct(result))
        assert gap == pytest.approx(result.residual_frobenius[-1], abs=1e-10)

    def test_noisy_sod_tracks_truth(self, rng):
        n = 10
        basis = random_orthonormal(n, rng)
        weights = np.ones(n)
        T = sod_tensor(weights, basis, 3)
        E = symmetrize(rng.standard_normal((n,) * 3)) * 0.01
        eps = operator_norm_estimate(E, SolverConfig(seed=0))
        result = decompose(T + E, n, SolverConfig(seed=0))
        truth = [SpectralPair(1.0, basis[:, i]) for i in range(n)]
        report = match_to_ground_truth(result, truth)
        assert report.weight_errors.max() <= 2.0 * eps
        assert report.vector_errors.max() <= 20.0 * eps


class TestMatchToGroundTruth:
    def test_shuffled_exact_pairs(self, rng):
        basis = random_orthonormal(4, rng)
        truth = [SpectralPair(float(w), basis[:, i]) for i, w in enumerate([4.0, 3.0, 2.0, 1.0])]
        shuffle = np.array([2, 0, 3, 1])
        estimates = [truth[s] for s in shuffle]
        report = match_to_ground_truth(estimates, truth)
        np.testing.assert_array_equal(report.permutation, shuffle)
        assert report.weight_errors.max() == 0.0
        assert report.vector_errors.max() == 0.0
        np.testing.assert_array_equal(
            report.matched_weights, [truth[s].weight for s in shuffle]
        )

    def test_even_mode_ignores_vector_sign(self):
        truth = [SpectralPair(1.0, basis_vector(3, 0))]
        flipped = [SpectralPair(1.0, -basis_vector(3, 0))]
        even = match_to_ground_truth(flipped, truth, even_mode=True)
        assert even.vector_errors[0] == 0.0
        odd = match_to_ground_truth(flipped, truth, even_mode=False)
        assert odd.vector_errors[0] == pytest.approx(2.0)

    def test_rejects_length_mismatch(self):
        truth = [SpectralPair(1.0, basis_vector(2, 0))]
        with pytest.raises(ValueError):
            match_to_ground_truth(truth, truth * 2)

    def test_matches_factorial_oracle(self, rng):
        for trial in range(10):
            k = 4
            basis = random_orthonormal(k, rng)
            truth = [SpectralPair(1.0 + i, basis[:, i]) for i in range(k)]
            estimates = []
            for i in rng.permutation(k):
                v = basis[:, i] + 0.05 * rng.standard_normal(k)
                v /= np.linalg.norm(v)
                estimates.append(SpectralPair(float(1.0 + i + 0.02 * rng.standard_normal()), v))
            report = match_to_ground_truth(estimates, truth)
            dist = np.array(
                [[np.linalg.norm(t.vector - e.vector) for e in estimates] for t in truth]
            )
            oracle_perm, oracle_total = factorial_best_matching(dist)
            assert report.vector_errors.sum() == pytest.approx(oracle_total, abs=1e-12)
            np.testing.assert_array_equal(report.permutation, oracle_perm)

    def test_permutation_is_bijection(self, rng):
        basis = random_orthonormal(5, rng)
        truth = [SpectralPair(1.0, basis[:, i]) for i in range(5)]
        estimates = [SpectralPair(1.0, basis[:, i]) for i in rng.permutation(5)]
        report = match_to_ground_truth(estimates, truth)
        assert sorted(report.permutation) == list(range(5))


class TestReconstruct:
    def test_single_pair_matches_rank_one(self, rng):
        v = rng.standard_normal(4)
        v /= np.linalg.norm(v)
        pair = SpectralPair(2.5, v)
        result = DecompositionResult(
            pairs=(pair,),
            residual_frobenius=(0.0,),
            stationarity=(0.0,),
            solver_flags=(),
            order=3,
            dim=4,
        )
        np.testing.assert_array_equal(
            reconstruct(result).data, make_rank_one(2.5, v, 3).data
        )

    def test_exact_sod_round_trip(self, rng):
        basis = random_orthonormal(6, rng)
        T = sod_tensor(np.arange(1.0, 7.0), basis, 3)
        result = decompose(T, 6)
        assert frobenius_norm(T - reconstruct(result)) <= 1e-8

    def test_rejects_empty(self):
        empty = DecompositionResult((), (), (), (), 3, 2)
        with pytest.raises(ValueError):
            reconstruct(empty)


class TestDeflationDeltaNorms:
    def test_zero_for_exact_decomposition(self, rng):
        basis = random_orthonormal(5, rng)
        T = sod_tensor([5.0, 4.0, 3.0, 2.0, 1.0], basis, 3)
        result = decompose(T, 5)
        truth = [SpectralPair(float(5 - i), basis[:, i]) for i in range(5)]
        report = match_to_ground_truth(result, truth)
        norms, unextracted = deflation_delta_norms(truth, result, report.permutation)
        assert norms.shape == (5, 5)
        assert norms.max() <= 1e-8
        assert unextracted.sum(axis=1).tolist() == [4, 3, 2, 1, 0]

    def test_second_order_on_unextracted_directions(self, rng):
        n = 6
        basis = random_orthonormal(n, rng)
        weights = np.linspace(1.0, 2.0, n)
        T = sod_tensor(weights, basis, 3)
        E = symmetrize(rng.standard_normal((n,) * 3)) * 0.005
        eps = operator_norm_estimate(E, SolverConfig(seed=0))
        result = decompose(T + E, n, SolverConfig(seed=0))
        truth = [SpectralPair(float(w), basis[:, i]) for i, w in enumerate(weights)]
        report = match_to_ground_truth(result, truth)
        norms, unextracted = deflation_delta_norms(truth, result, report.permutation)
        bound = 100.0 * eps**2 / weights.min()
        assert norms[unextracted].max() <= bound
