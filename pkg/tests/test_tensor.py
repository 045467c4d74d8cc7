"""Tensor construction, contraction and text-format round trips."""
from __future__ import annotations

import io
import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose

from sroa.tensor import (
    SymmetricTensor,
    TensorFormatError,
    axpy_rank_one,
    contract_vector,
    frobenius_norm,
    inner,
    load_tensor,
    make_rank_one,
    multilinear_transform,
    save_tensor,
    symmetrize,
)
from conftest import (
    naive_contract,
    naive_multilinear,
    naive_rank_one,
    naive_symmetrize,
    random_symmetric_array,
)


def basis_vector(n, i):
    e = np.zeros(n)
    e[i] = 1.0
    return e


def diagonal_tensor(weights, p):
    """Sum of weight_i * e_i^p, the orthogonal test tensor."""
    n = len(weights)
    T = make_rank_one(weights[0], basis_vector(n, 0), p)
    for i in range(1, n):
        T = axpy_rank_one(T, weights[i], basis_vector(n, i))
    return T


class TestMakeRankOne:
    def test_basis_vector_cube(self):
        T = make_rank_one(2.0, basis_vector(2, 0), 3)
        expected = np.zeros((2, 2, 2))
        expected[0, 0, 0] = 2.0
        assert_allclose(T.data, expected, rtol=0, atol=0)

    def test_constant_vector(self):
        v = np.array([1.0, 1.0]) / np.sqrt(2.0)
        T = make_rank_one(1.0, v, 3)
        assert_allclose(T.data, np.full((2, 2, 2), 2.0 ** (-1.5)), rtol=1e-15)

    def test_even_order_negative_weight(self):
        T = make_rank_one(-1.5, basis_vector(3, 1), 4)
        assert T[1, 1, 1, 1] == -1.5
        assert np.count_nonzero(T.data) == 1

    def test_rejects_non_unit_vector(self):
        with pytest.raises(ValueError, match="unit norm"):
            make_rank_one(1.0, np.array([1.0, 1.0]), 3)

    def test_renormalizes_within_tolerance(self):
        v = np.array([1.0 + 5e-10, 0.0])
        T = make_rank_one(1.0, v, 3)
        assert T[0, 0, 0] == pytest.approx(1.0, abs=1e-9)

    def test_matches_outer_product_oracle(self, rng):
        v = rng.standard_normal(3)
        v /= np.linalg.norm(v)
        T = make_rank_one(1.7, v, 4)
        assert_allclose(T.data, naive_rank_one(1.7, v, 4), rtol=0, atol=1e-14)


class TestSymmetrize:
    def test_idempotent_bitwise(self, rng):
        sym = random_symmetric_array(3, 3, rng)
        again = symmetrize(sym)
        assert np.array_equal(again.data, symmetrize(again.data).data)

    def test_matrix_case(self):
        T = symmetrize(np.array([[0.0, 1.0], [0.0, 0.0]]))
        assert_allclose(T.data, [[0.0, 0.5], [0.5, 0.0]], rtol=0, atol=0)

    def test_orbit_averaging(self):
        raw = np.zeros((2, 2, 2))
        raw[0, 0, 1] = 6.0
        T = symmetrize(raw)
        for idx in [(0, 0, 1), (0, 1, 0), (1, 0, 0)]:
            assert T[idx] == 2.0
        assert T[0, 0, 0] == 0.0 and T[1, 1, 1] == 0.0

    def test_matches_permutation_average_oracle(self, rng):
        raw = rng.standard_normal((3, 3, 3, 3))
        assert_allclose(symmetrize(raw).data, naive_symmetrize(raw), rtol=0, atol=1e-13)

    def test_flat_input_needs_dims(self):
        flat = np.arange(8.0)
        T = symmetrize(flat, order=3, dim=2)
        assert T.order == 3 and T.dim == 2
        with pytest.raises(ValueError):
            symmetrize(flat, order=3, dim=3)

    def test_rejects_nonfinite(self):
        bad = np.zeros((2, 2))
        bad[0, 1] = np.nan
        with pytest.raises(ValueError, match="finite"):
            symmetrize(bad)


class TestContractVector:
    def test_diagonal_full_contraction(self):
        T = diagonal_tensor([1.0, 2.0], 3)
        assert contract_vector(T, np.array([1.0, 0.0]), 3) == 1.0

    def test_diagonal_partial_contraction(self):
        T = diagonal_tensor([1.0, 2.0], 3)
        a, b = 0.3, -0.8
        out = contract_vector(T, np.array([a, b]), 2)
        assert_allclose(out, [a * a, 2.0 * b * b], rtol=1e-14)

    def test_matches_triple_loop_oracle(self, rng):
        arr = random_symmetric_array(3, 3, rng)
        T = SymmetricTensor(arr)
        x = rng.standard_normal(3)
        assert contract_vector(T, x, 3) == pytest.approx(naive_contract(arr, x, 3), rel=1e-12)

    @pytest.mark.parametrize("n", [2, 3, 4])
    @pytest.mark.parametrize("p", [3, 4, 5])
    def test_oracle_equivalence_all_shapes(self, n, p, rng):
        arr = random_symmetric_array(n, p, rng)
        T = SymmetricTensor(arr)
        x = rng.standard_normal(n)
        for k in (1, p - 1, p):
            ours = contract_vector(T, x, k)
            oracle = naive_contract(arr, x, k)
            assert_allclose(ours, oracle, rtol=1e-10, atol=1e-10)

    def test_homogeneity(self, rng):
        T = SymmetricTensor(random_symmetric_array(3, 4, rng))
        x = rng.standard_normal(3)
        c = 1.7
        lhs = contract_vector(T, c * x, 4)
        rhs = c**4 * contract_vector(T, x, 4)
        assert lhs == pytest.approx(rhs, rel=1e-10)

    def test_k_out_of_range(self, rng):
        T = SymmetricTensor(random_symmetric_array(2, 3, rng))
        with pytest.raises(ValueError):
            contract_vector(T, np.zeros(2), 0)
        with pytest.raises(ValueError):
            contract_vector(T, np.zeros(2), 4)
        with pytest.raises(ValueError):
            contract_vector(T, np.zeros(3), 2)


class TestMultilinearTransform:
    def test_identity(self, rng):
        T = SymmetricTensor(random_symmetric_array(3, 3, rng))
        out = multilinear_transform(T, np.eye(3))
        assert_allclose(out.data, T.data, rtol=0, atol=1e-15)

    def test_scaled_identity(self, rng):
        T = SymmetricTensor(random_symmetric_array(2, 4, rng))
        out = multilinear_transform(T, 0.5 * np.eye(2))
        assert_allclose(out.data, T.data * 0.5**4, rtol=1e-12)

    def test_whitened_moment_example(self):
        # M3 = sum_i 0.5 e_i^3 in d=2; applying sqrt(2)*I scales each
        # diagonal entry by 2^(3/2), so the result is sum_i sqrt(2) e_i^3.
        M3 = diagonal_tensor([0.5, 0.5], 3)
        out = multilinear_transform(M3, np.sqrt(2.0) * np.eye(2))
        expected = diagonal_tensor([np.sqrt(2.0), np.sqrt(2.0)], 3)
        assert_allclose(out.data, expected.data, rtol=1e-12)
        assert_allclose(out.data, naive_multilinear(M3.data, np.sqrt(2.0) * np.eye(2)), rtol=1e-12)

    def test_rectangular_matches_oracle(self, rng):
        arr = random_symmetric_array(3, 3, rng)
        T = SymmetricTensor(arr)
        W = rng.standard_normal((3, 2))
        out = multilinear_transform(T, W)
        assert out.dim == 2
        assert_allclose(out.data, naive_multilinear(arr, W), rtol=1e-10, atol=1e-12)

    def test_composition(self, rng):
        T = SymmetricTensor(random_symmetric_array(3, 3, rng))
        W1 = rng.standard_normal((3, 3))
        W2 = rng.standard_normal((3, 2))
        direct = multilinear_transform(T, W1 @ W2)
        staged = multilinear_transform(multilinear_transform(T, W1), W2)
        assert_allclose(direct.data, staged.data, rtol=1e-10, atol=1e-12)

    def test_shape_mismatch(self, rng):
        T = SymmetricTensor(random_symmetric_array(3, 3, rng))
        with pytest.raises(ValueError):
            multilinear_transform(T, np.eye(4))


class TestInnerAndNorm:
    def test_disjoint_support(self):
        A = make_rank_one(1.0, basis_vector(2, 0), 3)
        B = make_rank_one(1.0, basis_vector(2, 1), 3)
        assert inner(A, B) == 0.0

    def test_inner_is_squared_norm(self, rng):
        T = SymmetricTensor(random_symmetric_array(3, 3, rng))
        assert inner(T, T) == pytest.approx(frobenius_norm(T) ** 2, rel=1e-12)

    def test_inner_against_rank_one_is_contraction(self, rng):
        T = SymmetricTensor(random_symmetric_array(3, 3, rng))
        x = rng.standard_normal(3)
        x /= np.linalg.norm(x)
        lhs = inner(T, make_rank_one(1.0, x, 3))
        rhs = contract_vector(T, x, 3)
        assert lhs == pytest.approx(rhs, rel=1e-10)

    def test_norm_of_orthogonal_sum(self):
        T = diagonal_tensor([1.0, 1.0], 3)
        assert frobenius_norm(T) == pytest.approx(np.sqrt(2.0), rel=1e-15)

    def test_rank_one_norm(self, rng):
        v = rng.standard_normal(4)
        v /= np.linalg.norm(v)
        assert frobenius_norm(make_rank_one(-2.5, v, 3)) == pytest.approx(2.5, rel=1e-12)

    def test_zero_norm(self):
        assert frobenius_norm(SymmetricTensor(np.zeros((2, 2, 2)))) == 0.0

    def test_shape_mismatch(self):
        A = make_rank_one(1.0, basis_vector(2, 0), 3)
        B = make_rank_one(1.0, basis_vector(3, 0), 3)
        with pytest.raises(ValueError):
            inner(A, B)


class TestAxpyRankOne:
    def test_self_deflation_is_exact_zero(self, rng):
        v = rng.standard_normal(3)
        v /= np.linalg.norm(v)
        T = make_rank_one(1.3, v, 3)
        out = axpy_rank_one(T, -1.3, v)
        assert np.all(out.data == 0.0)

    def test_exact_diagonal_deflation(self):
        T = diagonal_tensor([1.0, 1.0, 1.0], 3)
        out = axpy_rank_one(T, -1.0, basis_vector(3, 0))
        expected = np.zeros((3, 3, 3))
        expected[1, 1, 1] = 1.0
        expected[2, 2, 2] = 1.0
        assert np.array_equal(out.data, expected)

    def test_compositional_oracle(self, rng):
        T = SymmetricTensor(random_symmetric_array(3, 3, rng))
        v = rng.standard_normal(3)
        v /= np.linalg.norm(v)
        out = axpy_rank_one(T, 0.7, v)
        oracle = T.data + naive_rank_one(0.7, v, 3)
        assert_allclose(out.data, oracle, rtol=0, atol=1e-14)


class TestSymmetryInvariant:
    """Sampling check: permuted index tuples hold bitwise-equal entries."""

    @staticmethod
    def assert_bitwise_symmetric(T, rng, samples=100):
        p = T.order
        for _ in range(samples):
            idx = tuple(rng.integers(0, T.dim, size=p))
            perm = tuple(rng.permutation(p))
            permuted = tuple(idx[a] for a in perm)
            assert T[idx] == T[permuted]

    def test_constructors(self, rng):
        v = rng.standard_normal(4)
        v /= np.linalg.norm(v)
        self.assert_bitwise_symmetric(make_rank_one(1.1, v, 3), rng)
        self.assert_bitwise_symmetric(symmetrize(rng.standard_normal((4, 4, 4))), rng)

    def test_transforms(self, rng):
        T = symmetrize(rng.standard_normal((4, 4, 4)))
        W = rng.standard_normal((4, 4))
        self.assert_bitwise_symmetric(multilinear_transform(T, W), rng)
        v = rng.standard_normal(4)
        v /= np.linalg.norm(v)
        self.assert_bitwise_symmetric(axpy_rank_one(T, -0.4, v), rng)


class TestImmutability:
    def test_data_not_writeable(self, rng):
        T = SymmetricTensor(random_symmetric_array(2, 3, rng))
        with pytest.raises(ValueError):
            T.data[0, 0, 0] = 5.0

    def test_no_attribute_assignment(self, rng):
        T = SymmetricTensor(random_symmetric_array(2, 3, rng))
        with pytest.raises(AttributeError):
            T.data = np.zeros((2, 2, 2))

    def test_source_array_detached(self):
        src = np.zeros((2, 2, 2))
        T = SymmetricTensor(src)
        src[0, 0, 0] = 9.0
        assert T[0, 0, 0] == 0.0


class TestTextFormat:
    def test_round_trip_bitwise(self, rng, tmp_path):
        T = symmetrize(rng.standard_normal((3, 3, 3)))
        path = tmp_path / "t.txt"
        save_tensor(path, T)
        loaded, correction = load_tensor(path)
        assert np.array_equal(loaded.data, T.data)
        assert correction == 0.0

    def test_reader_symmetrizes_and_reports(self, tmp_path):
        path = tmp_path / "asym.txt"
        path.write_text("2 2\n0 1\n0 0\n")
        T, correction = load_tensor(path)
        assert_allclose(T.data, [[0.0, 0.5], [0.5, 0.0]], rtol=0, atol=0)
        assert correction == pytest.approx(0.5)

    def test_stream_io(self, rng):
        T = symmetrize(rng.standard_normal((2, 2, 2, 2)))
        buf = io.StringIO()
        save_tensor(buf, T)
        buf.seek(0)
        loaded, _ = load_tensor(buf)
        assert np.array_equal(loaded.data, T.data)

    def test_bad_token_has_position(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("3 2\n0 0\n0 0\n0 oops\n0 0\n")
        with pytest.raises(TensorFormatError) as exc:
            load_tensor(path)
        assert exc.value.line == 4
        assert exc.value.column == 3
        assert "oops" in str(exc.value)

    def test_too_few_entries(self, tmp_path):
        path = tmp_path / "short.txt"
        path.write_text("3 2\n1 2 3\n")
        with pytest.raises(TensorFormatError, match="expected 8 entries"):
            load_tensor(path)

    def test_extra_entries(self, tmp_path):
        path = tmp_path / "long.txt"
        path.write_text("2 2\n1 2\n3 4\n5\n")
        with pytest.raises(TensorFormatError, match="extra token"):
            load_tensor(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "hdr.txt"
        path.write_text("3\n1 2 3\n")
        with pytest.raises(TensorFormatError, match="header"):
            load_tensor(path)

    def test_nonfinite_entry_rejected(self, tmp_path):
        path = tmp_path / "inf.txt"
        path.write_text("2 2\n1 inf\n2 3\n")
        with pytest.raises(TensorFormatError, match="non-finite"):
            load_tensor(path)


def test_permutation_orbit_count_n10_p3():
    # 220 canonical index tuples at n=10, p=3; the perturbation generator
    # relies on this orbit enumeration.
    combos = len(list(itertools.combinations_with_replacement(range(10), 3)))
    assert combos == 220
