"""Tests for dense triangular algebra: factorization, substitution, column updates.

Oracles here are independent of the implementation under test: numpy's
eigen/cholesky routines, dense np.linalg.solve, and hand-computed small cases.
"""

import numpy as np
import pytest

from icf_bvsr.linalg import (
    ComplexTriangularPair,
    IndexOutOfRange,
    NotPositiveDefinite,
    OpCounter,
    SingularDiagonal,
    backward_sub,
    chol_add_column,
    chol_remove_column,
    cholesky,
    forward_sub,
    givens,
)


def random_spd(rng, p, extra=1.0):
    b = rng.standard_normal((p + 5, p))
    return b.T @ b + extra * np.eye(p)


def upper_oracle(a):
    # numpy gives the lower factor; transpose to the R'R = A convention
    return np.linalg.cholesky(a).T


class TestCholesky:
    def test_known_3x3(self):
        a = np.array([[9.0, 3, 6], [3, 5, 4], [6, 4, 21]])
        r = cholesky(a)
        expected = np.array([[3.0, 1, 2], [0, 2, 1], [0, 0, 4]])
        np.testing.assert_allclose(r, expected, atol=1e-12)

    def test_identity(self):
        np.testing.assert_allclose(cholesky(np.eye(3)), np.eye(3), atol=1e-15)

    def test_reconstruction_random(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            a = random_spd(rng, 8)
            r = cholesky(a)
            assert np.all(np.tril(r, -1) == 0.0)
            assert np.all(np.diag(r) > 0)
            err = np.abs(r.T @ r - a).max()
            assert err <= 1e-10 * np.abs(a).max()

    def test_matches_library_factor(self):
        rng = np.random.default_rng(7)
        a = random_spd(rng, 12)
        np.testing.assert_allclose(cholesky(a), upper_oracle(a), rtol=1e-10)

    def test_not_positive_definite(self):
        # exactly singular: repeated column
        x = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        with pytest.raises(NotPositiveDefinite):
            cholesky(x.T @ x)
        # indefinite
        with pytest.raises(NotPositiveDefinite):
            cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            cholesky(np.array([[2.0, 1.0], [0.0, 2.0]]))


class TestSubstitution:
    def test_identity_passthrough(self):
        b = np.array([3.0, -1.0, 2.5])
        np.testing.assert_allclose(forward_sub(np.eye(3), b), b)
        np.testing.assert_allclose(backward_sub(np.eye(3), b), b)

    def test_hand_case(self):
        t = np.array([[2.0, 0.0], [1.0, 1.0]])
        np.testing.assert_allclose(forward_sub(t, np.array([2.0, 2.0])), [1.0, 1.0])
        np.testing.assert_allclose(
            backward_sub(t.T, np.array([2.0, 2.0])), [0.0, 2.0]
        )

    def test_residual_bound_real(self):
        rng = np.random.default_rng(3)
        for n in (2, 6, 17, 40, 120):
            # keep the off-diagonal mass modest so conditioning stays benign
            t = np.tril(rng.standard_normal((n, n)), -1) / np.sqrt(n)
            t[np.diag_indices(n)] = 1.0 + rng.uniform(0.5, 2.0, n)
            b = rng.standard_normal(n)
            x = forward_sub(t, b)
            assert np.abs(t @ x - b).max() <= 1e-12 * (1 + np.abs(b).max())

    def test_complex_against_dense_solve(self):
        rng = np.random.default_rng(11)
        for n in (6, 30, 80):
            r = upper_oracle(random_spd(rng, n))
            sigma = rng.uniform(0.5, 3.0, n)
            upper = r + 1j * np.diag(sigma)
            b = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            x = backward_sub(upper, b)
            np.testing.assert_allclose(x, np.linalg.solve(upper, b), rtol=1e-10)
            lower = upper.conj().T
            y = forward_sub(lower, b)
            np.testing.assert_allclose(y, np.linalg.solve(lower, b), rtol=1e-10)

    def test_singular_diagonal(self):
        t = np.array([[1.0, 0.0], [5.0, 0.0]])
        with pytest.raises(SingularDiagonal):
            forward_sub(t, np.ones(2))
        with pytest.raises(SingularDiagonal):
            backward_sub(t.T, np.ones(2))

    def test_counted_path_matches_fast_path(self):
        rng = np.random.default_rng(19)
        for n in (5, 64):
            t = np.tril(rng.standard_normal((n, n))) + 3.0 * np.eye(n)
            b = rng.standard_normal(n)
            counter = OpCounter()
            x_counted = forward_sub(t, b, counter=counter)
            np.testing.assert_allclose(x_counted, forward_sub(t, b), rtol=1e-13)
            # a triangular solve is ~n^2/2 multiply-adds
            assert counter.madds == n * (n - 1) // 2 + n


class TestGivens:
    def test_known_pair(self):
        c, s = givens(1.0, 4.0)
        root17 = np.sqrt(17.0)
        np.testing.assert_allclose([c, s], [1 / root17, 4 / root17], atol=1e-15)

    def test_axis_cases(self):
        assert givens(2.5, 0.0) == (1.0, 0.0)
        assert givens(-2.5, 0.0) == (-1.0, 0.0)
        assert givens(0.0, 3.0) == (0.0, 1.0)
        assert givens(0.0, -3.0) == (0.0, -1.0)

    def test_both_zero_identity(self):
        assert givens(0.0, 0.0) == (1.0, 0.0)

    def test_rotation_properties(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            a, b = rng.standard_normal(2) * 10.0 ** rng.integers(-3, 4)
            c, s = givens(a, b)
            assert abs(c * c + s * s - 1.0) < 1e-14
            # rotation annihilates b and leaves a nonnegative radius
            radius = c * a + s * b
            assert abs(-s * a + c * b) <= 1e-13 * max(1.0, abs(radius))
            assert radius > 0


class TestCholAddColumn:
    def test_known_4x4(self):
        r = np.array([[3.0, 1, 2], [0, 2, 1], [0, 0, 4]])
        new_col = np.array([3.0, 7.0, 9.0, 20.0])
        expected = np.array(
            [[3.0, 1, 2, 1], [0, 2, 1, 3], [0, 0, 4, 1], [0, 0, 0, 3]]
        )
        np.testing.assert_allclose(chol_add_column(r, new_col), expected, atol=1e-12)

    def test_orthogonal_new_column(self):
        r = np.array([[1.0]])
        np.testing.assert_allclose(
            chol_add_column(r, np.array([0.0, 1.0])), np.eye(2), atol=1e-15
        )

    def test_from_empty_factor(self):
        r0 = np.zeros((0, 0))
        np.testing.assert_allclose(
            chol_add_column(r0, np.array([9.0])), np.array([[3.0]]), atol=1e-15
        )

    def test_refactorization_oracle(self):
        rng = np.random.default_rng(23)
        x = rng.standard_normal((60, 11))
        gram = x.T @ x
        r10 = cholesky(gram[:10, :10])
        r11 = chol_add_column(r10, gram[:, 10])
        np.testing.assert_allclose(r11, upper_oracle(gram), atol=1e-10)

    def test_collinear_column_rejected(self):
        rng = np.random.default_rng(29)
        x = rng.standard_normal((40, 4))
        gram = x.T @ x
        r = cholesky(gram)
        # duplicate the last covariate: cross-products of x4 against (x1..x4, x4)
        dup = np.append(gram[:, 3], gram[3, 3])
        with pytest.raises(NotPositiveDefinite):
            chol_add_column(r, dup)


class TestCholRemoveColumn:
    def test_known_removal(self):
        r = np.array([[3.0, 1, 2], [0, 2, 1], [0, 0, 4]])
        out = chol_remove_column(r, 1)
        expected = np.array([[3.0, 2.0], [0.0, np.sqrt(17.0)]])
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_identity(self):
        np.testing.assert_allclose(chol_remove_column(np.eye(3), 0), np.eye(2))

    def test_refactorization_oracle(self):
        rng = np.random.default_rng(31)
        x = rng.standard_normal((80, 12))
        gram = x.T @ x
        r = cholesky(gram)
        out = chol_remove_column(r, 4)
        keep = [i for i in range(12) if i != 4]
        np.testing.assert_allclose(
            out, upper_oracle(gram[np.ix_(keep, keep)]), atol=1e-10
        )

    def test_positive_diagonal_preserved(self):
        rng = np.random.default_rng(37)
        r = cholesky(random_spd(rng, 9))
        for k in (0, 4, 8):
            out = chol_remove_column(r, k)
            assert np.all(np.diag(out) > 0)
            assert np.all(np.tril(out, -1) == 0.0)

    def test_index_out_of_range(self):
        r = np.eye(3)
        with pytest.raises(IndexOutOfRange):
            chol_remove_column(r, 3)
        with pytest.raises(IndexOutOfRange):
            chol_remove_column(r, -1)


class TestUpdateSequences:
    def test_add_then_remove_roundtrip(self):
        rng = np.random.default_rng(41)
        x = rng.standard_normal((50, 8))
        gram = x.T @ x
        r = cholesky(gram[:7, :7])
        r_plus = chol_add_column(r, gram[:, 7])
        back = chol_remove_column(r_plus, 7)
        np.testing.assert_allclose(back, r, atol=1e-10)

    def test_long_interleaved_update_drift(self):
        # 1000 random add/remove updates against a pool of 40 covariates,
        # then compare to a fresh factorization of the same Gram matrix.
        rng = np.random.default_rng(43)
        x = rng.standard_normal((300, 40))
        gram = x.T @ x
        members = list(range(10))
        r = cholesky(gram[np.ix_(members, members)])
        for _ in range(1000):
            can_add = len(members) < 30
            can_remove = len(members) > 1
            do_add = can_add and (not can_remove or rng.uniform() < 0.5)
            if do_add:
                j = int(rng.choice([c for c in range(40) if c not in members]))
                col = np.append(gram[members, j], gram[j, j])
                r = chol_add_column(r, col)
                members.append(j)
            else:
                k = int(rng.integers(len(members)))
                r = chol_remove_column(r, k)
                members.pop(k)
        fresh = upper_oracle(gram[np.ix_(members, members)])
        assert np.abs(r - fresh).max() < 1e-8


class TestComplexTriangularPair:
    def test_product_reconstructs_shifted_matrix(self):
        rng = np.random.default_rng(47)
        for p in (1, 2, 5, 13, 30):
            r = upper_oracle(random_spd(rng, p))
            sigma = rng.uniform(0.3, 4.0, p)
            pair = ComplexTriangularPair.from_cholesky(r, sigma)
            a = r.T @ r + np.diag(sigma**2)
            skew = r.T @ np.diag(sigma) - np.diag(sigma) @ r
            np.testing.assert_allclose(
                pair.lower @ pair.upper, a + 1j * skew, atol=1e-10 * np.abs(a).max()
            )

    def test_structure(self):
        rng = np.random.default_rng(53)
        r = upper_oracle(random_spd(rng, 6))
        sigma = rng.uniform(0.5, 2.0, 6)
        pair = ComplexTriangularPair.from_cholesky(r, sigma)
        np.testing.assert_allclose(pair.upper, r + 1j * np.diag(sigma))
        np.testing.assert_allclose(pair.lower, pair.upper.conj().T)

    def test_solve_matches_dense_inverse(self):
        rng = np.random.default_rng(59)
        p = 17
        r = upper_oracle(random_spd(rng, p))
        sigma = rng.uniform(0.5, 2.0, p)
        pair = ComplexTriangularPair.from_cholesky(r, sigma)
        v = rng.standard_normal(p) + 1j * rng.standard_normal(p)
        h = pair.lower @ pair.upper
        np.testing.assert_allclose(pair.solve(v), np.linalg.solve(h, v), rtol=1e-9)
