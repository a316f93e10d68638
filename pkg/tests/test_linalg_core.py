import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ldslab.errors import DimensionError, DomainError, InstabilityError, RankError
from ldslab.linalg_core import (
    as_mat,
    condition_number,
    frobenius_norm,
    operator_norm,
    orthonormal_rowspace_basis,
    row_factor,
    row_hyperplane_distances,
    singular_values,
    solve_lyapunov,
    spectral_radius,
)
from ldslab.system_builder import random_orthogonal
from ldslab.trajectory import gaussian_matrix


def test_as_mat_rejects_nonfinite_and_bad_shapes():
    with pytest.raises(DomainError):
        as_mat([[1.0, np.nan]])
    with pytest.raises(DimensionError):
        as_mat([1.0, 2.0])
    with pytest.raises(DimensionError):
        as_mat(np.zeros((0, 3)))


def test_singular_values_examples():
    sv = singular_values(np.eye(3))
    assert sv.singular_values == (1.0, 1.0, 1.0) and sv.effective_rank == 3
    sv = singular_values(np.diag([3.0, 0.0]))
    assert sv.singular_values == (3.0, 0.0) and sv.effective_rank == 1
    sv = singular_values([[1, 0, 0], [0, 2, 0]])
    np.testing.assert_allclose(sv.singular_values, (2.0, 1.0))
    assert sv.effective_rank == 2
    assert singular_values(np.zeros((2, 2))).effective_rank == 0


def test_operator_norm_examples():
    assert operator_norm(np.zeros((3, 2))) == 0.0
    assert operator_norm(np.diag([0.9, 0.5])) == pytest.approx(0.9)
    # Oracle: sigma_1^2 is the largest root of z^2 - 1.5 z + 0.0625, i.e. ((1 + sqrt 2) / 2)^2.
    J = np.array([[0.5, 1.0], [0.0, 0.5]])
    assert operator_norm(J) == pytest.approx((1 + math.sqrt(2)) / 2, rel=1e-12)
    assert operator_norm(J) == pytest.approx(1.2071068, abs=1e-7)


def _power_iteration_norm(M, iters=500):
    v = np.ones(M.shape[1])
    for _ in range(iters):
        v = M.T @ (M @ v)
        v /= np.linalg.norm(v)
    return math.sqrt(v @ (M.T @ (M @ v)))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32))
def test_operator_norm_matches_power_iteration(r, c, seed):
    M = np.random.default_rng(seed).standard_normal((r, c))
    assert operator_norm(M) == pytest.approx(_power_iteration_norm(M), rel=1e-6)


def test_frobenius_examples():
    assert frobenius_norm(np.eye(3)) == pytest.approx(math.sqrt(3))
    assert frobenius_norm([[3.0, 4.0]]) == 5.0


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**32))
def test_frobenius_equals_root_sum_of_squared_singular_values(r, c, seed):
    M = np.random.default_rng(seed).standard_normal((r, c)) * 10.0
    s = np.array(singular_values(M).singular_values)
    assert abs(frobenius_norm(M) - math.sqrt(np.sum(s ** 2))) <= 1e-10 * frobenius_norm(M)
    assert np.all(np.diff(s) <= 0) and np.all(s >= 0)


def test_spectral_radius_examples():
    assert spectral_radius(np.diag([0.9, -0.75])) == pytest.approx(0.9)
    J = 0.5 * np.eye(4) + np.eye(4, k=1)
    assert spectral_radius(J) == pytest.approx(0.5)
    # z^2 + 0.5 = 0 has roots +- i sqrt(0.5).
    assert spectral_radius([[0.0, 1.0], [-0.5, 0.0]]) == pytest.approx(math.sqrt(0.5), rel=1e-12)
    with pytest.raises(DimensionError):
        spectral_radius(np.zeros((2, 3)))


def test_condition_number_examples():
    assert condition_number(np.eye(3)) == pytest.approx(1.0)
    assert condition_number(np.diag([4.0, 2.0])) == pytest.approx(2.0)
    assert condition_number([[1.0, 0.0], [0.0, 0.0]]) == math.inf


def test_lyapunov_examples():
    np.testing.assert_allclose(solve_lyapunov(np.zeros((3, 3))), np.eye(3))
    P = solve_lyapunov(np.diag([0.9, 0.5]))
    np.testing.assert_allclose(P, np.diag([1 / (1 - 0.81), 1 / (1 - 0.25)]), rtol=1e-9)
    with pytest.raises(InstabilityError):
        solve_lyapunov(np.diag([1.0, 0.2]))


def test_lyapunov_jordan_against_truncated_series():
    A = np.array([[0.9, 1.0], [0.0, 0.9]])
    P = solve_lyapunov(A)
    # Oracle: P = sum_k (A^T)^k A^k, truncated once ||A^K||^2 is negligible.
    ref, Ak = np.zeros((2, 2)), np.eye(2)
    while np.linalg.norm(Ak, 2) ** 2 > 1e-16:
        ref += Ak.T @ Ak
        Ak = Ak @ A
    np.testing.assert_allclose(P, ref, rtol=1e-9)
    assert np.linalg.norm(A.T @ P @ A - P + np.eye(2)) <= 1e-10
    assert np.min(np.linalg.eigvalsh(P)) >= 1 - 1e-8


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 8), st.floats(0.05, 0.95), st.integers(0, 2**32))
def test_lyapunov_residual_and_lower_bound(n, rho, seed):
    G = np.random.default_rng(seed).standard_normal((n, n))
    A = G * (rho / spectral_radius(G))
    P = solve_lyapunov(A)
    assert np.linalg.norm(A.T @ P @ A - P + np.eye(n)) <= 1e-10
    np.testing.assert_allclose(P, P.T)
    assert np.min(np.linalg.eigvalsh(P)) >= 1 - 1e-8


def test_row_distances_examples():
    np.testing.assert_allclose(row_hyperplane_distances([[1, 0, 0], [0, 2, 0]]), (1.0, 2.0))
    np.testing.assert_allclose(row_hyperplane_distances(np.eye(3)), (1.0, 1.0, 1.0))
    # Explicit projection: row 1 onto span{(1,1)} leaves (1,0) - (1/2)(1,1), norm 1/sqrt 2; row 2 onto span{(1,0)} leaves (0,1).
    np.testing.assert_allclose(row_hyperplane_distances([[1, 0], [1, 1]]), (1 / math.sqrt(2), 1.0), rtol=1e-12)
    np.testing.assert_allclose(row_hyperplane_distances([[3.0, 4.0]]), (5.0,))


def test_row_distances_rank_errors():
    with pytest.raises(RankError):
        row_hyperplane_distances([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(RankError):
        row_hyperplane_distances(np.ones((3, 2)))


def _inverse_gram_diagonal(Y):
    # d_j^-2 is the j-th diagonal entry of (Y Y^T)^-1.
    return np.diag(np.linalg.inv(Y @ Y.T))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(0, 6), st.integers(0, 2**32))
def test_negative_second_moment_identity_all_forms(d, extra, seed):
    Y = np.random.default_rng(seed).standard_normal((d, d + extra + 1))
    dist = row_hyperplane_distances(Y)
    a = np.sum(np.array(singular_values(Y).singular_values) ** -2.0)
    b = np.sum(dist ** -2.0)
    c = np.sum(_inverse_gram_diagonal(Y))
    assert abs(a - b) <= 1e-8 * a
    assert abs(c - b) <= 1e-8 * a
    np.testing.assert_allclose(dist ** -2.0, _inverse_gram_diagonal(Y), rtol=1e-8)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32))
def test_row_distances_invariant_under_right_orthogonal(d, seed):
    p = d + 3
    Y = gaussian_matrix(d, p, seed)
    U = random_orthogonal(p, seed + 1)
    np.testing.assert_allclose(row_hyperplane_distances(Y @ U), row_hyperplane_distances(Y), rtol=1e-8)


def test_row_distances_graded_rows():
    # Row scaling multiplies each distance by the same factor; here by 2^80 and 2^-60.
    Y = gaussian_matrix(4, 9, 3)
    D = np.array([2.0 ** 80, 1.0, 2.0 ** -60, 3.0])
    np.testing.assert_allclose(row_hyperplane_distances(D[:, None] * Y), D * row_hyperplane_distances(Y), rtol=1e-10)


def test_rowspace_basis_examples():
    X = np.hstack([np.eye(2), np.zeros((2, 2))])
    Q = orthonormal_rowspace_basis(X)
    np.testing.assert_allclose(Q @ Q.T, np.diag([1.0, 1.0, 0.0, 0.0]), atol=1e-12)
    X = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 1.0]])
    Q = orthonormal_rowspace_basis(X)
    np.testing.assert_allclose(Q.T @ Q, np.eye(2), atol=1e-10)
    # Gram-Schmidt by hand: e1 = (1,1,0)/sqrt2, e2 = (-1,1,2)/sqrt6.
    e = np.array([[1, 1, 0], [-1, 1, 2]]) / np.array([[math.sqrt(2)], [math.sqrt(6)]])
    np.testing.assert_allclose(Q @ Q.T, e.T @ e, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 7), st.integers(0, 8), st.integers(0, 2**32))
def test_rowspace_basis_projection_identity(n, extra, seed):
    X = gaussian_matrix(n, n + extra, seed)
    Q = orthonormal_rowspace_basis(X)
    assert Q.shape == (n + extra, n)
    np.testing.assert_allclose(Q.T @ Q, np.eye(n), atol=1e-10)
    assert np.linalg.norm(X @ Q @ Q.T - X) <= 1e-8 * np.linalg.norm(X)


def test_row_factor_rank_gate():
    with pytest.raises(RankError):
        row_factor(np.zeros((3, 2)))
    with pytest.raises(RankError):
        row_factor([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]])
    f = row_factor(gaussian_matrix(3, 10, 1))
    assert 0 < f.pivot_ratio <= 1
    assert set(np.log2(f.scale)) <= set(range(-1100, 1100))
