import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ldslab.errors import BandUndefinedError, ContainmentError, DomainError, RankError
from ldslab.linalg_core import singular_values
from ldslab.ols import (
    OlsReport,
    check_containment,
    diag_error_band,
    estimate_ols,
    ols_error_bounds,
    ols_error_identity,
    ols_report,
    restrict_to_rowspace,
)
from ldslab.system_builder import BlockSpec, SystemSpec, build_system, random_orthogonal, stable_diagonal
from ldslab.trajectory import DataMatrices, assemble, derive_trial_seed, simulate


def _data(A, N, seed, **kw):
    return assemble(simulate(A, N, seed=seed, **kw))


def _normal_equations(data):
    # Independent route: solve (X- X-^T) B^T = X- X+^T.
    G = data.x_minus @ data.x_minus.T
    return np.linalg.solve(G, data.x_minus @ data.x_plus.T).T


def test_zero_noise_recovery():
    A = np.diag([0.5, 0.25])
    data = _data(A, 2, 0, x0=[1.0, 1.0], noises=np.zeros((2, 2)))
    np.testing.assert_array_equal(data.x_minus, [[1.0, 0.5], [1.0, 0.25]])
    np.testing.assert_allclose(estimate_ols(data), A, atol=1e-14)


def test_null_dynamics_estimate_is_small_and_centred():
    n = 3
    ests = [estimate_ols(_data(np.zeros((n, n)), 400, derive_trial_seed(1, i))) for i in range(40)]
    assert np.linalg.norm(np.mean(ests, axis=0)) < 0.05
    assert max(np.linalg.norm(e) for e in ests) < 0.4


def test_stable_diagonal_accuracy_against_normal_equations():
    A = build_system(stable_diagonal(5, 0.9))
    data = _data(A, 500, 2024)
    est = estimate_ols(data)
    np.testing.assert_allclose(est, _normal_equations(data), rtol=1e-9, atol=1e-12)
    assert np.linalg.norm(A - est) < 0.5


def test_rank_deficient_data_raises():
    x = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]])
    data = DataMatrices(x, x, np.zeros_like(x))
    with pytest.raises(RankError):
        estimate_ols(data)
    with pytest.raises(RankError):
        estimate_ols(DataMatrices(np.ones((3, 2)), np.ones((3, 2)), np.zeros((3, 2))))


def test_float_and_extended_routes_agree_when_well_conditioned():
    A = build_system(stable_diagonal(6, 0.9))
    data = _data(A, 60, 8)
    np.testing.assert_allclose(estimate_ols(data, extended=False), estimate_ols(data, extended=True),
                               rtol=1e-10, atol=1e-13)


def test_extended_route_on_jordan_data_matches_mpmath():
    A = build_system(SystemSpec((BlockSpec(0.9, 25),)))
    data = _data(A, 50, 5)
    est = estimate_ols(data)
    np.testing.assert_array_equal(est, estimate_ols(data, extended=True))
    mpmath.mp.dps = 80
    Xm = mpmath.matrix(data.x_minus.tolist())
    Xp = mpmath.matrix(data.x_plus.tolist())
    ref = Xp * Xm.T * mpmath.inverse(Xm * Xm.T)
    ref = np.array(ref.tolist(), dtype=float)
    np.testing.assert_allclose(est, ref, rtol=1e-10, atol=1e-10 * np.abs(ref).max())


def test_error_identity_zero_noise():
    A = np.diag([0.5, 0.25])
    data = _data(A, 2, 0, x0=[1.0, 1.0], noises=np.zeros((2, 2)))
    lhs, rhs = ols_error_identity(data, A)
    assert lhs < 1e-14 and rhs == 0.0


@pytest.mark.parametrize("seed", range(10))
def test_error_identity_seeded(seed):
    A = build_system(stable_diagonal(5, 0.9))
    lhs, rhs = ols_error_identity(_data(A, 100, seed), A)
    assert abs(lhs - rhs) <= 1e-8 * max(lhs, 1.0)


def test_error_identity_scalar_closed_form():
    a = 0.7
    data = _data(np.array([[a]]), 50, 3)
    x, y, e = data.x_minus[0], data.x_plus[0], data.noise[0]
    a_hat = (x @ y) / (x @ x)
    lhs, rhs = ols_error_identity(data, [[a]])
    assert lhs == pytest.approx(abs(a - a_hat), rel=1e-10)
    assert rhs == pytest.approx(abs(e @ x) / (x @ x), rel=1e-10)
    assert abs(lhs - rhs) <= 1e-8 * max(lhs, 1.0)


def test_trace_identity_four_ways():
    A = build_system(stable_diagonal(6, 0.9))
    X = _data(A, 80, 11).x_minus
    G = X @ X.T
    inv = np.linalg.inv(G)  # explicit inverse only here, to compare routes
    pinv = X.T @ inv
    a = np.linalg.norm(pinv, "fro") ** 2
    b = np.trace(inv)
    c = np.sum(np.array(singular_values(X).singular_values) ** -2.0)
    from ldslab.linalg_core import row_hyperplane_distances
    d = np.sum(row_hyperplane_distances(X) ** -2.0)
    for v in (b, c, d):
        assert abs(v - a) <= 1e-8 * a


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32))
def test_orthogonal_equivariance(n, seed):
    A = build_system(stable_diagonal(n, 0.8))
    data = _data(A, 10 * n + 5, seed)
    U = random_orthogonal(n, seed ^ 0xABCDEF)
    rotated = DataMatrices(U @ data.x_plus, U @ data.x_minus, U @ data.noise)
    np.testing.assert_allclose(estimate_ols(rotated), U @ estimate_ols(data) @ U.T, rtol=1e-8, atol=1e-10)


def test_restrict_to_rowspace_examples():
    n, N = 2, 5
    E = np.arange(10.0).reshape(n, N)
    X = np.hstack([np.eye(n), np.zeros((n, N - n))])
    R = restrict_to_rowspace(E, X)
    # Basis of span{e1, e2} in R^5 is determined up to an orthogonal factor; compare Gram matrices.
    np.testing.assert_allclose(R @ R.T, E[:, :n] @ E[:, :n].T, atol=1e-12)
    x = np.array([[3.0, 4.0, 0.0]])
    e = np.array([[1.0, 2.0, 5.0]])
    r = restrict_to_rowspace(e, x)
    assert r.shape == (1, 1)
    assert abs(r[0, 0]) == pytest.approx(abs(e[0] @ x[0]) / 5.0)


def test_restrict_to_rowspace_basis_invariance():
    data = _data(build_system(stable_diagonal(4, 0.9)), 30, 6)
    s1 = singular_values(restrict_to_rowspace(data.noise, data.x_minus)).singular_values
    # Another orthonormal basis of the same row space, from an SVD.
    Vt = np.linalg.svd(data.x_minus, full_matrices=False)[2]
    s2 = singular_values(data.noise @ Vt.T).singular_values
    np.testing.assert_allclose(s1, s2, rtol=1e-8)


def test_bounds_zero_noise():
    data = _data(np.diag([0.5, 0.25]), 4, 0, x0=[1.0, 1.0], noises=np.zeros((2, 4)))
    assert ols_error_bounds(data) == (0.0, 0.0)


def test_bounds_bracket_small_case():
    A = np.diag([0.9, 0.5])
    data = _data(A, 10, 31337)
    err = np.linalg.norm(A - _normal_equations(data))
    lo, hi = ols_error_bounds(data)
    assert lo <= err <= hi


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.integers(0, 30), st.floats(0.0, 0.95), st.integers(0, 2**32))
def test_sandwich_containment_property(n, extra, rho, seed):
    A = build_system(stable_diagonal(n, rho))
    report = ols_report(_data(A, n + 1 + extra, seed), A)
    assert report.lower_bound <= report.upper_bound


def test_diag_error_band_examples():
    lo, hi = diag_error_band(0.9, 30, 300)
    M = 271
    assert lo == pytest.approx(math.sqrt(0.1 / (0.1 * M + math.sqrt(M))))
    assert hi == pytest.approx(math.sqrt(0.1 * 900 / (0.1 * M - math.sqrt(M))))
    with pytest.raises(BandUndefinedError):
        diag_error_band(0.9, 30, 40)
    with pytest.raises(DomainError):
        diag_error_band(1.0, 3, 100)


def test_diag_error_band_decays_like_inverse_root_n():
    his = [diag_error_band(0.5, 4, N)[1] for N in (10**4, 4 * 10**4, 16 * 10**4)]
    assert his[0] / his[1] == pytest.approx(2.0, rel=0.02)
    assert his[1] / his[2] == pytest.approx(2.0, rel=0.01)


def test_report_serialization_fields():
    A = build_system(stable_diagonal(3, 0.9))
    report = ols_report(_data(A, 40, 1), A)
    d = json.loads(report.to_json())
    assert list(d) == ["a_hat", "frob_error", "distances", "sv_xminus", "sv_projected_noise",
                       "lower_bound", "upper_bound", "kappa_xminus"]
    assert len(d["a_hat"]) == 3 and len(d["a_hat"][0]) == 3
    assert d["lower_bound"] <= d["frob_error"] <= d["upper_bound"]
    assert isinstance(report, OlsReport)


def test_single_long_block_is_singular_to_double_precision():
    A = build_system(SystemSpec((BlockSpec(0.9, 50),)))
    data = _data(A, 150, 42)
    with pytest.raises(RankError):
        estimate_ols(data, extended=False)


def test_report_on_jordan_data_reports_infinite_kappa_as_null():
    A = build_system(SystemSpec((BlockSpec(0.9, 25),)))
    report = ols_report(_data(A, 50, 5))
    assert report.kappa_xminus == math.inf
    assert json.loads(report.to_json())["kappa_xminus"] is None


def test_check_containment():
    check_containment(1.0, 0.5, 1.0)
    check_containment(1.0 + 1e-9, 0.5, 1.0)
    with pytest.raises(ContainmentError):
        check_containment(1.1, 0.5, 1.0)


def test_explosive_state_rounding_dominates_the_recorded_noise():
    # States near 1.9^90 ~ 1e25 are stored with absolute rounding ~ 1e9, which acts as extra noise:
    # the computed error leaves the sandwich built from the injected noise, whose identity side
    # stays at the stable level.
    A = np.diag([1.9] + [0.9] * 29)
    data = _data(A, 90, derive_trial_seed(42, 0))
    lhs, rhs = ols_error_identity(data, A)
    assert rhs < 20 and lhs > 1e5
    with pytest.raises(ContainmentError):
        ols_report(data, A)
    effective = data.x_plus - A @ data.x_minus - data.noise
    assert np.abs(effective).max() > 1e-3
