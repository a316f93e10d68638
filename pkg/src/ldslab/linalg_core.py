"""Dense real linear algebra used throughout the lab.

Matrices are plain two-dimensional ``float64`` numpy arrays; :func:`as_mat`
is the single gate that validates shape and finiteness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, DimensionError, DomainError, InstabilityError, RankError

# Relative cutoff for effective rank (times sigma_1) and for numerically zero distances.
RANK_TOL = 1e-10
EPS = np.finfo(float).eps


def as_mat(M, name="M") -> np.ndarray:
    """Return ``M`` as a finite 2-D float64 array or raise."""
    A = np.asarray(M, dtype=float)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise DimensionError(f"{name} must be a non-empty 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise DomainError(f"{name} has non-finite entries")
    return A


def _square(A, name="A") -> np.ndarray:
    A = as_mat(A, name)
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {A.shape}")
    return A


@dataclass(frozen=True)
class SvdResult:
    singular_values: tuple
    effective_rank: int

    @property
    def sigma_max(self) -> float:
        return self.singular_values[0]

    @property
    def sigma_min(self) -> float:
        return self.singular_values[-1]

    def to_dict(self) -> dict:
        return {"singular_values": list(self.singular_values), "effective_rank": self.effective_rank}


def singular_values(M) -> SvdResult:
    """All ``min(rows, cols)`` singular values, non-increasing, plus the effective rank.

    The effective rank counts values above ``RANK_TOL * sigma_1`` (zero when
    ``sigma_1 == 0``).
    """
    M = as_mat(M)
    s = scipy.linalg.svdvals(M)
    s = np.maximum(np.sort(s)[::-1], 0.0)
    rank = int(np.sum(s > RANK_TOL * s[0])) if s[0] > 0 else 0
    return SvdResult(tuple(float(v) for v in s), rank)


def operator_norm(M) -> float:
    return singular_values(M).sigma_max


def frobenius_norm(M) -> float:
    return float(np.linalg.norm(as_mat(M), "fro"))


def spectral_radius(A) -> float:
    # LAPACK geev reduces to real Schur form; complex pairs only surface as moduli here.
    A = _square(A)
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def condition_number(M) -> float:
    """``sigma_1 / sigma_min``; ``math.inf`` when the matrix is numerically rank deficient."""
    sv = singular_values(M)
    if sv.effective_rank < len(sv.singular_values):
        return math.inf
    return sv.sigma_max / sv.sigma_min


def solve_lyapunov(A, tol=1e-10, max_iter=100_000) -> np.ndarray:
    """Solve ``A^T P A - P + I = 0`` by the fixed-point iteration ``P <- A^T P A + I``.

    Iterates until the Frobenius residual drops to ``tol``. Only ``n x n``
    storage is used, so large state dimensions are cheap.

    Note the transpose placement: for symmetric ``A`` this ``P`` is also the
    stationary state covariance of ``x_{t+1} = A x_t + eta_t``; in general the
    stationary covariance solves the same equation for ``A^T``.

    Raises
    ------
    InstabilityError
        If the spectral radius of ``A`` is not below one.
    ConvergenceError
        If rounding stalls the residual above ``tol``.
    """
    A = _square(A)
    rho = spectral_radius(A)
    if rho >= 1.0:
        raise InstabilityError(f"spectral radius {rho:.6g} >= 1; no positive definite solution")
    n = A.shape[0]
    eye = np.eye(n)
    P = eye.copy()
    best, stalled = math.inf, 0
    for _ in range(max_iter):
        P_next = A.T @ P @ A + eye
        P_next = 0.5 * (P_next + P_next.T)
        residual = np.linalg.norm(A.T @ P_next @ A - P_next + eye, "fro")
        P = P_next
        if residual <= tol:
            return P
        if residual < best:
            best, stalled = residual, 0
        else:
            stalled += 1
            if stalled > 50:
                break
    raise ConvergenceError(f"Lyapunov iteration stalled at residual {best:.3g} > tol {tol:.3g}")


def _distance_to_span(y, Q) -> float:
    # Two passes of projection: classical Gram-Schmidt loses accuracy when y is nearly in span(Q).
    r = y - Q @ (Q.T @ y)
    r = r - Q @ (Q.T @ r)
    return float(np.linalg.norm(r))


def row_hyperplane_distances(Y) -> np.ndarray:
    """Distance of each row of ``Y`` to the span of the remaining rows.

    Each distance is computed by projecting the row onto an orthonormal basis
    (thin QR) of the other rows, which stays accurate when the distance is
    small compared to the row norm.

    Raises
    ------
    RankError
        If ``Y`` has more rows than columns or some distance is numerically
        zero (below ``RANK_TOL`` times the row norm).
    """
    Y = as_mat(Y, "Y")
    d, p = Y.shape
    if d > p:
        raise RankError(f"{d} rows in R^{p} cannot be linearly independent")
    # Distances are row-scale covariant, so work on near-unit rows and rescale.
    norms = row_scale(Y)
    U = Y / norms[:, None]
    out = np.empty(d)
    for j in range(d):
        if d == 1:
            out[j] = np.linalg.norm(U[j])
            continue
        others = np.delete(U, j, axis=0)
        Q, _ = np.linalg.qr(others.T)
        out[j] = _distance_to_span(U[j], Q)
    if np.any(out <= RANK_TOL * np.linalg.norm(U, axis=1)):
        j = int(np.argmin(out))
        raise RankError(f"row {j} lies numerically in the span of the other rows")
    return out * norms


class RowFactor(NamedTuple):
    """Pivoted thin QR of the row-equilibrated matrix: ``(X / scale[:, None]).T[:, perm] = q @ r``."""

    q: np.ndarray
    r: np.ndarray
    perm: np.ndarray
    scale: np.ndarray
    pivot_ratio: float


def row_scale(X) -> np.ndarray:
    """Power-of-two row scales bringing every row norm into ``[0.5, 1)``.

    Dividing by a power of two is exact, so the scaled matrix has the same
    row space and least-squares solution as ``X`` with no rounding at all.
    """
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0):
        raise RankError(f"row {int(np.argmin(norms))} is identically zero")
    return np.ldexp(1.0, np.frexp(norms)[1])


def row_factor(X) -> RowFactor:
    """Factor an ``n x N`` matrix with full row rank for least-squares work.

    Rows are scaled by :func:`row_scale` before a column-pivoted Householder
    QR of the transpose. Trajectory data matrices are strongly graded (one row can be
    1e30 times another), and the row space, the rank, and the OLS solution are
    all invariant under that scaling, while an unscaled relative cutoff is not.
    Full rank is declared unless the last pivot falls to the rounding floor
    ``max(n, N) * eps`` of the first.
    """
    X = as_mat(X, "X")
    n, N = X.shape
    if N < n:
        raise RankError(f"{n} x {N} matrix cannot have full row rank")
    scale = row_scale(X)
    Q, R, perm = scipy.linalg.qr((X / scale[:, None]).T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    ratio = float(diag[-1] / diag[0])
    if ratio <= max(n, N) * EPS:
        raise RankError(f"matrix is numerically rank deficient in double precision (pivot ratio {ratio:.2e})")
    return RowFactor(Q, R, perm, scale, ratio)


def orthonormal_rowspace_basis(X) -> np.ndarray:
    """``N x n`` matrix with orthonormal columns spanning the row space of ``X``."""
    return row_factor(X).q
