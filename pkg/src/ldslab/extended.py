"""Multiprecision least squares for data matrices that are singular to double precision.

Non-diagonalizable dynamics produce ``X-`` whose rows are collinear to
within 1e-17 or less, yet the matrix is exactly full rank and the OLS
estimate on the recorded (float64) data is well defined. These routines
evaluate it with MPFR arithmetic (gmpy2) on exact conversions of the data.
"""

from __future__ import annotations

import gmpy2
import numpy as np

from .errors import RankError
from .linalg_core import as_mat, row_scale

PRECISION_BITS = 256

_to_mpfr = np.frompyfunc(gmpy2.mpfr, 1, 1)
_to_float = np.frompyfunc(float, 1, 1)


def _cholesky(G, tol):
    n = G.shape[0]
    L = np.empty((n, n), dtype=object)
    L[:] = gmpy2.mpfr(0)
    top = max(G[i, i] for i in range(n))
    for j in range(n):
        pivot = G[j, j] - (np.dot(L[j, :j], L[j, :j]) if j else 0)
        if pivot <= tol * top:
            raise RankError(f"X- is rank deficient even at {PRECISION_BITS}-bit precision (row {j})")
        L[j, j] = gmpy2.sqrt(pivot)
        if j + 1 < n:
            below = G[j + 1:, j] - (L[j + 1:, :j] @ L[j, :j] if j else 0)
            L[j + 1:, j] = below / L[j, j]
    return L


def times_right_inverse(B, x_minus, bits=PRECISION_BITS) -> np.ndarray:
    """``B X-^T (X- X-^T)^{-1}`` evaluated in ``bits``-bit arithmetic, rounded to float64.

    Rows of ``X-`` are scaled by exact powers of two; the Gram matrix of the
    scaled rows is factored by Cholesky, which is accurate here because the
    working precision far exceeds the squared condition number.
    """
    x_minus = as_mat(x_minus, "x_minus")
    B = as_mat(B, "B")
    n, N = x_minus.shape
    if N < n:
        raise RankError(f"{n} x {N} matrix cannot have full row rank")
    scale = row_scale(x_minus)
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        Y = _to_mpfr(x_minus / scale[:, None])
        G = Y @ Y.T
        C = _to_mpfr(B) @ Y.T
        L = _cholesky(G, tol=n * gmpy2.mpfr(2) ** (16 - bits))
        # Solve G Z = C^T by forward then backward substitution, all right-hand sides at once.
        Z = C.T.copy()
        for i in range(n):
            if i:
                Z[i] = Z[i] - L[i, :i] @ Z[:i]
            Z[i] = Z[i] / L[i, i]
        for i in range(n - 1, -1, -1):
            if i < n - 1:
                Z[i] = Z[i] - L[i + 1:, i] @ Z[i + 1:]
            Z[i] = Z[i] / L[i, i]
        out = _to_float(Z.T).astype(float)
    return out / scale[None, :]


def _lower_inverse(L):
    n = L.shape[0]
    inv = np.empty((n, n), dtype=object)
    inv[:] = gmpy2.mpfr(0)
    for i in range(n):
        inv[i, i] = 1 / L[i, i]
        for j in range(i):
            inv[i, j] = -(L[i, j:i] @ inv[j:i, j]) / L[i, i]
    return inv


def rowspace_geometry(x_minus, bits=PRECISION_BITS):
    """Row-to-hyperplane distances of ``X-`` and an orthonormal basis of its row space.

    With ``Y Y^T = L L^T`` for the scaled rows ``Y``, the squared inverse
    distances are the squared column norms of ``L^-1`` and ``Y^T L^-T`` has
    orthonormal columns spanning the row space.
    """
    x_minus = as_mat(x_minus, "x_minus")
    n, N = x_minus.shape
    if N < n:
        raise RankError(f"{n} x {N} matrix cannot have full row rank")
    scale = row_scale(x_minus)
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        Y = _to_mpfr(x_minus / scale[:, None])
        L = _cholesky(Y @ Y.T, tol=n * gmpy2.mpfr(2) ** (16 - bits))
        Linv = _lower_inverse(L)
        inv_d2 = (Linv * Linv).sum(axis=0)
        distances = _to_float(1 / np.vectorize(gmpy2.sqrt, otypes=[object])(inv_d2)).astype(float)
        basis = _to_float(Y.T @ Linv.T).astype(float)
    return distances * scale, basis
