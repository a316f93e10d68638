"""Ordinary least squares for A from one trajectory, its exact error identity, and error bounds."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .errors import BandUndefinedError, ContainmentError, DimensionError, DomainError, RankError
from .extended import rowspace_geometry, times_right_inverse
from .linalg_core import (
    SvdResult,
    as_mat,
    condition_number,
    row_factor,
    row_hyperplane_distances,
    singular_values,
)
from .trajectory import DataMatrices

CONTAINMENT_SLACK = 1e-8
# Below this pivot ratio (roughly 1/cond of the scaled X-) the double-precision solve
# loses more than ~8 digits and the multiprecision route is used instead.
EXTENDED_SWITCH = 1e-7


def _times_right_inverse_qr(B, f) -> np.ndarray:
    """``B X-^T (X- X-^T)^{-1}`` through the equilibrated pivoted QR of ``X-`` (no explicit inverse).

    With ``X- = D Y`` and ``Y^T[:, perm] = Q R`` the product reduces to
    ``(B Q) R^{-T}`` with columns un-permuted and divided by ``D``.
    """
    M = B @ f.q
    Z = scipy.linalg.solve_triangular(f.r, M.T, lower=False).T
    out = np.empty_like(Z)
    out[:, f.perm] = Z
    return out / f.scale[None, :]


def estimate_ols(data: DataMatrices, extended=None) -> np.ndarray:
    """``A_hat = X+ X-^T (X- X-^T)^{-1}``, the minimiser of ``sum_t ||x_{t+1} - B x_t||^2``.

    ``extended=None`` solves in double precision when ``X-`` is well
    conditioned after row scaling and otherwise in 256-bit arithmetic;
    ``False`` / ``True`` force one route. Raises ``RankError`` when ``X-``
    lacks full row rank at the precision used; no regularisation is applied.
    """
    x_plus = as_mat(data.x_plus, "x_plus")
    if extended:
        return times_right_inverse(x_plus, data.x_minus)
    try:
        f = row_factor(data.x_minus)
    except RankError:
        if extended is False:
            raise
        return times_right_inverse(x_plus, data.x_minus)
    if extended is None and f.pivot_ratio < EXTENDED_SWITCH:
        return times_right_inverse(x_plus, data.x_minus)
    return _times_right_inverse_qr(x_plus, f)


def ols_error_identity(data: DataMatrices, a_true):
    """Both sides of ``||A - A_hat||_F = ||E X-^T (X- X-^T)^{-1}||_F``.

    The left side goes through :func:`estimate_ols`; the right side
    applies the SVD pseudo-inverse of ``X-`` to the noise record.
    """
    a_true = as_mat(a_true, "a_true")
    lhs = float(np.linalg.norm(a_true - estimate_ols(data), "fro"))
    f = row_factor(data.x_minus)  # rank gate only
    Y = data.x_minus / f.scale[:, None]
    U, s, Vt = np.linalg.svd(Y, full_matrices=False)
    rhs_mat = ((data.noise @ Vt.T) / s[None, :]) @ U.T / f.scale[None, :]
    return lhs, float(np.linalg.norm(rhs_mat, "fro"))


def _geometry(x_minus):
    """Distances and row-space basis of ``X-``, in 256-bit arithmetic when double precision is not enough."""
    try:
        f = row_factor(x_minus)
        if f.pivot_ratio >= EXTENDED_SWITCH:
            return row_hyperplane_distances(x_minus), f.q
    except RankError:
        pass
    return rowspace_geometry(x_minus)


def _restrict(noise, x_minus, basis):
    noise = as_mat(noise, "noise")
    if noise.shape != x_minus.shape:
        raise DimensionError(f"noise {noise.shape} and x_minus {x_minus.shape} must match")
    return noise @ basis


def restrict_to_rowspace(noise, x_minus) -> np.ndarray:
    """``n x n`` matrix ``E Q`` with ``Q`` an orthonormal basis of the row space of ``X-``."""
    x_minus = as_mat(x_minus, "x_minus")
    return _restrict(noise, x_minus, _geometry(x_minus)[1])


class ErrorBounds(NamedTuple):
    lower: float
    upper: float


def _bounds(restricted_sv: SvdResult, distances) -> ErrorBounds:
    s = math.sqrt(float(np.sum(1.0 / np.asarray(distances) ** 2)))
    return ErrorBounds(restricted_sv.sigma_min * s, restricted_sv.sigma_max * s)


def ols_error_bounds(data: DataMatrices) -> ErrorBounds:
    """``sigma_min(E Q) * S <= ||A - A_hat||_F <= sigma_max(E Q) * S``, ``S = sqrt(sum_j d_j^-2)``.

    ``d_j`` is the distance of row ``j`` of ``X-`` to the span of its other rows.
    """
    x_minus = as_mat(data.x_minus, "x_minus")
    distances, basis = _geometry(x_minus)
    return _bounds(singular_values(_restrict(data.noise, x_minus, basis)), distances)


def diag_error_band(rho, n, N) -> ErrorBounds:
    """High-probability error band for stable diagonalizable systems, unit constants.

    lower = sqrt((1-rho) / ((1-rho) M + sqrt(M)))
    upper = sqrt((1-rho) n^2 / ((1-rho) M - sqrt(M))),   M = N - n + 1
    """
    if not 0 <= rho < 1:
        raise DomainError(f"rho must lie in [0, 1), got {rho}")
    M = N - n + 1
    if M < 1:
        raise BandUndefinedError(f"N - n + 1 = {M} must be positive")
    gap = (1 - rho) * M - math.sqrt(M)
    if gap <= 0:
        raise BandUndefinedError(
            f"(1-rho)(N-n+1) = {(1 - rho) * M:.4g} does not exceed sqrt(N-n+1) = {math.sqrt(M):.4g}"
        )
    lower = math.sqrt((1 - rho) / ((1 - rho) * M + math.sqrt(M)))
    upper = math.sqrt((1 - rho) * n * n / gap)
    return ErrorBounds(lower, upper)


@dataclass(frozen=True)
class OlsReport:
    a_hat: np.ndarray
    frob_error: float | None
    distances: tuple
    sv_xminus: SvdResult
    sv_projected_noise: SvdResult
    lower_bound: float
    upper_bound: float
    kappa_xminus: float

    def to_dict(self) -> dict:
        return {
            "a_hat": self.a_hat.tolist(),
            "frob_error": self.frob_error,
            "distances": list(self.distances),
            "sv_xminus": self.sv_xminus.to_dict(),
            "sv_projected_noise": self.sv_projected_noise.to_dict(),
            "lower_bound": self.lower_bound,
            "upper_bound": self.upper_bound,
            # JSON has no infinity; a rank-deficient X- is reported as null.
            "kappa_xminus": self.kappa_xminus if math.isfinite(self.kappa_xminus) else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def check_containment(error, lower, upper):
    slack = CONTAINMENT_SLACK * max(error, 1.0)
    if not (lower - slack <= error <= upper + slack):
        raise ContainmentError(f"error {error:.6g} outside [{lower:.6g}, {upper:.6g}]")


def ols_report(data: DataMatrices, a_true=None) -> OlsReport:
    """Estimate plus every diagnostic; asserts the error sandwich when ``a_true`` is given."""
    a_hat = estimate_ols(data)
    x_minus = as_mat(data.x_minus, "x_minus")
    distances, basis = _geometry(x_minus)
    sv_noise = singular_values(_restrict(data.noise, x_minus, basis))
    lower, upper = _bounds(sv_noise, distances)
    err = None
    if a_true is not None:
        err = float(np.linalg.norm(as_mat(a_true, "a_true") - a_hat, "fro"))
        check_containment(err, lower, upper)
    return OlsReport(
        a_hat=a_hat,
        frob_error=err,
        distances=tuple(float(d) for d in distances),
        sv_xminus=singular_values(data.x_minus),
        sv_projected_noise=sv_noise,
        lower_bound=lower,
        upper_bound=upper,
        kappa_xminus=condition_number(data.x_minus),
    )
