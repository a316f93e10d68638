"""Seeded simulation of ``x_{t+1} = A x_t + eta_t`` and the shifted data matrices."""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, StateOverflowError
from .linalg_core import as_mat
from .system_builder import check_seed

GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MASK64 = 2**64 - 1


def derive_trial_seed(master_seed, trial_index) -> int:
    """Per-trial seed ``master + i * 0x9E3779B97F4A7C15 (mod 2^64)``; independent of execution order."""
    return (check_seed(master_seed, "master_seed") + int(trial_index) * GOLDEN_GAMMA) & _MASK64


def gaussian_matrix(n, N, seed) -> np.ndarray:
    """``n x N`` standard normals from PCG64 seeded with ``seed``.

    Filled column-major: column ``t`` is drawn before column ``t + 1``, so
    a longer matrix from the same seed extends a shorter one.
    """
    if n < 1 or N < 1:
        raise DimensionError(f"shape must be positive, got ({n}, {N})")
    rng = np.random.default_rng(check_seed(seed))
    return np.ascontiguousarray(rng.standard_normal((N, n)).T)


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray   # n x (N+1), columns x_0 .. x_N
    noises: np.ndarray   # n x N, columns eta_0 .. eta_{N-1}
    seed: int
    spec_digest: str
    transition: np.ndarray

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def N(self) -> int:
        return self.noises.shape[1]

    def to_csv(self) -> str:
        """Header ``t,x_1..x_n,eta_1..eta_n``; the final row has empty noise cells."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = self.n
        w.writerow(["t"] + [f"x_{i + 1}" for i in range(n)] + [f"eta_{i + 1}" for i in range(n)])
        for t in range(self.N + 1):
            eta = [repr(float(v)) for v in self.noises[:, t]] if t < self.N else [""] * n
            w.writerow([t] + [repr(float(v)) for v in self.states[:, t]] + eta)
        return buf.getvalue()


@dataclass(frozen=True)
class DataMatrices:
    x_plus: np.ndarray
    x_minus: np.ndarray
    noise: np.ndarray


def _digest_matrix(A) -> str:
    return hashlib.sha256(np.ascontiguousarray(A).tobytes()).hexdigest()[:16]


def simulate(A, N, x0=None, seed=0, noises=None, spec_digest=None) -> Trajectory:
    """Run the noise-driven recursion for ``N`` steps.

    ``noises`` overrides the seeded draw (pass zeros for the noise-free
    system); ``x0`` defaults to the origin.

    Raises
    ------
    StateOverflowError
        At the first step whose state is not finite.
    """
    A = as_mat(A, "A")
    n = A.shape[0]
    if A.shape[1] != n:
        raise DimensionError(f"A must be square, got {A.shape}")
    if N < 1:
        raise DimensionError(f"N must be >= 1, got {N}")
    seed = check_seed(seed)
    if noises is None:
        E = gaussian_matrix(n, N, seed)
    else:
        E = as_mat(noises, "noises")
        if E.shape != (n, N):
            raise DimensionError(f"noises must be {n} x {N}, got {E.shape}")
    X = np.zeros((n, N + 1))
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float).reshape(-1)
        if x0.shape != (n,):
            raise DimensionError(f"x0 must have length {n}")
        if not np.all(np.isfinite(x0)):
            raise DomainError("x0 must be finite")
        X[:, 0] = x0
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(N):
            X[:, t + 1] = A @ X[:, t] + E[:, t]
    finite = np.all(np.isfinite(X), axis=0)
    if not finite.all():
        raise StateOverflowError(int(np.argmin(finite)))
    return Trajectory(X, E, seed, spec_digest or _digest_matrix(A), A)


def assemble(traj: Trajectory) -> DataMatrices:
    """Shifted matrices ``X+ = [x_1..x_N]``, ``X- = [x_0..x_{N-1}]`` and the noise record."""
    data = DataMatrices(traj.states[:, 1:], traj.states[:, :-1], traj.noises)
    residual = np.linalg.norm(data.x_plus - traj.transition @ data.x_minus - data.noise)
    scale = np.linalg.norm(data.x_plus)
    # Rounding in the recursion is relative to |A x_t|, so allow a few ulps of the data scale.
    if residual > 1e-10 * max(scale, 1.0):
        raise AssertionError(f"X+ != A X- + E (residual {residual:.3g})")
    return data


def talagrand_variance_class(op_norm_A, N):
    """Order class and constant of the trajectory-level transport inequality.

    ``||A|| < 1`` gives ``1/(1-||A||)^2``, ``||A|| = 1`` gives ``N(N+1)``,
    ``||A|| > 1`` gives ``||A||^N * N``. Unit prefactors, reporting only.
    """
    if op_norm_A < 0 or N < 1:
        raise DomainError("need op_norm_A >= 0 and N >= 1")
    if abs(op_norm_A - 1.0) <= 1e-12:
        return "marginal", float(N * (N + 1))
    if op_norm_A < 1.0:
        return "stable", 1.0 / (1.0 - op_norm_A) ** 2
    try:
        return "explosive", float(op_norm_A) ** N * N
    except OverflowError:
        return "explosive", math.inf
