"""Transition matrices with prescribed Jordan structure and closed-form Jordan powers."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .errors import ConfigError, DimensionError, DomainError, PowerOverflowError

UINT64_MAX = 2**64 - 1


def check_seed(seed, field_name="seed") -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ConfigError(field_name, f"expected an unsigned 64-bit integer, got {seed!r}")
    if not 0 <= int(seed) <= UINT64_MAX:
        raise ConfigError(field_name, f"{seed} is outside [0, 2^64)")
    return int(seed)


@dataclass(frozen=True)
class BlockSpec:
    eigenvalue: float
    size: int

    def __post_init__(self):
        if isinstance(self.size, bool) or not isinstance(self.size, (int, np.integer)) or self.size < 1:
            raise ConfigError("size", f"block size must be a positive integer, got {self.size!r}")
        if isinstance(self.eigenvalue, bool) or not isinstance(self.eigenvalue, (int, float, np.number)) \
                or not math.isfinite(self.eigenvalue):
            raise ConfigError("lambda", f"eigenvalue must be a finite real, got {self.eigenvalue!r}")
        object.__setattr__(self, "eigenvalue", float(self.eigenvalue))
        object.__setattr__(self, "size", int(self.size))


@dataclass(frozen=True)
class SystemSpec:
    """Direct sum of Jordan blocks, optionally conjugated by a seeded Haar orthogonal matrix.

    ``seed`` is ``None`` exactly when there is no conjugation.
    """

    blocks: tuple
    seed: int | None = None
    _n: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        blocks = tuple(self.blocks)
        if not blocks:
            raise ConfigError("blocks", "at least one Jordan block is required")
        for b in blocks:
            if not isinstance(b, BlockSpec):
                raise ConfigError("blocks", f"expected BlockSpec, got {type(b).__name__}")
        object.__setattr__(self, "blocks", blocks)
        if self.seed is not None:
            object.__setattr__(self, "seed", check_seed(self.seed, "conjugation.seed"))
        object.__setattr__(self, "_n", sum(b.size for b in blocks))

    @property
    def n(self) -> int:
        return self._n

    @property
    def diagonalizable(self) -> bool:
        return all(b.size == 1 for b in self.blocks)

    def to_dict(self) -> dict:
        conj = {"kind": "none"} if self.seed is None else {"kind": "random_orthogonal", "seed": self.seed}
        return {
            "blocks": [{"lambda": b.eigenvalue, "size": b.size} for b in self.blocks],
            "conjugation": conj,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data) -> "SystemSpec":
        if not isinstance(data, dict):
            raise ConfigError("system", "expected a JSON object")
        unknown = set(data) - {"blocks", "conjugation"}
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown key in system spec")
        if "blocks" not in data or not isinstance(data["blocks"], list):
            raise ConfigError("blocks", "expected a list of {lambda, size} objects")
        blocks = []
        for item in data["blocks"]:
            if not isinstance(item, dict):
                raise ConfigError("blocks", "each block must be an object")
            extra = set(item) - {"lambda", "size"}
            if extra:
                raise ConfigError(sorted(extra)[0], "unknown key in block")
            for key in ("lambda", "size"):
                if key not in item:
                    raise ConfigError(key, "missing from block")
            blocks.append(BlockSpec(item["lambda"], item["size"]))
        conj = data.get("conjugation", {"kind": "none"})
        if not isinstance(conj, dict) or "kind" not in conj:
            raise ConfigError("conjugation", "expected {\"kind\": ...}")
        if conj["kind"] == "none":
            if set(conj) != {"kind"}:
                raise ConfigError("conjugation", "kind 'none' takes no other fields")
            seed = None
        elif conj["kind"] == "random_orthogonal":
            if set(conj) != {"kind", "seed"}:
                raise ConfigError("conjugation.seed", "random_orthogonal requires exactly a seed")
            seed = conj["seed"]
        else:
            raise ConfigError("conjugation.kind", f"unknown conjugation {conj['kind']!r}")
        return cls(tuple(blocks), seed)

    @classmethod
    def from_json(cls, text) -> "SystemSpec":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("system", f"malformed JSON: {exc.msg}") from None
        return cls.from_dict(data)


def stable_diagonal(n, rho) -> SystemSpec:
    """Diagonal system with eigenvalues evenly spaced on ``(0, rho]``: ``rho * (n - i) / n``."""
    if n < 1:
        raise ConfigError("n", "must be positive")
    return SystemSpec(tuple(BlockSpec(rho * (n - i) / n, 1) for i in range(n)))


def build_jordan_block(lam, m) -> np.ndarray:
    if m < 1:
        raise DimensionError(f"Jordan block size must be >= 1, got {m}")
    return lam * np.eye(m) + np.eye(m, k=1)


def random_orthogonal(n, seed) -> np.ndarray:
    """Haar-distributed orthogonal matrix, deterministic in ``seed``.

    QR of a standard Gaussian matrix with the signs of ``diag(R)`` folded
    into ``Q`` (without the sign fix the distribution is not Haar).
    """
    if n < 1:
        raise DimensionError(f"n must be >= 1, got {n}")
    Z = np.random.default_rng(check_seed(seed)).standard_normal((n, n))
    Q, R = np.linalg.qr(Z)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def build_system(spec: SystemSpec) -> np.ndarray:
    A = scipy.linalg.block_diag(*[build_jordan_block(b.eigenvalue, b.size) for b in spec.blocks])
    if spec.seed is not None:
        U = random_orthogonal(spec.n, spec.seed)
        A = U @ A @ U.T
    return A


def _power_coefficients(lam, m, k):
    """``C(k, r) * lam**(k - r)`` for ``r = 0 .. m-1`` (zero when ``r > k``)."""
    coeffs = np.zeros(m)
    binom = 1.0
    for r in range(min(m, k + 1)):
        if r > 0:
            binom = binom * (k - r + 1) / r
        if not math.isfinite(binom):
            raise PowerOverflowError(lam, m, k)
        try:
            term = binom * lam ** (k - r)
        except OverflowError:
            raise PowerOverflowError(lam, m, k) from None
        if term == 0.0 and lam != 0.0:
            # lam**(k-r) underflowed on its own; the product may still be representable.
            log_mag = math.log(binom) + (k - r) * math.log(abs(lam))
            term = math.copysign(math.exp(log_mag), lam) if (k - r) % 2 else math.exp(log_mag)
        if not math.isfinite(term):
            raise PowerOverflowError(lam, m, k)
        coeffs[r] = term
    return coeffs


def jordan_block_power(lam, m, k) -> np.ndarray:
    """k-th power of ``J(lam, m)`` from the closed form ``(J^k)_ij = C(k, j-i) lam^(k-j+i)``."""
    if m < 1:
        raise DimensionError(f"Jordan block size must be >= 1, got {m}")
    if k < 0:
        raise DomainError(f"power must be non-negative, got {k}")
    coeffs = _power_coefficients(float(lam), int(m), int(k))
    out = np.zeros((m, m))
    for r in range(m):
        if coeffs[r] != 0.0:
            out += coeffs[r] * np.eye(m, k=r)
    return out


class NormBounds(NamedTuple):
    lower: float
    upper: float


def _inverse_power_column_norm_log(lam, m, k) -> float:
    """``log ||J^-k e_m||``; ``J^-k`` has entries ``(-1)^r C(k+r-1, r) lam^(-k-r)`` on diagonal ``r``."""
    a = math.log(abs(lam))
    logs = [math.lgamma(k + r) - math.lgamma(r + 1) - math.lgamma(k) - (k + r) * a for r in range(m)]
    top = max(logs)
    return top + 0.5 * math.log(sum(math.exp(2 * (v - top)) for v in logs))


def jordan_power_norm_bounds(lam, m, k) -> NormBounds:
    """Bracket ``||J(lam, m)^k||_2`` between a row-distance bound and a binomial growth bound.

    lower = min_i dist(row_i, other rows) / sqrt(m)
    upper = |lam|^k * k^m * sum_{s<m} |lam|^-s

    For a square invertible ``Y`` the distance of row ``j`` to the other rows
    is ``1 / ||Y^-1 e_j||``; ``J^-k`` is known in closed form and its last
    column is the longest, so the minimum distance is evaluated exactly in
    log space. Projecting rows of ``J^k`` numerically fails for large ``k``
    because the rows become graded far beyond double precision.
    """
    if lam == 0:
        raise DomainError("lambda must be non-zero")
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    if m < 1:
        raise DimensionError(f"Jordan block size must be >= 1, got {m}")
    a = abs(lam)
    try:
        lower = math.exp(-_inverse_power_column_norm_log(lam, m, k) - 0.5 * math.log(m))
    except OverflowError:
        lower = math.inf
    try:
        log_upper = k * math.log(a) + m * math.log(k) + math.log(sum(a ** -s for s in range(m)))
        upper = math.exp(log_upper)
    except OverflowError:
        upper = math.inf
    return NormBounds(lower, upper)


def _check_peak_domain(lam, m):
    if not 0 < abs(lam) < 1:
        raise DomainError(f"|lambda| must lie in (0, 1) for an interior maximum, got {lam}")
    if m < 2:
        raise DomainError(f"block size must be >= 2, got {m}")


def predicted_peak_iteration(lam, m) -> float:
    """Stationary point ``m / ln(1/|lam|)`` of the growth bound ``k^(2m) |lam|^(2k)``."""
    _check_peak_domain(lam, m)
    return m / math.log(1.0 / abs(lam))


def stated_peak_scale(lam, m) -> float:
    """The ``m ln m / ln(1/|lam|)`` scale quoted for the peak; reported next to the stationary point."""
    _check_peak_domain(lam, m)
    return m * math.log(m) / math.log(1.0 / abs(lam))


def numeric_bound_peak(lam, m, kmax, step=0.01) -> float:
    """Locate the maximum of ``log(k^(2m) |lam|^(2k))`` by central differences on a grid.

    Independent of the closed-form derivative; returns the interpolated
    sign change of the finite-difference slope.
    """
    _check_peak_domain(lam, m)
    ks = np.arange(1.0, kmax + step, step)
    f = 2 * m * np.log(ks) + 2 * ks * np.log(abs(lam))
    slope = (f[2:] - f[:-2]) / (2 * step)
    mid = ks[1:-1]
    idx = np.nonzero((slope[:-1] > 0) & (slope[1:] <= 0))[0]
    if idx.size == 0:
        raise DomainError(f"bound has no interior maximum on [1, {kmax}]")
    i = idx[0]
    s0, s1 = slope[i], slope[i + 1]
    return float(mid[i] + (mid[i + 1] - mid[i]) * s0 / (s0 - s1))
