"""Finite distributions and row-stochastic kernels.

Row-vector convention throughout: a distribution ``mu`` is a row vector and one
step of the dynamics is ``mu @ P``. Column-stochastic input is rejected, never
transposed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    DimensionMismatch,
    NegativeEntry,
    NonSquare,
    NotConverged,
    NotIrreducible,
    RowSumOutOfTolerance,
)

__all__ = [
    "ToleranceConfig",
    "Dist",
    "Kernel",
    "validate_kernel",
    "propagate",
    "kernel_power",
    "stationary",
    "is_irreducible",
    "check_detailed_balance",
    "commutator_max_abs",
    "tv_distance",
]

# Rows whose sum is already this close to 1 are left untouched, which keeps
# re-validation idempotent (dividing by 1 +- ulp would perturb the last bit).
_RENORM_EPS = 1e-14


@dataclass(frozen=True)
class ToleranceConfig:
    row_sum_tol: float = 1e-5
    stationarity_tol: float = 1e-12
    zero_tol: float = 1e-15
    max_power_iters: int = 1_000_000

    def __post_init__(self):
        for name in ("row_sum_tol", "stationarity_tol", "zero_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.max_power_iters < 1:
            raise ValueError("max_power_iters must be >= 1")

    def as_dict(self) -> dict:
        return {
            "row_sum_tol": self.row_sum_tol,
            "stationarity_tol": self.stationarity_tol,
            "zero_tol": self.zero_tol,
            "max_power_iters": self.max_power_iters,
        }


DEFAULT_TOL = ToleranceConfig()


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dist:
    """A probability vector on ``len(weights)`` states."""

    weights: np.ndarray
    info: Mapping | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        w = _frozen(self.weights)
        if w.ndim != 1 or w.size == 0:
            raise DimensionMismatch("distribution must be a non-empty vector")
        if np.any(w < 0):
            raise NegativeEntry("distribution has negative weights")
        if abs(w.sum() - 1.0) > 1e-12:
            raise RowSumOutOfTolerance(f"distribution sums to {float(w.sum())!r}, not 1")
        object.__setattr__(self, "weights", w)

    @classmethod
    def normalized(cls, weights, info=None) -> "Dist":
        w = np.asarray(weights, dtype=float)
        s = w.sum()
        if not s > 0:
            raise ValueError("cannot normalize a zero vector")
        return cls(w / s, info=info)

    @classmethod
    def uniform(cls, n: int) -> "Dist":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def delta(cls, i: int, n: int) -> "Dist":
        w = np.zeros(n)
        w[i] = 1.0
        return cls(w)

    @property
    def dim(self) -> int:
        return self.weights.size

    def __len__(self):
        return self.weights.size


@dataclass(frozen=True)
class Kernel:
    """Row-stochastic matrix. Build through :func:`validate_kernel`."""

    rows: np.ndarray
    states: tuple = ()
    clamped: tuple = field(default=(), compare=False)
    renormalized: tuple = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "rows", _frozen(self.rows))
        if not self.states:
            object.__setattr__(self, "states", tuple(f"s{i}" for i in range(self.dim)))
        elif len(self.states) != self.dim:
            raise DimensionMismatch("state labels do not match kernel size")

    @property
    def dim(self) -> int:
        return self.rows.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.rows, dtype=dtype)


def validate_kernel(raw_matrix, cfg: ToleranceConfig = DEFAULT_TOL,
                    states: Sequence[str] | None = None) -> Kernel:
    """Check and canonicalize a square row-stochastic matrix.

    Entries below ``cfg.zero_tol`` become exact zeros; any row that then
    misses 1 by more than rounding is rescaled. Both adjustments are listed on
    the returned kernel (``clamped``, ``renormalized``).
    """
    if isinstance(raw_matrix, Kernel):
        states = states or raw_matrix.states
        raw_matrix = raw_matrix.rows
    m = np.array(raw_matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise NonSquare(f"kernel must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NegativeEntry("kernel has non-finite entries")
    neg = np.argwhere(m < -cfg.zero_tol)
    if neg.size:
        i, j = neg[0]
        raise NegativeEntry(f"entry ({i},{j}) = {float(m[i, j])!r} is negative")

    small = (m < cfg.zero_tol) & (m != 0.0)
    clamped = tuple((int(i), int(j)) for i, j in np.argwhere(small))
    m[small] = 0.0

    sums = m.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > cfg.row_sum_tol)
    if bad.size:
        i = int(bad[0])
        raise RowSumOutOfTolerance(f"row {i} sums to {float(sums[i])!r}")
    renorm = np.flatnonzero(np.abs(sums - 1.0) > _RENORM_EPS)
    for i in renorm:
        m[i] = m[i] / sums[i]
    return Kernel(m, tuple(states) if states else (), clamped,
                  tuple(int(i) for i in renorm))


def _check_dims(mu: Dist, P: Kernel):
    if mu.dim != P.dim:
        raise DimensionMismatch(f"distribution has {mu.dim} states, kernel {P.dim}")


def propagate(mu: Dist, P: Kernel, t: int) -> Dist:
    """``mu P^t`` by ``t`` sequential row-vector products."""
    _check_dims(mu, P)
    if t < 0:
        raise ValueError("t must be nonnegative")
    v = mu.weights
    for _ in range(t):
        v = v @ P.rows
    # clip rounding noise so the result is a valid Dist
    v = np.clip(v, 0.0, None)
    return Dist(v / v.sum())


def kernel_power(P: Kernel | np.ndarray, t: int) -> np.ndarray:
    """``P^t`` as ``t`` sequential products in index order."""
    m = np.asarray(P, dtype=float)
    out = np.eye(m.shape[0])
    for _ in range(t):
        out = out @ m
    return out


def is_irreducible(P: Kernel | np.ndarray) -> bool:
    m = np.asarray(P, dtype=float)
    if m.shape[0] == 1:
        return True
    n_comp, _ = connected_components(csr_matrix(m > 0), directed=True, connection="strong")
    return n_comp == 1


def stationary(P: Kernel, cfg: ToleranceConfig = DEFAULT_TOL) -> Dist:
    """Stationary distribution by power iteration from the uniform start.

    Period-2 oscillation is resolved by averaging two consecutive iterates.
    The returned ``Dist.info`` records the iteration count and method.
    """
    if not is_irreducible(P):
        raise NotIrreducible("directed support graph is not strongly connected")
    m = P.rows
    n = P.dim
    pi = np.full(n, 1.0 / n)
    prev = None
    for it in range(cfg.max_power_iters + 1):
        nxt = pi @ m
        res = float(np.abs(nxt - pi).sum())
        if res <= cfg.stationarity_tol:
            return Dist.normalized(pi, info={"iterations": it, "method": "power",
                                             "residual": res})
        if prev is not None:
            res_avg = 0.5 * float(np.abs(nxt - prev).sum())
            if res_avg <= cfg.stationarity_tol:
                return Dist.normalized(0.5 * (prev + pi),
                                       info={"iterations": it, "method": "power-window2",
                                             "residual": res_avg})
        prev, pi = pi, nxt
    raise NotConverged(f"power iteration did not converge in {cfg.max_power_iters} steps")


class DetailedBalance(NamedTuple):
    holds: bool
    violation: float


def check_detailed_balance(P: Kernel, pi: Dist, tol: float = 1e-10) -> DetailedBalance:
    _check_dims(pi, P)
    flux = pi.weights[:, None] * P.rows
    violation = float(np.max(np.abs(flux - flux.T)))
    return DetailedBalance(violation <= tol, violation)


def commutator_max_abs(A: Kernel, B: Kernel) -> float:
    a, b = np.asarray(A, dtype=float), np.asarray(B, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ")
    return float(np.max(np.abs(a @ b - b @ a)))


def tv_distance(p, q) -> float:
    """Total variation, half the L1 norm of the difference."""
    return 0.5 * float(np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float)).sum())
