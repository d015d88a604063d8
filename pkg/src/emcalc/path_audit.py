"""Finite-horizon path laws, time reversal, KL divergence and the DPI audit.

Everything here is exact enumeration over paths of positive probability; no
sampling. Tables are kept sorted lexicographically by path so every sum runs in
a fixed order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import DimensionMismatch, ExplosionCap, ShapeMismatch
from .kernel_core import Dist, Kernel
from .lens_packaging import Lens

__all__ = [
    "DEFAULT_CAP",
    "PathLaw",
    "KLResult",
    "path_law",
    "reverse_pushforward",
    "kl",
    "sigma_T",
    "ep_rate",
    "coarse_path_pushforward",
    "dpi_audit",
]

DEFAULT_CAP = 10**7
MASS_TOL = 1e-10
COMMUTATION_TOL = 1e-12
DPI_TOL = 1e-10


@dataclass(frozen=True)
class PathLaw:
    T: int
    table: Mapping[tuple, float]

    def __post_init__(self):
        table = dict(sorted(self.table.items()))
        for path, p in table.items():
            if len(path) != self.T + 1:
                raise ShapeMismatch(f"path {path} has length {len(path)}, expected {self.T + 1}")
            if p < 0:
                raise ValueError(f"path {path} has negative probability")
        object.__setattr__(self, "table", table)

    @property
    def mass(self) -> float:
        return math.fsum(self.table.values())

    def get(self, path) -> float:
        return self.table.get(tuple(path), 0.0)

    def to_json(self) -> dict:
        return {"T": self.T,
                "entries": [{"path": list(k), "p": v} for k, v in self.table.items()]}


@dataclass(frozen=True)
class KLResult:
    value: float
    infinite_support_witness: tuple | int | None = field(default=None)

    @property
    def infinite(self) -> bool:
        return math.isinf(self.value)

    def to_json(self) -> dict:
        if self.infinite:
            w = self.infinite_support_witness
            return {"value": None, "infinite": True,
                    "witness": list(w) if isinstance(w, tuple) else w}
        return {"value": self.value, "infinite": False, "witness": None}


def path_law(P: Kernel, rho: Dist, T: int, cap: int = DEFAULT_CAP) -> PathLaw:
    """Enumerate ``rho(z0) * prod_t P(z_t, z_{t+1})`` over positive-probability paths."""
    if rho.dim != P.dim:
        raise DimensionMismatch(f"initial distribution has {rho.dim} states, kernel {P.dim}")
    if T < 0:
        raise ValueError("horizon must be nonnegative")
    n = P.dim
    if n ** (T + 1) > cap:
        raise ExplosionCap(f"{n}^{T + 1} paths exceed cap {cap}")
    rows = P.rows
    succ = [[(j, float(rows[i, j])) for j in range(n) if rows[i, j] > 0] for i in range(n)]
    layer = {(z,): float(w) for z, w in enumerate(rho.weights) if w > 0}
    for _ in range(T):
        nxt = {}
        for path, p in layer.items():
            for j, pij in succ[path[-1]]:
                q = p * pij
                if q > 0:
                    nxt[path + (j,)] = q
        layer = nxt
    return PathLaw(T, layer)


def reverse_pushforward(pl: PathLaw) -> PathLaw:
    return PathLaw(pl.T, {tuple(reversed(k)): v for k, v in pl.table.items()})


def kl(p, q) -> KLResult:
    """KL divergence with ``0 log(0/q) = 0`` and ``+inf`` on missing support.

    Accepts two :class:`PathLaw` of equal horizon or two vectors of equal length.
    On ``+inf`` the first path (or index) with ``p > 0 = q`` is returned as witness.
    """
    if isinstance(p, PathLaw) or isinstance(q, PathLaw):
        if not (isinstance(p, PathLaw) and isinstance(q, PathLaw)) or p.T != q.T:
            raise ShapeMismatch("KL needs two path laws with the same horizon")
        items = p.table.items()
        lookup = q.get
    else:
        pv = np.asarray(getattr(p, "weights", p), dtype=float)
        qv = np.asarray(getattr(q, "weights", q), dtype=float)
        if pv.shape != qv.shape:
            raise ShapeMismatch(f"shapes {pv.shape} and {qv.shape} differ")
        items = ((i, float(pv[i])) for i in range(pv.size))
        lookup = lambda i: float(qv[i])  # noqa: E731
    terms = []
    for key, pk in items:
        if pk <= 0:
            continue
        qk = lookup(key)
        if qk <= 0:
            return KLResult(math.inf, key)
        terms.append(pk * math.log(pk / qk))
    return KLResult(max(math.fsum(terms), 0.0))


def sigma_T(P: Kernel, rho: Dist, T: int, cap: int = DEFAULT_CAP) -> KLResult:
    """Path reversal asymmetry: KL of the forward path law against its reversal."""
    if T < 1:
        raise ValueError("horizon must be >= 1")
    fwd = path_law(P, rho, T, cap)
    return kl(fwd, reverse_pushforward(fwd))


def ep_rate(P: Kernel, pi: Dist, T: int, cap: int = DEFAULT_CAP) -> float:
    """Finite-horizon per-step ratio ``sigma_T(pi) / T``; no limit is taken."""
    return sigma_T(P, pi, T, cap).value / T


def coarse_path_pushforward(lens: Lens, pl: PathLaw) -> PathLaw:
    """Push a path law through the coordinatewise lens."""
    f = lens.assignment
    buckets: dict[tuple, list] = {}
    for path, p in pl.table.items():
        if max(path) >= len(f):
            raise DimensionMismatch(f"path state {max(path)} outside lens of {len(f)} states")
        buckets.setdefault(tuple(f[z] for z in path), []).append(p)
    return PathLaw(pl.T, {k: math.fsum(v) for k, v in buckets.items()})


def _max_table_diff(a: PathLaw, b: PathLaw) -> float:
    keys = set(a.table) | set(b.table)
    return max((abs(a.get(k) - b.get(k)) for k in keys), default=0.0)


def dpi_audit(P: Kernel, rho: Dist, lens: Lens, T: int, cap: int = DEFAULT_CAP) -> dict:
    """Check that the lens cannot raise path reversal asymmetry.

    The reversal of the observed law is computed both as ``R(f(P))`` and
    ``f(R(P))``; the two must agree to 1e-12.
    """
    if lens.n_states != P.dim:
        raise DimensionMismatch(f"lens has {lens.n_states} states, kernel {P.dim}")
    fwd = path_law(P, rho, T, cap)
    rev = reverse_pushforward(fwd)
    micro = kl(fwd, rev)
    macro_fwd = coarse_path_pushforward(lens, fwd)
    macro_rev = reverse_pushforward(macro_fwd)
    commutation_error = _max_table_diff(macro_rev, coarse_path_pushforward(lens, rev))
    macro = kl(macro_fwd, macro_rev)
    if micro.infinite:
        ok = True
    elif macro.infinite:
        ok = False
    else:
        ok = macro.value <= micro.value + DPI_TOL
    ok = ok and commutation_error <= COMMUTATION_TOL
    slack = None if (micro.infinite or macro.infinite) else micro.value - macro.value
    return {"micro": micro, "macro": macro, "slack": slack, "pass": ok,
            "commutation_error": commutation_error, "T": T}
