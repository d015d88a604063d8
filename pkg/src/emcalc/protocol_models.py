"""Autonomous lifted protocol chains and the clock audit.

A protocol family is a phase kernel ``S`` on ``m`` phases plus one state
kernel ``K_phi`` per phase. The lifted chain on ``X x Phi`` moves the phase
with probability ``alpha`` and the state otherwise. Flat index of ``(x, phi)``
is ``x * m + phi``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import DimensionMismatch, NotIrreducible
from .kernel_core import (
    DEFAULT_TOL,
    Dist,
    Kernel,
    ToleranceConfig,
    check_detailed_balance,
    is_irreducible,
    stationary,
    validate_kernel,
)
from .lens_packaging import Lens
from .path_audit import DEFAULT_CAP, KLResult, coarse_path_pushforward, kl, path_law, \
    reverse_pushforward

__all__ = [
    "ProtocolFamily",
    "LiftedChain",
    "lift_protocol",
    "trap_audit",
    "stroboscopic_kernel",
]

REVERSIBILITY_TOL = 1e-10
COMMON_PI_TOL = 1e-9


@dataclass(frozen=True)
class ProtocolFamily:
    phase_kernel: Kernel
    state_kernels: tuple
    alpha: float = 0.5

    def __post_init__(self):
        ks = tuple(self.state_kernels)
        object.__setattr__(self, "state_kernels", ks)
        if self.phase_kernel.dim < 2:
            raise DimensionMismatch("need at least two phases")
        if len(ks) != self.phase_kernel.dim:
            raise DimensionMismatch(f"{len(ks)} state kernels for {self.phase_kernel.dim} phases")
        if len({k.dim for k in ks}) != 1:
            raise DimensionMismatch("state kernels have different sizes")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")

    @property
    def m(self) -> int:
        return self.phase_kernel.dim

    @property
    def n_states(self) -> int:
        return self.state_kernels[0].dim


@dataclass(frozen=True)
class LiftedChain:
    kernel: Kernel
    n_states: int
    m: int

    def index(self, x: int, phi: int) -> int:
        return x * self.m + phi

    def unindex(self, k: int) -> tuple[int, int]:
        return divmod(k, self.m)

    def projection(self) -> Lens:
        """Lens forgetting the phase."""
        return Lens(tuple(k // self.m for k in range(self.n_states * self.m)))

    def product(self, pi: Dist, s: Dist) -> Dist:
        return Dist(np.kron(pi.weights, s.weights))


def phase_only(fam: ProtocolFamily) -> np.ndarray:
    return np.kron(np.eye(fam.n_states), fam.phase_kernel.rows)


def state_only(fam: ProtocolFamily) -> np.ndarray:
    n, m = fam.n_states, fam.m
    out = np.zeros((n * m, n * m))
    for phi, K in enumerate(fam.state_kernels):
        out[phi::m, phi::m] = K.rows
    return out


def lift_protocol(fam: ProtocolFamily) -> LiftedChain:
    a = fam.alpha
    m = a * phase_only(fam) + (1.0 - a) * state_only(fam)
    labels = tuple(f"{x}|{phi}" for x in range(fam.n_states) for phi in range(fam.m))
    return LiftedChain(Kernel(m, labels), fam.n_states, fam.m)


def _sigma_pair(lifted: LiftedChain, mu: Dist, T: int, cap: int):
    fwd = path_law(lifted.kernel, mu, T, cap)
    lifted_sigma = kl(fwd, reverse_pushforward(fwd))
    obs = coarse_path_pushforward(lifted.projection(), fwd)
    projected_sigma = kl(obs, reverse_pushforward(obs))
    return lifted_sigma, projected_sigma


def _closed_classes(P: np.ndarray) -> list[list[int]]:
    """Closed communicating classes, each as a sorted list of states."""
    n_comp, labels = connected_components(csr_matrix(P > 0), directed=True, connection="strong")
    classes = []
    for c in range(n_comp):
        members = np.flatnonzero(labels == c)
        outside = np.setdiff1d(np.arange(P.shape[0]), members)
        if not np.any(P[np.ix_(members, outside)] > 0):
            classes.append(members.tolist())
    return sorted(classes)


def trap_audit(fam: ProtocolFamily, T: int, cap: int = DEFAULT_CAP,
               cfg: ToleranceConfig = DEFAULT_TOL) -> dict:
    """Audit lifted and phase-projected path asymmetry.

    The two hypotheses (reversible phase kernel, state kernels reversible for
    a common ``pi``) are checked, not assumed. When they hold the audit runs
    at ``pi x s``; otherwise at the lifted chain's own stationary law, or per
    closed class when the lifted chain is reducible.
    """
    lifted = lift_protocol(fam)
    hyp = {"phase_reversible": False, "common_stationary": False,
           "state_kernels_reversible": False}
    failures = []

    s = pi = None
    try:
        s = stationary(fam.phase_kernel, cfg)
        hyp["phase_reversible"] = check_detailed_balance(fam.phase_kernel, s,
                                                         REVERSIBILITY_TOL).holds
    except NotIrreducible:
        failures.append("PhaseNotIrreducible")
    try:
        pis = [stationary(K, cfg) for K in fam.state_kernels]
        pi = pis[0]
        spread = max(float(np.abs(p.weights - pi.weights).max()) for p in pis)
        hyp["common_stationary"] = spread <= COMMON_PI_TOL
        if not hyp["common_stationary"]:
            failures.append("NoCommonStationary")
        hyp["state_kernels_reversible"] = all(
            check_detailed_balance(K, pi, REVERSIBILITY_TOL).holds for K in fam.state_kernels)
    except NotIrreducible:
        failures.append("StateKernelNotIrreducible")
    hypotheses_hold = all(hyp.values())

    reducible = not is_irreducible(lifted.kernel)
    components = []
    if hypotheses_hold:
        mu = lifted.product(pi, s)
        basis = "product"
        lifted_sigma, projected_sigma = _sigma_pair(lifted, mu, T, cap)
    elif not reducible:
        mu = stationary(lifted.kernel, cfg)
        basis = "lifted-stationary"
        lifted_sigma, projected_sigma = _sigma_pair(lifted, mu, T, cap)
    else:
        basis = "per-component"
        mu = None
        P = lifted.kernel.rows
        worst_l = worst_p = KLResult(0.0)
        for cls in _closed_classes(P):
            sub = validate_kernel(P[np.ix_(cls, cls)], cfg)
            sub_pi = stationary(sub, cfg)
            w = np.zeros(P.shape[0])
            w[cls] = sub_pi.weights
            ls, ps = _sigma_pair(lifted, Dist(w), T, cap)
            components.append({"states": cls, "lifted_sigma": ls, "projected_sigma": ps})
            worst_l = max(worst_l, ls, key=lambda r: r.value)
            worst_p = max(worst_p, ps, key=lambda r: r.value)
        lifted_sigma, projected_sigma = worst_l, worst_p

    cert = (check_detailed_balance(lifted.kernel, mu, REVERSIBILITY_TOL).holds
            if mu is not None else all(
                c["lifted_sigma"].value <= REVERSIBILITY_TOL for c in components))
    return {
        "lifted_sigma": lifted_sigma,
        "projected_sigma": projected_sigma,
        "reversible_cert": bool(cert),
        "hypotheses": hyp,
        "hypotheses_hold": hypotheses_hold,
        "failures": failures,
        "audit_distribution": None if mu is None else mu.weights.tolist(),
        "basis": basis,
        "reducible": reducible,
        "components": components,
        "T": T,
    }


def stroboscopic_kernel(K_list: Sequence[Kernel]) -> Kernel:
    """One period of an externally scheduled protocol.

    ``K_list`` is in time order, so in row convention the result is
    ``K_list[0] @ K_list[1] @ ...``; for the pair ``[K0, K1]`` this is the
    operator usually written ``K1 K0`` (apply ``K0`` first).
    """
    if not K_list:
        raise ValueError("need at least one kernel")
    dims = {K.dim for K in K_list}
    if len(dims) != 1:
        raise DimensionMismatch(f"kernels have sizes {sorted(dims)}")
    prod = reduce(lambda acc, K: acc @ K.rows, K_list[1:], np.array(K_list[0].rows))
    return validate_kernel(prod, states=K_list[0].states)
