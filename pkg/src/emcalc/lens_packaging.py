"""Lenses, prototype lifts and the induced empirical endomap.

A lens assigns every microstate a block label. Together with per-block
prototype distributions and a timescale ``tau`` it induces the endomap

    mu  ->  lift(pushforward(mu P^tau))

which in row convention is the stochastic matrix ``P^tau @ A @ U`` where ``A``
is the state-by-block membership matrix and ``U`` stacks the prototypes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, LensError, NotARefinement, TauZero
from .kernel_core import Dist, Kernel, kernel_power, tv_distance

__all__ = [
    "Lens",
    "PrototypeSet",
    "EmpiricalEndomap",
    "pushforward",
    "lift",
    "build_endomap",
    "idempotence_defect_tv",
    "retention_error",
    "prototype_stability",
    "stable_count",
    "refinement_report",
]


@dataclass(frozen=True)
class Lens:
    """Surjective map from states ``0..N-1`` onto ``labels``."""

    assignment: tuple
    labels: tuple = ()

    def __post_init__(self):
        assignment = tuple(int(a) for a in self.assignment)
        if not assignment:
            raise LensError("lens needs at least one state")
        k = max(assignment) + 1
        labels = tuple(str(x) for x in self.labels) if self.labels else tuple(str(i) for i in range(k))
        if min(assignment) < 0 or max(assignment) >= len(labels):
            raise LensError("assignment refers to an unknown label")
        used = set(assignment)
        if len(used) != len(labels):
            missing = [labels[i] for i in range(len(labels)) if i not in used]
            raise LensError(f"lens is not surjective; empty blocks {missing}")
        if len(set(labels)) != len(labels):
            raise LensError("block labels must be distinct")
        object.__setattr__(self, "assignment", assignment)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def identity(cls, n: int) -> "Lens":
        return cls(tuple(range(n)))

    @classmethod
    def single_block(cls, n: int, label: str = "all") -> "Lens":
        return cls((0,) * n, (label,))

    @classmethod
    def from_blocks(cls, blocks: Sequence[Sequence[int]], labels=()) -> "Lens":
        n = sum(len(b) for b in blocks)
        assignment = [-1] * n
        for x, block in enumerate(blocks):
            for z in block:
                if assignment[z] != -1:
                    raise LensError(f"state {z} appears in two blocks")
                assignment[z] = x
        if -1 in assignment:
            raise LensError("blocks do not cover every state")
        return cls(tuple(assignment), tuple(labels))

    @classmethod
    def balanced(cls, n: int, k: int) -> "Lens":
        """Contiguous blocks with sizes differing by at most one."""
        if not 1 <= k <= n:
            raise LensError(f"need 1 <= k <= n, got n={n}, k={k}")
        sizes = [n // k + (1 if i < n % k else 0) for i in range(k)]
        assignment = [x for x, s in enumerate(sizes) for _ in range(s)]
        return cls(tuple(assignment))

    @property
    def n_states(self) -> int:
        return len(self.assignment)

    @property
    def n_blocks(self) -> int:
        return len(self.labels)

    @property
    def blocks(self) -> tuple:
        out = [[] for _ in self.labels]
        for z, x in enumerate(self.assignment):
            out[x].append(z)
        return tuple(tuple(b) for b in out)

    def membership(self) -> np.ndarray:
        a = np.zeros((self.n_states, self.n_blocks))
        a[np.arange(self.n_states), self.assignment] = 1.0
        return a

    def refines(self, other: "Lens") -> bool:
        """True when every block of ``self`` sits inside one block of ``other``."""
        if self.n_states != other.n_states:
            return False
        return all(len({other.assignment[z] for z in b}) == 1 for b in self.blocks)

    def same_partition(self, other: "Lens") -> bool:
        return self.refines(other) and other.refines(self)

    def compose(self, outer: "Lens") -> "Lens":
        """The lens ``outer o self``; ``outer`` acts on this lens's blocks."""
        if outer.n_states != self.n_blocks:
            raise DimensionMismatch("outer lens must act on this lens's blocks")
        return Lens(tuple(outer.assignment[x] for x in self.assignment), outer.labels)


@dataclass(frozen=True)
class PrototypeSet:
    """One distribution per block, each supported inside its block."""

    lens: Lens
    matrix: np.ndarray  # (n_blocks, n_states); row x is u_x

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.shape != (self.lens.n_blocks, self.lens.n_states):
            raise DimensionMismatch(f"prototype matrix shape {m.shape} does not match lens")
        if np.any(m < 0):
            raise LensError("prototypes must be nonnegative")
        outside = m * (1.0 - self.lens.membership().T)
        if np.any(outside != 0):
            x = int(np.argwhere(outside != 0)[0][0])
            raise LensError(f"prototype {self.lens.labels[x]!r} has mass outside its block")
        if np.any(np.abs(m.sum(axis=1) - 1.0) > 1e-12):
            raise LensError("each prototype must sum to 1")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def uniform(cls, lens: Lens) -> "PrototypeSet":
        a = lens.membership().T
        return cls(lens, a / a.sum(axis=1, keepdims=True))

    @classmethod
    def point_mass(cls, lens: Lens, representatives: Sequence[int] | None = None) -> "PrototypeSet":
        """Point masses; defaults to the lowest-index state of each block."""
        reps = representatives if representatives is not None else [b[0] for b in lens.blocks]
        m = np.zeros((lens.n_blocks, lens.n_states))
        for x, z in enumerate(reps):
            m[x, z] = 1.0
        return cls(lens, m)

    @classmethod
    def stationary_conditional(cls, lens: Lens, pi: Dist) -> "PrototypeSet":
        """``pi`` conditioned on each block."""
        a = lens.membership().T * pi.weights[None, :]
        mass = a.sum(axis=1, keepdims=True)
        if np.any(mass == 0):
            raise LensError("stationary distribution gives a block zero mass")
        return cls(lens, a / mass)

    def u(self, x: int) -> np.ndarray:
        return self.matrix[x]


@dataclass(frozen=True)
class EmpiricalEndomap:
    matrix: np.ndarray
    tau: int
    lens: Lens
    prototypes: PrototypeSet

    def apply(self, mu) -> np.ndarray:
        return np.asarray(getattr(mu, "weights", mu), dtype=float) @ self.matrix


def pushforward(lens: Lens, mu) -> Dist:
    w = np.asarray(getattr(mu, "weights", mu), dtype=float)
    if w.size != lens.n_states:
        raise DimensionMismatch(f"distribution has {w.size} states, lens {lens.n_states}")
    out = np.zeros(lens.n_blocks)
    np.add.at(out, np.asarray(lens.assignment), w)
    return Dist(out)


def lift(prototypes: PrototypeSet, nu) -> Dist:
    w = np.asarray(getattr(nu, "weights", nu), dtype=float)
    if w.size != prototypes.lens.n_blocks:
        raise DimensionMismatch(f"block distribution has {w.size} entries, "
                                f"lens has {prototypes.lens.n_blocks} blocks")
    return Dist(w @ prototypes.matrix)


def _check(P: Kernel, lens: Lens, prototypes: PrototypeSet, tau: int):
    if tau < 1:
        raise TauZero("tau must be a positive integer")
    if P.dim != lens.n_states:
        raise DimensionMismatch(f"kernel has {P.dim} states, lens {lens.n_states}")
    if prototypes.lens != lens:
        raise DimensionMismatch("prototypes were built for a different lens")


def build_endomap(P: Kernel, lens: Lens, prototypes: PrototypeSet, tau: int) -> EmpiricalEndomap:
    _check(P, lens, prototypes, tau)
    m = kernel_power(P, tau) @ lens.membership() @ prototypes.matrix
    m.setflags(write=False)
    return EmpiricalEndomap(m, tau, lens, prototypes)


def idempotence_defect_tv(E: EmpiricalEndomap | np.ndarray) -> float:
    """Worst-case TV distance between two applications and one.

    The supremum over the simplex is attained at point masses, so this is half
    the largest row L1 norm of ``E @ E - E``.
    """
    m = np.asarray(getattr(E, "matrix", E), dtype=float)
    return 0.5 * float(np.max(np.abs(m @ m - m).sum(axis=1)))


def retention_error(P: Kernel, lens: Lens, prototypes: PrototypeSet, tau: int) -> float:
    """Largest TV leak of a prototype's block mass after ``tau`` steps."""
    _check(P, lens, prototypes, tau)
    coarse = prototypes.matrix @ kernel_power(P, tau) @ lens.membership()
    return max(tv_distance(coarse[x], np.eye(lens.n_blocks)[x]) for x in range(lens.n_blocks))


def prototype_stability(E: EmpiricalEndomap) -> np.ndarray:
    u = E.prototypes.matrix
    moved = u @ E.matrix
    return 0.5 * np.abs(moved - u).sum(axis=1)


def stable_count(E: EmpiricalEndomap, epsilon: float) -> tuple[int, int]:
    """(number of eps-stable prototypes, number of distinct ones among them)."""
    s = prototype_stability(E)
    stable = [x for x in range(len(s)) if s[x] <= epsilon]
    distinct = {tuple(np.round(E.prototypes.matrix[x], 12)) for x in stable}
    return len(stable), len(distinct)


def refinement_report(P: Kernel, coarse: Lens, fine: Lens,
                      coarse_prototypes: PrototypeSet, fine_prototypes: PrototypeSet,
                      tau: int, epsilon: float) -> dict:
    """Compare eps-stable prototype counts before and after refining the lens."""
    if not fine.refines(coarse):
        raise NotARefinement("fine lens does not refine the coarse lens")
    e_coarse = build_endomap(P, coarse, coarse_prototypes, tau)
    e_fine = build_endomap(P, fine, fine_prototypes, tau)
    n_coarse, d_coarse = stable_count(e_coarse, epsilon)
    n_fine, d_fine = stable_count(e_fine, epsilon)
    if n_fine > n_coarse:
        direction = "reveals"
    elif n_fine < n_coarse:
        direction = "destroys"
    else:
        direction = "preserved"
    return {
        "stable_count_coarse": n_coarse,
        "stable_count_fine": n_fine,
        "distinct_stable_coarse": d_coarse,
        "distinct_stable_fine": d_fine,
        "stability_coarse": prototype_stability(e_coarse).tolist(),
        "stability_fine": prototype_stability(e_fine).tolist(),
        "direction": direction,
        "tau": tau,
        "epsilon": epsilon,
    }
