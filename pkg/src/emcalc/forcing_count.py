"""Definability of Boolean predicates relative to a lens, and the counting
facts around it: exactly ``2^K`` of the ``2^N`` predicates are definable.

Monte Carlo sampling uses numpy's ``PCG64`` bit generator seeded directly
with the caller's integer seed; predicates are drawn in fixed chunks of
``MC_CHUNK`` rows of i.i.d. fair bits so hit counts are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import BudgetExceeded, DimensionMismatch
from .lens_packaging import Lens

__all__ = [
    "Predicate",
    "ForcingReport",
    "is_definable",
    "forcing_report",
    "monte_carlo_definability",
    "exact_enumeration",
    "extend_lens",
    "GENERATOR",
    "ENUMERATION_LIMIT",
]

GENERATOR = "numpy.random.PCG64"
MC_CHUNK = 65_536
ENUMERATION_LIMIT = 24
_ENUM_CHUNK = 1 << 20


@dataclass(frozen=True)
class Predicate:
    bits: tuple

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise ValueError("predicate bits must be 0 or 1")
        object.__setattr__(self, "bits", bits)

    def __len__(self):
        return len(self.bits)


def _bits(h) -> tuple:
    return h.bits if isinstance(h, Predicate) else Predicate(h).bits


def is_definable(h, lens: Lens) -> bool:
    bits = _bits(h)
    if len(bits) != lens.n_states:
        raise DimensionMismatch(f"predicate has {len(bits)} bits, lens {lens.n_states} states")
    return all(len({bits[z] for z in block}) == 1 for block in lens.blocks)


def _dyadic_str(exponent: int) -> str:
    return f"2^-{exponent}" if exponent else "1"


@dataclass(frozen=True)
class ForcingReport:
    N: int
    K: int
    p_definable_exact: Fraction
    per_block_constancy: tuple  # Fractions, 2^(1-|B_x|)
    union_bound: Fraction
    split_lower_bound: Fraction | None

    @property
    def p_definable(self) -> float:
        return float(self.p_definable_exact)

    @property
    def exact_dyadic(self) -> str:
        return _dyadic_str(self.N - self.K)

    def to_json(self) -> dict:
        return {
            "N": self.N,
            "K": self.K,
            "p_definable": self.p_definable,
            "exact_dyadic": self.exact_dyadic,
            "p_not_definable": float(1 - self.p_definable_exact),
            "per_block_constancy": [float(f) for f in self.per_block_constancy],
            "union_bound": float(self.union_bound),
            "split_lower_bound": (None if self.split_lower_bound is None
                                  else float(self.split_lower_bound)),
        }


def forcing_report(lens: Lens) -> ForcingReport:
    N, K = lens.n_states, lens.n_blocks
    sizes = [len(b) for b in lens.blocks]
    constancy = tuple(Fraction(1, 2 ** (s - 1)) for s in sizes)
    union = min(Fraction(1), sum(constancy, Fraction(0)))
    m = min(sizes)
    split = max(Fraction(0), 1 - K * Fraction(1, 2 ** (m - 1))) if m >= 2 else None
    return ForcingReport(N, K, Fraction(1, 2 ** (N - K)), constancy, union, split)


def _definable_rows(bits: np.ndarray, lens: Lens) -> np.ndarray:
    """Row mask: which sampled predicates are constant on every block."""
    ok = np.ones(bits.shape[0], dtype=bool)
    for block in lens.blocks:
        if len(block) > 1:
            sub = bits[:, block]
            ok &= np.all(sub == sub[:, :1], axis=1)
    return ok


def monte_carlo_definability(lens: Lens, trials: int, seed: int) -> dict:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    hits = 0
    remaining = trials
    while remaining:
        c = min(MC_CHUNK, remaining)
        bits = rng.integers(0, 2, size=(c, lens.n_states), dtype=np.uint8)
        hits += int(_definable_rows(bits, lens).sum())
        remaining -= c
    p = 2.0 ** -(lens.n_states - lens.n_blocks)
    freq = hits / trials
    sigma = math.sqrt(p * (1 - p) / trials)
    three_sigma = 3 * sigma
    return {
        "hits": hits,
        "trials": trials,
        "freq": freq,
        "p_exact": p,
        "three_sigma": three_sigma,
        "consistent": abs(freq - p) <= max(three_sigma, 3 / trials),
        "generator": GENERATOR,
        "seed": seed,
    }


def exact_enumeration(lens: Lens, mode: str = "auto") -> dict:
    """Count definable predicates by brute force over all ``2^N`` bit strings.

    ``mode="closed"`` skips enumeration; ``"auto"`` enumerates only when
    ``N <= ENUMERATION_LIMIT``.
    """
    N, K = lens.n_states, lens.n_blocks
    if mode not in ("auto", "enumerate", "closed"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "enumerate" and N > ENUMERATION_LIMIT:
        raise BudgetExceeded(f"2^{N} predicates exceed the enumeration budget 2^{ENUMERATION_LIMIT}")
    if mode == "closed" or N > ENUMERATION_LIMIT:
        return {"definable_count": 2 ** K, "total": 2 ** N, "mode": "closed"}
    masks = [sum(1 << z for z in block) for block in lens.blocks]
    count = 0
    total = 1 << N
    for start in range(0, total, _ENUM_CHUNK):
        h = np.arange(start, min(start + _ENUM_CHUNK, total), dtype=np.int64)
        ok = np.ones(h.size, dtype=bool)
        for mask in masks:
            part = h & mask
            ok &= (part == 0) | (part == mask)
        count += int(ok.sum())
    assert count == 2 ** K, f"enumeration found {count} definable predicates, expected 2^{K}"
    return {"definable_count": count, "total": total, "mode": "enumerate"}


def extend_lens(lens: Lens, h) -> Lens:
    """Joint lens ``(f, h)``: split each block by the value of ``h``.

    Unsplit blocks keep their label; split ones become ``"<label>.0"`` and
    ``"<label>.1"``. New blocks are ordered by (old block, h value).
    """
    bits = _bits(h)
    if len(bits) != lens.n_states:
        raise DimensionMismatch(f"predicate has {len(bits)} bits, lens {lens.n_states} states")
    cells, labels = [], []
    for x, block in enumerate(lens.blocks):
        values = sorted({bits[z] for z in block})
        for b in values:
            cells.append([z for z in block if bits[z] == b])
            labels.append(lens.labels[x] if len(values) == 1 else f"{lens.labels[x]}.{b}")
    out = Lens.from_blocks(cells, labels)
    strict = out.n_blocks > lens.n_blocks
    assert out.refines(lens)
    assert strict == (not is_definable(bits, lens))
    return out
