"""Named kernels and lenses used by the golden tests, the CLI demos and the
acceptance suite."""

from __future__ import annotations

import itertools

import numpy as np

from .kernel_core import Kernel, validate_kernel
from .cycle_forms import graph_walk_kernel
from .lens_packaging import Lens

# Two symmetric, non-commuting kernels on three states, printed to six decimals.
K0_ROWS = [
    [0.573333, 0.393333, 0.033333],
    [0.393333, 0.573333, 0.033333],
    [0.033333, 0.033333, 0.933333],
]
K1_ROWS = [
    [0.933333, 0.033333, 0.033333],
    [0.033333, 0.573333, 0.393333],
    [0.033333, 0.393333, 0.573333],
]
# Third phase kernel for three-phase protocols: same spectrum, mixes states 0 and 2.
K2_ROWS = [
    [0.573333, 0.033333, 0.393333],
    [0.033333, 0.933333, 0.033333],
    [0.393333, 0.033333, 0.573333],
]


def biased_three_cycle(p: float = 0.7, q: float = 0.2, s: float = 0.1) -> Kernel:
    """``P(i, i) = s``, ``P(i, i+1) = p``, ``P(i, i-1) = q`` on Z/3."""
    m = np.zeros((3, 3))
    for i in range(3):
        m[i, i] = s
        m[i, (i + 1) % 3] = p
        m[i, (i - 1) % 3] = q
    return validate_kernel(m)


def protocol_kernels() -> tuple[Kernel, Kernel]:
    return validate_kernel(K0_ROWS), validate_kernel(K1_ROWS)


def third_protocol_kernel() -> Kernel:
    return validate_kernel(K2_ROWS)


def unbiased_phase_kernel(m: int = 2) -> Kernel:
    """Uniform jump among ``m`` phases; reversible for the uniform law."""
    return validate_kernel(np.full((m, m), 1.0 / m))


def biased_phase_cycle(p: float = 0.7, q: float = 0.2, s: float = 0.1) -> Kernel:
    return biased_three_cycle(p, q, s)


def flip_kernel() -> Kernel:
    return validate_kernel([[0.0, 1.0], [1.0, 0.0]])


def two_state(p01: float, p10: float) -> Kernel:
    return validate_kernel([[1 - p01, p01], [p10, 1 - p10]])


def two_block_chain(leak: float, block_size: int = 2) -> Kernel:
    """Two equal blocks; uniform mixing inside, ``leak`` spread over the other block."""
    n = 2 * block_size
    m = np.zeros((n, n))
    for z in range(n):
        own = z // block_size
        for w in range(n):
            same = (w // block_size) == own
            m[z, w] = ((1 - leak) if same else leak) / block_size
    return validate_kernel(m)


def no_return_chain(leak: float, block_size: int = 2) -> Kernel:
    """Like :func:`two_block_chain` but the second block is absorbing."""
    n = 2 * block_size
    m = np.zeros((n, n))
    for z in range(n):
        for w in range(n):
            if z < block_size:
                m[z, w] = ((1 - leak) if w < block_size else leak) / block_size
            else:
                m[z, w] = (1.0 / block_size) if w >= block_size else 0.0
    return validate_kernel(m)


def pair_lenses(block_size: int = 2) -> tuple[Lens, Lens]:
    """(single block, the two-block split) on ``2 * block_size`` states."""
    n = 2 * block_size
    return Lens.single_block(n), Lens(tuple(z // block_size for z in range(n)), ("A", "B"))


# Refinement fixtures: (kernel, tau, epsilon)
REVEALS = {"leak": 0.001, "tau": 1, "epsilon": 0.05}
DESTROYS = {"leak": 0.4, "tau": 2, "epsilon": 0.05}

# P1 rewrite fixtures on random walks over graphs: (n, before_edges, after_edges)
TWO_TRIANGLES_ONE_BRIDGE = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (0, 3)]
P1_ADD_BRIDGE = (6, TWO_TRIANGLES_ONE_BRIDGE, TWO_TRIANGLES_ONE_BRIDGE + [(2, 5)])
_K4 = list(itertools.combinations(range(4), 2))
P1_DROP_K4_EDGE = (4, _K4, [e for e in _K4 if e != (0, 1)])


def two_triangles(bridge_weight: float = 1e-3) -> Kernel:
    """Two triangles joined by one weak edge."""
    edges = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)]
    return graph_walk_kernel(6, edges, [1, 1, 1, 1, 1, 1, bridge_weight])


def complete_walk(n: int) -> Kernel:
    return graph_walk_kernel(n, list(itertools.combinations(range(n), 2)))
