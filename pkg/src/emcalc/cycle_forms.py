"""Support graphs, the log-ratio 1-form, cycle bases and affinities.

Conventions:

* self-loops never enter the edge set;
* spanning forests grow from the lowest-index vertex of each component and
  visit neighbours in increasing order;
* a fundamental cycle is oriented chord-first: for chord ``(u, v)`` with
  ``u < v`` it reads ``u -> v -> (tree path) -> u``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import EdgeMissing, NotReversible, RevViolation, RowStarved
from .kernel_core import DEFAULT_TOL, Dist, Kernel, check_detailed_balance

__all__ = [
    "SupportGraph",
    "OneForm",
    "CycleBasis",
    "support_graph",
    "one_form",
    "cycle_basis",
    "affinities",
    "exactness",
    "cycle_rank",
    "gate_edges",
    "spectral_gap",
    "graph_walk_kernel",
]


@dataclass(frozen=True)
class SupportGraph:
    n: int
    undirected_edges: tuple  # sorted (i, j) with i < j, both directions positive
    directed_support: frozenset  # ordered (i, j), i != j, P_ij > 0
    components: tuple  # component label per vertex, labels in order of first vertex
    rev_ok: bool
    violations: tuple = ()  # (i, j) with P_ij > 0 but P_ji == 0

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "SupportGraph":
        """Undirected graph view, for topology-only computations."""
        und = tuple(sorted({(min(i, j), max(i, j)) for i, j in edges if i != j}))
        directed = frozenset(und) | frozenset((j, i) for i, j in und)
        return cls(n, und, directed, _components(n, und), True, ())

    @property
    def n_components(self) -> int:
        return len(set(self.components))

    def adjacency(self) -> list[list[int]]:
        adj = [[] for _ in range(self.n)]
        for i, j in self.undirected_edges:
            adj[i].append(j)
            adj[j].append(i)
        for a in adj:
            a.sort()
        return adj


def _components(n: int, edges) -> tuple:
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    roots, labels = {}, []
    for v in range(n):
        labels.append(roots.setdefault(find(v), len(roots)))
    return tuple(labels)


def support_graph(P: Kernel | np.ndarray, zero_tol: float = DEFAULT_TOL.zero_tol) -> SupportGraph:
    m = np.asarray(P, dtype=float)
    n = m.shape[0]
    pos = m > zero_tol
    directed = frozenset((int(i), int(j)) for i, j in np.argwhere(pos) if i != j)
    und = tuple(sorted((i, j) for i, j in directed if i < j and (j, i) in directed))
    violations = tuple(sorted((i, j) for i, j in directed if (j, i) not in directed))
    return SupportGraph(n, und, directed, _components(n, und), not violations, violations)


@dataclass(frozen=True)
class OneForm:
    """Antisymmetric edge function; stores ``a(i, j)`` for ``i < j`` only."""

    values: dict

    def __call__(self, i: int, j: int) -> float:
        if i < j:
            key, sign = (i, j), 1.0
        else:
            key, sign = (j, i), -1.0
        try:
            return sign * self.values[key]
        except KeyError:
            raise EdgeMissing(f"edge {{{i}, {j}}} not in the form's support") from None

    @property
    def edges(self) -> tuple:
        return tuple(sorted(self.values))


def one_form(P: Kernel | np.ndarray, graph: SupportGraph) -> OneForm:
    if not graph.rev_ok:
        raise RevViolation(f"one-way transitions {list(graph.violations)}")
    m = np.asarray(P, dtype=float)
    return OneForm({(i, j): math.log(m[i, j] / m[j, i]) for i, j in graph.undirected_edges})


@dataclass(frozen=True)
class CycleBasis:
    parent: tuple  # parent vertex in the spanning forest, -1 at roots
    roots: tuple
    chords: tuple
    cycles: tuple  # closed vertex sequences, one per chord

    def __len__(self):
        return len(self.cycles)


def _forest(graph: SupportGraph, method: str):
    adj = graph.adjacency()
    parent = [-2] * graph.n
    roots = []
    tree = set()
    for r in range(graph.n):
        if parent[r] != -2:
            continue
        parent[r] = -1
        roots.append(r)
        if method == "bfs":
            queue = deque([r])
            while queue:
                v = queue.popleft()
                for w in adj[v]:
                    if parent[w] == -2:
                        parent[w] = v
                        tree.add((min(v, w), max(v, w)))
                        queue.append(w)
        elif method == "dfs":
            stack = [r]
            while stack:
                v = stack[-1]
                for w in adj[v]:
                    if parent[w] == -2:
                        parent[w] = v
                        tree.add((min(v, w), max(v, w)))
                        stack.append(w)
                        break
                else:
                    stack.pop()
        else:
            raise ValueError(f"unknown forest method {method!r}")
    return parent, roots, tree


def _path_to_root(parent, v):
    path = [v]
    while parent[path[-1]] != -1:
        path.append(parent[path[-1]])
    return path


def cycle_basis(graph: SupportGraph, method: str = "bfs") -> CycleBasis:
    """Fundamental cycle basis from a BFS (default) or DFS spanning forest."""
    parent, roots, tree = _forest(graph, method)
    chords = tuple(e for e in graph.undirected_edges if e not in tree)
    cycles = []
    for u, v in chords:
        up_u = _path_to_root(parent, u)
        up_v = _path_to_root(parent, v)
        on_u = set(up_u)
        lca = next(w for w in up_v if w in on_u)
        v_to_lca = up_v[: up_v.index(lca) + 1]
        # ends at u unless lca == u, in which case v_to_lca already does
        lca_to_u = list(reversed(up_u[: up_u.index(lca)]))
        cycles.append(tuple([u] + v_to_lca + lca_to_u))
    return CycleBasis(tuple(parent), tuple(roots), chords, tuple(cycles))


def cycle_integral(a: OneForm, cycle) -> float:
    return math.fsum(a(cycle[k], cycle[k + 1]) for k in range(len(cycle) - 1))


def affinities(a: OneForm, basis: CycleBasis) -> np.ndarray:
    return np.array([cycle_integral(a, c) for c in basis.cycles], dtype=float)


def exactness(a: OneForm, basis: CycleBasis, tol: float = 1e-10) -> dict:
    """Decide exactness from basis affinities and rebuild the potential.

    The potential integrates ``a`` along forest paths from each root (where it
    is 0). ``max_residual`` is ``max |a(i, j) - (phi_j - phi_i)|`` over all
    edges; it is reported whether or not the form is exact.
    """
    A = affinities(a, basis)
    n = len(basis.parent)
    phi = [0.0] * n
    # parents precede children along each root path, so resolve by depth
    depth = [len(_path_to_root(basis.parent, v)) for v in range(n)]
    for v in sorted(range(n), key=lambda v: (depth[v], v)):
        p = basis.parent[v]
        if p >= 0:
            phi[v] = phi[p] + a(p, v)
    residual = max((abs(a(i, j) - (phi[j] - phi[i])) for i, j in a.edges), default=0.0)
    exact = bool(np.all(np.abs(A) <= tol))
    return {"exact": exact, "potential": phi if exact else None,
            "max_residual": float(residual), "affinities": A}


def cycle_rank(graph: SupportGraph) -> int:
    return len(graph.undirected_edges) - graph.n + graph.n_components


def gate_edges(P: Kernel, delete: Iterable[tuple[int, int]]) -> Kernel:
    """Zero both orientations of each listed pair and renormalize rows."""
    m = np.array(P.rows, dtype=float)
    for i, j in delete:
        m[i, j] = 0.0
        m[j, i] = 0.0
    sums = m.sum(axis=1)
    starved = np.flatnonzero(sums <= 0)
    if starved.size:
        raise RowStarved(f"row {int(starved[0])} would have no remaining mass")
    out = Kernel(m / sums[:, None], P.states)
    before, after = cycle_rank(support_graph(P)), cycle_rank(support_graph(out))
    assert after <= before, f"cycle rank grew under gating: {before} -> {after}"
    return out


def spectral_gap(P: Kernel, pi: Dist, tol: float = 1e-10) -> float:
    """``1 - lambda_2`` of the lazy walk ``(I + P) / 2`` for reversible ``P``."""
    db = check_detailed_balance(P, pi, tol)
    if not db.holds:
        raise NotReversible(f"detailed balance violated by {db.violation:.3e}")
    if np.any(pi.weights <= 0):
        raise NotReversible("stationary distribution must have full support")
    lazy = 0.5 * (np.eye(P.dim) + P.rows)
    d = np.sqrt(pi.weights)
    s = d[:, None] * lazy / d[None, :]
    defect = float(np.max(np.abs(s - s.T)))
    if defect > tol:
        raise NotReversible(f"symmetrized kernel is asymmetric by {defect:.3e}")
    eig = np.linalg.eigvalsh(0.5 * (s + s.T))
    if P.dim == 1:
        return 1.0
    return float(min(max(1.0 - eig[-2], 0.0), 1.0))


def graph_walk_kernel(n: int, edges, weights=None) -> Kernel:
    """Random walk on a weighted undirected graph: ``P_ij = w_ij / sum_k w_ik``.

    Reversible with respect to the normalized weighted degrees.
    """
    w = np.zeros((n, n))
    for k, (i, j) in enumerate(edges):
        x = 1.0 if weights is None else float(weights[k])
        w[i, j] += x
        w[j, i] += x
    deg = w.sum(axis=1)
    if np.any(deg == 0):
        raise RowStarved("isolated vertex has no outgoing mass")
    return Kernel(w / deg[:, None])
