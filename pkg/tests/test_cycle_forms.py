import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_kernel, random_reversible, rng, seeds
from emcalc import fixtures as fx
from emcalc.cycle_forms import (
    SupportGraph,
    affinities,
    cycle_basis,
    cycle_integral,
    cycle_rank,
    exactness,
    gate_edges,
    graph_walk_kernel,
    one_form,
    spectral_gap,
    support_graph,
)
from emcalc.errors import EdgeMissing, NotReversible, RevViolation, RowStarved
from emcalc.kernel_core import Dist, check_detailed_balance, stationary, validate_kernel

LN35 = math.log(3.5)


def basis_of(P, method="bfs"):
    g = support_graph(P)
    return g, one_form(P, g), cycle_basis(g, method)


class TestSupport:
    def test_flip(self):
        g = support_graph(fx.flip_kernel())
        assert g.undirected_edges == ((0, 1),) and g.rev_ok

    def test_biased_cycle(self):
        g = support_graph(fx.biased_three_cycle())
        assert g.undirected_edges == ((0, 1), (0, 2), (1, 2)) and g.rev_ok

    def test_one_way(self):
        g = support_graph(validate_kernel([[0.5, 0.5], [0.0, 1.0]]))
        assert not g.rev_ok and g.violations == ((0, 1),)
        with pytest.raises(RevViolation):
            one_form(validate_kernel([[0.5, 0.5], [0.0, 1.0]]), g)


class TestOneForm:
    def test_symmetric_zero(self):
        _, a, _ = basis_of(fx.complete_walk(4))
        assert all(a(i, j) == 0.0 for i, j in a.edges)

    def test_biased_cycle_values(self):
        _, a, _ = basis_of(fx.biased_three_cycle())
        for i in range(3):
            assert a(i, (i + 1) % 3) == pytest.approx(LN35, abs=1e-15)
            assert a((i + 1) % 3, i) == -a(i, (i + 1) % 3)

    def test_missing_edge(self):
        _, a, _ = basis_of(fx.flip_kernel())
        with pytest.raises(EdgeMissing):
            a(0, 0)

    @given(seeds, st.integers(2, 6))
    def test_log_pi_potential(self, seed, n):
        P = random_reversible(seed, n)
        pi = stationary(P).weights
        _, a, _ = basis_of(P)
        for i, j in a.edges:
            assert abs(a(i, j) - (math.log(pi[j]) - math.log(pi[i]))) <= 1e-9


class TestBasis:
    def test_tree(self):
        g = SupportGraph.from_edges(4, [(0, 1), (1, 2), (1, 3)])
        assert len(cycle_basis(g)) == 0 and cycle_rank(g) == 0

    def test_triangle(self):
        g = SupportGraph.from_edges(3, [(0, 1), (1, 2), (0, 2)])
        b = cycle_basis(g)
        assert len(b) == 1 and len(b.cycles[0]) == 4 and b.cycles[0][0] == b.cycles[0][-1]

    def test_two_triangles(self):
        g = SupportGraph.from_edges(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)])
        assert len(cycle_basis(g)) == 2 == cycle_rank(g)
        assert cycle_basis(g).roots == (0, 3)

    def test_counts_match_rank(self):
        for n in range(2, 7):
            edges = list(itertools.combinations(range(n), 2))
            g = SupportGraph.from_edges(n, edges)
            for method in ("bfs", "dfs"):
                b = cycle_basis(g, method)
                assert len(b) == cycle_rank(g) == len(edges) - n + 1
                for c in b.cycles:
                    assert c[0] == c[-1]
                    assert all((min(u, v), max(u, v)) in g.undirected_edges for u, v in zip(c, c[1:]))

    def test_deterministic(self):
        g = SupportGraph.from_edges(5, list(itertools.combinations(range(5), 2)))
        assert cycle_basis(g).cycles == cycle_basis(g).cycles


class TestAffinity:
    def test_reference_value(self):
        _, a, b = basis_of(fx.biased_three_cycle())
        A = affinities(a, b)
        assert len(A) == 1
        assert abs(A[0] - 3 * LN35) <= 1e-12 and abs(A[0] - 3.7583) <= 1e-4

    def test_reversed_orientation(self):
        _, a, b = basis_of(fx.biased_three_cycle())
        assert cycle_integral(a, b.cycles[0][::-1]) == pytest.approx(-3 * LN35, abs=1e-12)

    def test_exact_form_zero(self):
        _, a, b = basis_of(random_reversible(4, 5))
        assert np.all(np.abs(affinities(a, b)) <= 1e-12)


class TestExactness:
    def test_symmetric(self):
        _, a, b = basis_of(fx.complete_walk(4))
        ex = exactness(a, b)
        assert ex["exact"] and ex["potential"] == [0.0] * 4 and ex["max_residual"] == 0.0

    def test_biased_cycle(self):
        _, a, b = basis_of(fx.biased_three_cycle())
        ex = exactness(a, b)
        assert not ex["exact"] and ex["potential"] is None
        # tree-path potential absorbs the two tree edges, the chord carries the full affinity
        assert ex["max_residual"] == pytest.approx(3 * LN35, abs=1e-12)

    @given(seeds, st.integers(2, 7))
    def test_null_regime(self, seed, n):
        P = random_reversible(seed, n)
        _, a, b = basis_of(P)
        ex = exactness(a, b)
        assert ex["exact"] and ex["max_residual"] <= 1e-10
        w = np.exp(np.array(ex["potential"]))
        assert check_detailed_balance(P, Dist(w / w.sum()), 1e-10).holds

    @given(seeds, st.integers(3, 6))
    def test_basis_independence(self, seed, n):
        for P in (random_kernel(seed, n), random_reversible(seed, n)):
            g = support_graph(P)
            a = one_form(P, g)
            verdicts = {exactness(a, cycle_basis(g, m))["exact"] for m in ("bfs", "dfs")}
            assert len(verdicts) == 1

    @given(seeds, st.integers(3, 6))
    def test_non_exact_has_big_affinity(self, seed, n):
        _, a, b = basis_of(random_kernel(seed, n))
        ex = exactness(a, b)
        if not ex["exact"]:
            assert np.max(np.abs(ex["affinities"])) > 1e-10


class TestRankAndGating:
    def test_rank_examples(self):
        assert cycle_rank(SupportGraph.from_edges(3, [(0, 1), (1, 2), (0, 2)])) == 1
        assert cycle_rank(SupportGraph.from_edges(4, itertools.combinations(range(4), 2))) == 3
        assert cycle_rank(SupportGraph.from_edges(5, [])) == 0

    def test_delete_nothing(self):
        P = fx.complete_walk(4)
        assert np.array_equal(gate_edges(P, []).rows, P.rows)

    def test_triangle_minus_edge(self):
        P = fx.complete_walk(3)
        G = gate_edges(P, [(0, 1)])
        assert cycle_rank(support_graph(P)) == 1 and cycle_rank(support_graph(G)) == 0

    def test_k4_minus_matching(self):
        G = gate_edges(fx.complete_walk(4), [(0, 1), (2, 3)])
        assert cycle_rank(support_graph(G)) == 1

    def test_row_starved(self):
        with pytest.raises(RowStarved):
            gate_edges(fx.flip_kernel(), [(0, 1)])

    def test_monotone_fuzz(self):
        for seed in range(200):
            g = rng(seed)
            n = int(g.integers(3, 8))
            P = random_reversible(seed, n)
            edges = list(itertools.combinations(range(n), 2))
            k = int(g.integers(1, len(edges)))
            delete = [edges[i] for i in g.choice(len(edges), k, replace=False)]
            try:
                G = gate_edges(P, delete)
            except RowStarved:
                continue
            assert cycle_rank(support_graph(G)) <= cycle_rank(support_graph(P))


class TestGap:
    def test_two_state(self):
        for p in (0.1, 0.3, 0.5):
            P = fx.two_state(p, p)
            assert spectral_gap(P, stationary(P)) == pytest.approx(p, abs=1e-12)

    def test_two_triangles_bottleneck(self):
        P = fx.two_triangles(1e-3)
        assert spectral_gap(P, stationary(P)) < 1e-2

    def test_complete(self):
        P = fx.complete_walk(4)
        assert spectral_gap(P, stationary(P)) > 0.4

    def test_not_reversible(self):
        P = fx.biased_three_cycle()
        with pytest.raises(NotReversible):
            spectral_gap(P, stationary(P))

    def test_p1_rewrites(self):
        moves = []
        for n, before, after in (fx.P1_ADD_BRIDGE, fx.P1_DROP_K4_EDGE):
            Pb, Pa = graph_walk_kernel(n, before), graph_walk_kernel(n, after)
            rb, ra = cycle_rank(support_graph(Pb)), cycle_rank(support_graph(Pa))
            assert abs(ra - rb) == 1
            moves.append(spectral_gap(Pa, stationary(Pa)) - spectral_gap(Pb, stationary(Pb)))
        assert max(moves) > 0 > min(moves)

    @given(seeds, st.integers(2, 6))
    def test_gap_matches_dense_eigs(self, seed, n):
        P = random_reversible(seed, n)
        pi = stationary(P)
        lazy = 0.5 * (np.eye(n) + P.rows)
        ev = np.sort(np.real(np.linalg.eigvals(lazy)))
        assert spectral_gap(P, pi) == pytest.approx(1 - ev[-2], abs=1e-9)
