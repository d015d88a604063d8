import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import rng, seeds
from emcalc.capacity_zeno import (
    AtomSpec,
    CapacitySchedule,
    ConvolutionBridge,
    PortSignal,
    ScheduleTerm,
    apply_bridge,
    atom_bridge,
    coercivity_check,
    composition_perturbation,
    discretization_factor,
    ect_capacity_curve,
    icap_audit,
    idempotence_factorization,
    kernel_mass,
    latency_bounds,
    no_zeno_decision,
    opnorm,
    parallel_capacity,
    parallel_sum,
    positive_work,
    route_mismatch_audit,
    shrinkage_check,
)
from emcalc.errors import BadWindow, DimensionMismatch, ShapeMismatch


def geometric_bridge(c, r, L):
    return ConvolutionBridge(c * r ** np.arange(L + 1))


def random_bridge(seed):
    g = rng(seed)
    d, L = int(g.integers(1, 4)), int(g.integers(0, 6))
    return ConvolutionBridge(g.normal(size=(L + 1, d, d))), g


class TestBridge:
    def test_identity(self):
        u = rng(0).normal(size=(6, 2))
        y = apply_bridge(ConvolutionBridge(np.eye(2)[None]), u, (1, 4)).samples
        assert np.array_equal(y, u[1:5])

    def test_delay(self):
        u = np.arange(1.0, 7.0)
        y = apply_bridge(ConvolutionBridge(np.array([0.0, 1.0])), u, (2, 5)).samples.ravel()
        assert np.array_equal(y, [0.0, 3.0, 4.0, 5.0])

    def test_geometric_step_response(self):
        c, r = 1.5, 0.6
        Z = geometric_bridge(c, r, 40)
        y = apply_bridge(Z, np.ones(20), (3, 19)).samples.ravel()
        k = np.arange(y.size)
        assert np.allclose(y, c * (1 - r ** (k + 1)) / (1 - r), atol=1e-12)

    def test_errors(self):
        Z = ConvolutionBridge(np.eye(2)[None])
        with pytest.raises(DimensionMismatch):
            apply_bridge(Z, np.ones((4, 3)))
        with pytest.raises(BadWindow):
            apply_bridge(Z, np.ones((4, 2)), (2, 4))
        with pytest.raises(BadWindow):
            apply_bridge(Z, np.ones((4, 2)), (3, 1))
        with pytest.raises(DimensionMismatch):
            ConvolutionBridge(np.ones((2, 2, 3)))

    def test_causal(self):
        Z, g = random_bridge(3)
        u = g.normal(size=(10, Z.port_dim))
        v = u.copy()
        v[6:] = 0
        assert np.allclose(apply_bridge(Z, u).samples[:6], apply_bridge(Z, v).samples[:6])


class TestWork:
    def test_examples(self):
        u = rng(1).normal(size=(5, 2))
        assert positive_work(u, u) == pytest.approx(float(np.sum(u ** 2)))
        assert positive_work(u, -u) == 0.0
        assert positive_work([1, 1], [2, -3]) == 2.0

    def test_additive_over_windows(self):
        g = rng(2)
        u, y = g.normal(size=(9, 2)), g.normal(size=(9, 2))
        whole = positive_work(u, y)
        assert whole == pytest.approx(positive_work(u, y, (0, 3)) + positive_work(u, y, (4, 8)))

    def test_shape(self):
        with pytest.raises(ShapeMismatch):
            positive_work(np.ones((3, 1)), np.ones((4, 1)))


class TestMass:
    def test_examples(self):
        assert kernel_mass(ConvolutionBridge(np.eye(2)[None])) == pytest.approx(1.0)
        c, r, L = 2.0, 0.5, 7
        assert kernel_mass(geometric_bridge(c, r, L)) == pytest.approx(c * (1 - r ** (L + 1)) / (1 - r))

    def test_opnorm_oracle(self):
        for seed in range(20):
            A = rng(seed).normal(size=(3, 5))
            assert opnorm(A) == pytest.approx(np.linalg.norm(A, 2), rel=1e-12)

    @pytest.mark.parametrize("lam", [0.05, 0.2, 1.0, 3.0])
    def test_balanced_atom(self, lam):
        Lambda0 = 0.7
        atom = AtomSpec(norm_C=0.5, norm_B=Lambda0 * lam / 0.5, decay_rate=lam)
        assert atom.is_balanced(Lambda0)
        M = kernel_mass(atom_bridge(atom, 4000))
        assert M <= Lambda0 * discretization_factor(lam) + 1e-12

    def test_discretization_factor_refines_to_one(self):
        factors = [discretization_factor(1.0, dt) for dt in (1.0, 0.1, 0.01, 0.001)]
        assert all(a > b for a, b in zip(factors, factors[1:]))
        assert factors[-1] - 1 < 1e-3
        atom = AtomSpec(1.0, 1.0, 1.0)
        for dt in (0.1, 0.01):
            M = kernel_mass(atom_bridge(atom, int(40 / dt), dt))
            assert atom.continuous_mass <= M <= atom.continuous_mass * discretization_factor(1.0, dt) + 1e-9


class TestICAP:
    def test_identity_equality(self):
        u = rng(4).normal(size=(8, 2))
        r = icap_audit(ConvolutionBridge(np.eye(2)[None]), [u])
        assert r["max_ratio"] == pytest.approx(1.0) and r["pass"]

    def test_delay_cauchy_schwarz(self):
        Z = ConvolutionBridge(np.array([0.0, 1.0]))
        H = 12
        signals = [np.ones(H), np.arange(H, dtype=float), (-1.0) ** np.arange(H)]
        windows = [(s, t) for s in range(H) for t in range(s, H)]
        r = icap_audit(Z, signals, windows)
        assert r["max_ratio"] <= 1.0 + 1e-12 and r["pass"]

    def test_zero_signal(self):
        r = icap_audit(ConvolutionBridge(np.eye(1)[None]), [np.zeros(4)])
        assert r["max_ratio"] == 0.0

    def test_fuzz(self):
        for seed in range(50):
            Z, g = random_bridge(seed)
            H = int(g.integers(3, 15))
            batch = [g.normal(size=(H, Z.port_dim)) for _ in range(20)]
            windows = [(0, H - 1), (H // 2, H - 1), (0, H // 2)]
            assert icap_audit(Z, batch, windows)["pass"]


class TestParallel:
    def test_examples(self):
        I = ConvolutionBridge(np.eye(2)[None])
        assert parallel_capacity([I, I]) == pytest.approx(2.0)
        atoms = [ConvolutionBridge(np.array([0.3])) for _ in range(5)]
        assert parallel_capacity(atoms) == pytest.approx(1.5)

    def test_mixed_batch(self):
        g = rng(8)
        parts = [ConvolutionBridge(g.normal(size=(int(g.integers(1, 5)), 2, 2))) for _ in range(4)]
        total = parallel_sum(parts)
        cap = parallel_capacity(parts)
        assert kernel_mass(total) <= cap + 1e-12
        batch = [g.normal(size=(10, 2)) for _ in range(10)]
        r = icap_audit(total, batch)
        assert r["max_ratio"] <= cap + 1e-10

    def test_dimension(self):
        with pytest.raises(DimensionMismatch):
            parallel_capacity([ConvolutionBridge(np.eye(2)[None]), ConvolutionBridge(np.eye(3)[None])])


class TestECT:
    def test_harmonic(self):
        r = ect_capacity_curve(1.0, 1.0, 3)
        assert r["cap"] == [1.0, 2.0, 3.0, 4.0]
        assert r["partial_sums"][-1] == pytest.approx(1 + 1 / 2 + 1 / 3 + 1 / 4)
        assert r["verdict"] == "diverges"

    def test_scaling(self):
        a, b = ect_capacity_curve(1, 1, 50), ect_capacity_curve(2, 3, 50)
        assert np.allclose(np.array(a["partial_sums"]) / 6, b["partial_sums"])
        assert b["verdict"] == "diverges"

    def test_mode_counts_feed_parallel_capacity(self):
        Lambda0, C0 = 0.5, 2.0
        r = ect_capacity_curve(Lambda0, C0, 6)
        for j, m in enumerate(r["mode_counts"]):
            atoms = [ConvolutionBridge(np.array([Lambda0]))] * m
            assert m == math.ceil(C0 * (j + 1))
            assert parallel_capacity(atoms) == pytest.approx(m * Lambda0)
            assert parallel_capacity(atoms) <= r["cap"][j] + 1e-12

    def test_harmonic_witness(self):
        partial = np.cumsum(1.0 / np.arange(1, 10 ** 6 + 1))
        J = np.arange(10 ** 6)
        assert np.all(partial >= np.log(J + 2) - 1)


def poly(c, e):
    return ScheduleTerm("poly", c, e)


class TestSchedules:
    def test_unit_latency(self):
        lat = latency_bounds(CapacitySchedule(1.0, ScheduleTerm.const(1.0), ScheduleTerm.const(1.0), 10))
        assert lat["dt"] == [1.0] * 10 and lat["t_J"] == 10.0

    def test_doubling_latency(self):
        s = CapacitySchedule(1.0, ScheduleTerm("geom", 1.0, ratio=2.0), ScheduleTerm.const(1.0), 60)
        lat = latency_bounds(s)
        assert lat["dt"][:4] == [1.0, 0.5, 0.25, 0.125]
        assert abs(lat["t_J"] - 2.0) <= 1e-9
        assert no_zeno_decision(s)["verdict"] == "converges"

    def test_vanishing_work(self):
        s = CapacitySchedule(ScheduleTerm("geom", 1.0, ratio=0.5), ScheduleTerm.const(1.0),
                             ScheduleTerm.const(1.0), 60)
        lat = latency_bounds(s)
        assert lat["work_fails"] and abs(lat["t_J"] - 2.0) <= 1e-9
        assert not no_zeno_decision(s)["no_zeno_certified"]

    @pytest.mark.parametrize("a,b,verdict", [
        (1.0, 0.0, "diverges"), (0.5, 0.5, "diverges"), (0.0, 0.0, "diverges"),
        (0.7, 0.5, "converges"), (2.0, 0.0, "converges")])
    def test_poly(self, a, b, verdict):
        d = no_zeno_decision(CapacitySchedule(1.0, poly(1.0, a), poly(1.0, b), 100))
        assert d["verdict"] == verdict and d["basis"] == "closed_form"
        assert d["alpha_plus_beta"] == pytest.approx(a + b)

    def test_geometric_shrinking_capacity_diverges(self):
        s = CapacitySchedule(1.0, ScheduleTerm("geom", 1.0, ratio=0.9), poly(1.0, 3.0), 50)
        assert no_zeno_decision(s)["verdict"] == "diverges"

    def test_table_undetermined(self):
        s = CapacitySchedule(1.0, ScheduleTerm("table", values=(1, 3, 2, 5, 4)), ScheduleTerm.const(1.0))
        d = no_zeno_decision(s)
        assert d["verdict"] == "undetermined" and d["basis"] == "partial_sum"
        assert d["partial_sum"] == pytest.approx(1 + 1 / 3 + 1 / 2 + 1 / 5 + 1 / 4)
        assert s.j_max == 5

    def test_table_recognized(self):
        s = CapacitySchedule(1.0, ScheduleTerm("table", values=tuple(float(j + 1) for j in range(30))),
                             ScheduleTerm.const(1.0))
        d = no_zeno_decision(s)
        assert d["verdict"] == "diverges" and d["basis"] == "recognized_closed_form"

    def test_invalid(self):
        with pytest.raises(ValueError):
            ScheduleTerm("poly", -1.0)
        with pytest.raises(ValueError):
            ScheduleTerm("table", values=(1.0, 0.0))
        with pytest.raises(ValueError):
            CapacitySchedule(0.0, poly(1, 0), poly(1, 0))


class TestRoute:
    def test_exact_factorization(self):
        g = rng(5)
        s1, s2 = g.normal(size=(3, 4)), g.normal(size=(4, 2))
        r = route_mismatch_audit(s1 @ s2, s1, s2)
        assert r["rm"] <= 1e-12
        assert r["gain_bound"] == pytest.approx(opnorm(s1) * opnorm(s2) + r["rm"])

    def test_known_defect(self):
        g = rng(6)
        s1, s2 = g.normal(size=(3, 3)), g.normal(size=(3, 3))
        E = np.zeros((3, 3))
        E[0, 0] = 0.1
        assert route_mismatch_audit(s1 @ s2 + E, s1, s2)["rm"] == pytest.approx(0.1, abs=1e-12)

    def test_fuzz(self):
        for seed in range(100):
            g = rng(seed)
            a, b, c = (int(x) for x in g.integers(1, 6, 3))
            s1, s2 = g.normal(size=(a, b)), g.normal(size=(b, c))
            assert route_mismatch_audit(g.normal(size=(a, c)), s1, s2)["pass"]

    def test_shape(self):
        with pytest.raises(ShapeMismatch):
            route_mismatch_audit(np.eye(2), np.eye(2), np.eye(3))


class TestPropagationRules:
    @given(seeds, st.integers(1, 6))
    def test_composition(self, seed, n):
        g = rng(seed)
        A, B, A2, B2 = g.normal(size=(4, n, n))
        lhs, rhs = composition_perturbation(A, B, A2, B2)
        assert lhs <= rhs + 1e-10

    @given(seeds, st.integers(1, 6))
    def test_idempotence(self, seed, n):
        lhs, rhs = idempotence_factorization(rng(seed).normal(size=(n, n)))
        assert lhs <= rhs + 1e-10

    def test_projection_is_exact(self):
        P = np.diag([1.0, 1.0, 0.0])
        assert idempotence_factorization(P)[0] == 0.0


class TestCheckers:
    def test_coercivity(self):
        u = rng(9).normal(size=(6, 2))
        G = np.diag([1.0, 0.5])
        assert coercivity_check(u, u @ G.T, G)["pass"]
        assert not coercivity_check(u, np.zeros_like(u), np.eye(2))["pass"]

    def test_shrinkage(self):
        u = rng(10).normal(size=(6, 2))
        assert shrinkage_check(u, np.eye(2), 1.0)["pass"]
        assert not shrinkage_check(u, np.diag([1.0, 0.0]), 1.0)["pass"] or np.all(u[:, 1] == 0)


def test_port_signal_shapes():
    assert PortSignal(np.ones(4)).samples.shape == (4, 1)
    with pytest.raises(ShapeMismatch):
        PortSignal(np.ones((2, 2, 2)))
