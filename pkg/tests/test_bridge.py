import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qsptensor import bridge, process_tensor as pt
from qsptensor.instruments import QuantumOperation
from qsptensor.linalg import I2, DimensionError, partial_trace, spectral
from qsptensor.qsp import EvolutionFamily, correlation_kernel, pyramidal_probability, sequential_probability
from qsptensor.sampling import ginibre, random_density, random_hermitian

seeds = st.integers(0, 2**32 - 1)


class TestPolarize:
    def test_coefficients(self):
        terms = bridge.polarize(I2, I2)
        assert [c for c, _ in terms] == pytest.approx([0.25, -0.25j, -0.25, 0.25j])

    def test_identity_pair(self, rng):
        z = ginibre(3, rng)
        np.testing.assert_allclose(bridge.recombine(bridge.polarize(np.eye(3), np.eye(3)), z), z, atol=1e-14)

    def test_annihilation(self, rng):
        x, z = ginibre(3, rng), ginibre(3, rng)
        np.testing.assert_allclose(bridge.recombine(bridge.polarize(x, np.zeros((3, 3))), z), 0, atol=1e-13)

    def test_same_operator(self, rng):
        x, z = ginibre(2, rng), ginibre(2, rng)
        np.testing.assert_allclose(bridge.recombine(bridge.polarize(x, x), z), x.conj().T @ z @ x, atol=1e-13)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            bridge.polarize(np.eye(2), np.eye(3))

    @given(seeds, st.integers(1, 8))
    def test_exact(self, seed, d):
        rng = np.random.default_rng(seed)
        x, y, z = ginibre(d, rng), ginibre(d, rng), ginibre(d, rng)
        np.testing.assert_allclose(bridge.recombine(bridge.polarize(x, y), z), x.conj().T @ z @ y, atol=1e-12)


class TestKernelDecompose:
    def test_term_counts(self, rng):
        a = [ginibre(2, rng) for _ in range(3)]
        b = [ginibre(2, rng) for _ in range(3)]
        assert len(bridge.kernel_decompose(a, b)) == 64
        assert len(bridge.kernel_decompose(a, a)) == 64
        assert len(bridge.kernel_decompose(a, a, simplify=True)) == 1
        mixed = [a[0], b[1], a[2]]
        assert len(bridge.kernel_decompose(a, mixed, simplify=True)) == 4

    def test_length_mismatch(self, rng):
        with pytest.raises(ValueError):
            bridge.kernel_decompose([I2], [I2, I2])

    @pytest.mark.parametrize("n", [1, 2])
    def test_identity_against_kernel(self, n):
        rng = np.random.default_rng(n)
        for _ in range(10):
            dil = bridge.random_dilation(2, 1, rng)
            times = bridge.random_times(n, rng)
            a = [ginibre(2, rng) for _ in range(n)]
            b = [ginibre(2, rng) for _ in range(n)]
            target = correlation_kernel(dil.evolution, dil.rho_se, times, a, b)
            for simplify in (False, True):
                dec = bridge.kernel_decompose(a, b, simplify=simplify)
                value = dec.evaluate(lambda r: correlation_kernel(dil.evolution, dil.rho_se, times, r, r))
                assert abs(value - target) <= 1e-9 * max(1.0, abs(target))

    def test_diagonal_full_expansion(self, rng):
        dil = bridge.random_dilation(2, 2, rng)
        times = bridge.random_times(2, rng)
        a = [dil.ampliate(ginibre(2, rng)) for _ in range(2)]
        full = bridge.kernel_decompose(a, a)
        value = full.evaluate(lambda r: correlation_kernel(dil.evolution, dil.rho_se, times, r, r))
        assert value == pytest.approx(correlation_kernel(dil.evolution, dil.rho_se, times, a, a), abs=1e-10)


class TestDilatedProcessTensor:
    def test_identity_slots(self, rng):
        dil = bridge.random_dilation(2, 2, rng)
        times = (0.7, 1.9)
        u = dil.evolution.propagator(1.9)
        expected = partial_trace(u @ dil.rho_se @ u.conj().T, [2, 2], [0])
        np.testing.assert_allclose(bridge.process_tensor_from_dilation(dil, times).evaluate_sandwich([I2, I2]), expected, atol=1e-12)

    def test_trivial_environment(self, rng):
        rho = random_density(2, rng)
        dil = bridge.Dilation(rho, EvolutionFamily.frozen(2), 2)
        w = ginibre(2, rng)
        np.testing.assert_allclose(bridge.process_tensor_from_dilation(dil, [1.0]).evaluate_sandwich([w]), w @ rho @ w.conj().T, atol=1e-13)

    def test_agrees_with_process_tensor_module(self, rng):
        dil = bridge.random_dilation(2, 2, rng)
        times = bridge.random_times(2, rng)
        handle = bridge.process_tensor_from_dilation(dil, times)
        spec = pt.spec_from_evolution(dil.rho_se, dil.evolution, times, 2)
        for _ in range(20):
            ws = [ginibre(2, rng) for _ in range(2)]
            direct = pt.evaluate(spec, [QuantumOperation.sandwich(w) for w in ws])
            np.testing.assert_allclose(handle.evaluate_sandwich(ws), direct, atol=1e-10)

    def test_time_domain(self, rng):
        dil = bridge.random_dilation(2, 1, rng, t_max=1.0)
        with pytest.raises(ValueError):
            bridge.process_tensor_from_dilation(dil, [0.5, 2.0])


class TestAncilla:
    def test_register_weights(self, rng):
        W = [[ginibre(2, rng), ginibre(2, rng)], [ginibre(2, rng), ginibre(2, rng), ginibre(2, rng)]]
        amps = [[0.6, 0.8j], [1.0, -0.5, 0.3 + 0.4j]]
        anc = bridge.register_ancilla(W, amps)
        assert anc.d_a == 6
        assert anc.diagonality_defect() <= 1e-15
        alpha = anc.alpha()
        for (r1, r2), a in alpha.items():
            assert a == pytest.approx(abs(amps[0][r1]) ** 2 * abs(amps[1][r2]) ** 2, abs=1e-14)

    def test_trivial_ancilla(self, rng):
        dil = bridge.random_dilation(2, 2, rng)
        times = bridge.random_times(2, rng)
        ws = [ginibre(2, rng) for _ in range(2)]
        anc = bridge.AncillaConstruction(random_density(3, rng), ((np.eye(3),), (np.eye(3),)), ((ws[0],), (ws[1],)))
        amp = [dil.ampliate(w) for w in ws]
        expected = correlation_kernel(dil.evolution, dil.rho_se, times, amp, amp)
        assert bridge.extended_kernel(anc, dil, times) == pytest.approx(expected, abs=1e-10)

    def test_violates_diagonality(self, rng):
        # two V's that both leave |0> alone overlap
        anc = bridge.AncillaConstruction(np.diag([1.0, 0.0]), ((np.eye(2), np.eye(2)),), ((I2, I2),))
        assert anc.diagonality_defect() == pytest.approx(1)
        with pytest.raises(ValueError):
            anc.validate()

    def test_chain_of_equalities(self, rng):
        dil = bridge.random_dilation(2, 2, rng)
        times = bridge.random_times(2, rng)
        W = [[ginibre(2, rng), ginibre(2, rng)], [ginibre(2, rng), ginibre(2, rng)]]
        anc = bridge.register_ancilla(W, [[0.9, 0.3], [0.5j, 1.2]])
        ext = bridge.extended_kernel(anc, dil, times)
        via_process = bridge.ancilla_process_value(anc, dil, times)
        via_kernels = sum(
            a * correlation_kernel(dil.evolution, dil.rho_se, times, [dil.ampliate(w) for w in ws], [dil.ampliate(w) for w in ws])
            for a, ws in anc.weighted_sequence()
        )
        assert abs(ext - via_process) <= 1e-9
        assert abs(ext - via_kernels) <= 1e-9

    def test_ancilla_independence(self, rng):
        dil = bridge.random_dilation(2, 2, rng)
        times = bridge.random_times(2, rng)
        ws = [ginibre(2, rng) for _ in range(2)]
        first = bridge.process_tensor_from_dilation(dil, times).evaluate_sandwich(ws)
        anc = bridge.register_ancilla([[ws[0], I2], [ws[1]]], [[0.3, 0.7], [1.0]])
        bridge.extended_kernel(anc, dil, times)
        second = bridge.process_tensor_from_dilation(dil, times).evaluate_sandwich(ws)
        np.testing.assert_array_equal(first, second)

    def test_json_roundtrip(self, rng):
        anc = bridge.register_ancilla([[ginibre(2, rng), ginibre(2, rng)]], [[0.6, 0.8]])
        back = bridge.AncillaConstruction.from_json(json.loads(json.dumps(anc.to_json())))
        for (r, a), (r2, a2) in zip(anc.alpha().items(), back.alpha().items()):
            assert r == r2 and a == pytest.approx(a2, abs=1e-11)

    def test_term_limit(self, rng):
        W = [[I2] * 5] * 3
        anc = bridge.register_ancilla(W)
        with pytest.raises(ValueError):
            anc.gram()


class TestKernelIdentity:
    def test_projector_tuple(self, rng):
        dil = bridge.random_dilation(2, 2, rng)
        times = bridge.random_times(2, rng)
        ps = [spectral(random_hermitian(2, rng)).projectors[0] for _ in times]
        rep = bridge.verify_theorem1(ps, ps, dil, times)
        assert rep.term_count == 1
        assert rep.abs_error <= 1e-10
        assert rep.lhs.real == pytest.approx(pyramidal_probability(dil.evolution, dil.rho_se, times, [dil.ampliate(p) for p in ps]), abs=1e-10)

    def test_random_two_slot(self, rng):
        dil = bridge.random_dilation(2, 2, rng)
        times = bridge.random_times(2, rng)
        a = [ginibre(2, rng) for _ in times]
        b = [ginibre(2, rng) for _ in times]
        rep = bridge.verify_theorem1(a, b, dil, times)
        assert rep.term_count == 16
        assert rep.abs_error <= 1e-9

    def test_differ_in_last_slot(self, rng):
        # summing the final projector pair over an instrument drops the last time
        dil = bridge.random_dilation(2, 2, rng)
        times = bridge.random_times(3, rng)
        first = [spectral(random_hermitian(2, rng)) for _ in range(2)]
        final = spectral(random_hermitian(2, rng))
        head = [first[0].projectors[0], first[1].projectors[1]]
        total = 0.0
        for p in final.projectors:
            for q in final.projectors:
                rep = bridge.verify_theorem1(head + [p], head + [q], dil, times)
                assert rep.abs_error <= 1e-9
                total += rep.lhs
        lifted = [[dil.ampliate(p) for p in f.projectors] for f in first]
        shorter = sequential_probability(dil.evolution, dil.rho_se, times[:2], lifted, [0, 1])
        assert total == pytest.approx(shorter, abs=1e-10)

    def test_report_json(self, rng):
        dil = bridge.random_dilation(2, 1, rng)
        rep = bridge.verify_theorem1([ginibre(2, rng)], [ginibre(2, rng)], dil, [0.5])
        data = json.loads(json.dumps(rep.to_json()))
        assert set(data) >= {"lhs", "rhs", "abs_error", "term_count"}
        assert data["passed"] is True

    @given(seeds, st.integers(1, 3), st.integers(1, 2))
    def test_identity(self, seed, n, d_e):
        rng = np.random.default_rng(seed)
        dil = bridge.random_dilation(2, d_e, rng)
        times = bridge.random_times(n, rng)
        a = [ginibre(2, rng) for _ in range(n)]
        b = [ginibre(2, rng) for _ in range(n)]
        assert bridge.verify_theorem1(a, b, dil, times).abs_error <= 1e-8
