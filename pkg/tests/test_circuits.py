import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ftfsim.circuits import (Circuit, NoiseModel, compile_ghz, cz, fit_parity,
                             ghz_fidelity, ghz_target_state, parity_experiment,
                             probabilities, sample_record, simulate,
                             simulate_statevector, state_fidelity, theory_fidelity,
                             tomography_density, vz, x90, x180)
from ftfsim.errors import DimensionError, ValidationError


def test_layer_disjointness_enforced():
    c = Circuit(3)
    with pytest.raises(ValidationError, match="disjoint"):
        c.add_layer([x90(0), x180(0)])


def test_cz_nearest_neighbor_enforced():
    c = Circuit(4)
    with pytest.raises(ValidationError, match="nearest"):
        c.add_layer([cz(0, 2)])


def test_gate_unitaries():
    h = vz(0, math.pi / 2).unitary() @ x90(0).unitary() @ vz(0, math.pi / 2).unitary()
    expected = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    assert np.max(np.abs(h - expected)) < 1e-12


@pytest.mark.parametrize("n", [2, 3, 4, 7, 10, 12])
def test_ghz_layers_and_state(n):
    circ = compile_ghz(n)
    assert circ.cz_layer_count() == math.ceil(n / 2)
    state = simulate_statevector(circ)
    amps = np.abs(state)
    nonzero = np.flatnonzero(amps > 1e-9)
    assert set(nonzero) == {0, 2 ** n - 1}
    assert amps[0] == pytest.approx(1 / math.sqrt(2), abs=1e-10)
    assert amps[-1] == pytest.approx(1 / math.sqrt(2), abs=1e-10)
    assert state_fidelity(state, ghz_target_state(n)) > 1.0 - 1e-10


def test_ghz_native_gate_budget():
    # one physical pulse for the root Hadamard, three per CNOT target
    circ = compile_ghz(6)
    counts = circ.physical_gate_counts()
    assert counts["cz"] == 5
    assert counts["x90"] == 1 + 2 * 5
    assert counts["x180"] == 5


def test_ghz_chain_offset():
    circ = compile_ghz(3, chain_offset=2, total_qubits=6)
    state = simulate_statevector(circ)
    probs = np.abs(state.reshape([2] * 6)) ** 2
    marginal = probs.sum(axis=(0, 1, 5))
    assert marginal[0, 0, 0] == pytest.approx(0.5, abs=1e-10)
    assert marginal[1, 1, 1] == pytest.approx(0.5, abs=1e-10)
    with pytest.raises(ValidationError, match="chain too short"):
        compile_ghz(4, chain_offset=3, total_qubits=5)


def test_simulate_empty_and_x180():
    rec = simulate(Circuit(3), shots=500, seed=1)
    assert rec.counts() == {"000": 500}
    c = Circuit(2).add_layer([x180(0), x180(1)])
    rec = simulate(c, shots=1000, seed=2)
    assert rec.counts() == {"11": 1000}


def test_simulate_determinism():
    circ = compile_ghz(4)
    r1 = simulate(circ, NoiseModel(p2=0.01), shots=4000, seed=9)
    r2 = simulate(circ, NoiseModel(p2=0.01), shots=4000, seed=9)
    np.testing.assert_array_equal(r1.bits, r2.bits)


def test_statevector_cap():
    with pytest.raises(DimensionError):
        simulate_statevector(Circuit(21))
    with pytest.raises(DimensionError):
        simulate(Circuit(13), NoiseModel(p1=0.01))


def test_depolarizing_noise_matches_product_model():
    f1, f2 = 0.9999, 0.995
    noise = NoiseModel.from_fidelities(f1, f2)
    for n in (4, 8):
        rho = simulate(compile_ghz(n), noise)
        f_sim = state_fidelity(rho, ghz_target_state(n))
        f_th = theory_fidelity(n, [f1] * n, [f2] * (n - 1))
        assert abs(f_sim - f_th) / f_th < 0.02


def test_initialization_error_before_first_layer():
    noise = NoiseModel(init_excited=1.0)
    rho = simulate(compile_ghz(2), noise)
    # both qubits start in |e>; circuit still produces a GHZ-like pair of
    # amplitudes, now rooted in the flipped branch
    probs = np.diag(rho).real
    assert probs[0] + probs[-1] == pytest.approx(1.0, abs=1e-9)


def test_parity_ideal_ghz_orders():
    for n in range(2, 8):
        state = simulate_statevector(compile_ghz(n))
        phases = np.linspace(0.0, 2 * np.pi, 4 * n + 5, endpoint=False)
        res = parity_experiment(state, n, phases)
        assert res.dominant_order == n
        assert res.amplitudes[n] == pytest.approx(1.0, abs=1e-6)
        for m in range(1, n):
            assert res.amplitudes[m] < 1e-6


def test_parity_fit_identity():
    phases = np.linspace(0.0, 2 * np.pi, 64, endpoint=False)
    res = fit_parity(phases, 0.8 * np.cos(5 * phases), 5)
    assert res.amplitudes[5] == pytest.approx(0.8, abs=1e-9)
    assert res.dominant_order == 5
    assert all(res.amplitudes[m] < 1e-9 for m in range(1, 5))


def test_parity_undersampled_grid_rejected():
    phases = np.linspace(0.0, 2 * np.pi, 10, endpoint=False)
    with pytest.raises(ValidationError, match="undersampled"):
        fit_parity(phases, np.cos(5 * phases), 5)
    short = np.linspace(0.0, 0.5, 40)
    with pytest.raises(ValidationError, match="shorter than one period"):
        fit_parity(short, np.cos(5 * short), 5)


def test_ghz_fidelity_arithmetic():
    assert ghz_fidelity((0.3, 0.3), 0.4) == pytest.approx(0.5)
    assert ghz_fidelity((0.5, 0.5), 1.0) == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        ghz_fidelity((0.8, 0.8), 0.1)
    with pytest.raises(ValidationError):
        ghz_fidelity((-0.1, 0.5), 0.1)


def test_theory_fidelity_products():
    assert theory_fidelity(3, [1.0] * 3, [1.0] * 2) == 1.0
    val = theory_fidelity(2, [0.9999, 0.9999], [0.99])
    assert val == pytest.approx(0.9999 * 0.9999 ** 3 * 0.99, rel=1e-12)
    assert val == pytest.approx(0.98960, abs=5e-5)
    with pytest.raises(ValidationError):
        theory_fidelity(3, [1.0] * 2, [1.0] * 2)


def test_tomography_agrees_with_parity_fidelity():
    for n in (2, 3, 5):
        state = simulate_statevector(compile_ghz(n))
        rho = tomography_density(state, n)
        target = ghz_target_state(n)
        f_tomo = float(np.real(target.conj() @ rho @ target))
        probs = np.abs(state) ** 2
        res = parity_experiment(state, n,
                                np.linspace(0, 2 * np.pi, 8 * n, endpoint=False))
        f_par = ghz_fidelity((probs[0], probs[-1]), res.a_n)
        assert abs(f_tomo - f_par) < 1e-6


def test_tomography_physicality_projection():
    # a slightly unphysical input must come back PSD with unit trace
    state = simulate_statevector(compile_ghz(2))
    rho = np.outer(state, state.conj())
    rho[0, 0] += 0.02
    rho[3, 3] -= 0.02
    est = tomography_density(rho, 2)
    w = np.linalg.eigvalsh(est)
    assert w[0] > -1e-12
    assert np.trace(est).real == pytest.approx(1.0, abs=1e-10)


@given(st.integers(0, 2 ** 16 - 1))
@settings(max_examples=30, deadline=None)
def test_sample_record_bit_packing(idx):
    probs = np.zeros(2 ** 16)
    probs[idx] = 1.0
    rec = sample_record(probs, 3, seed=0, n_qubits=16)
    assert int("".join(map(str, rec.bits[0])), 2) == idx


def test_circuit_serialization_roundtrip():
    circ = compile_ghz(4)
    again = Circuit.from_dict(circ.to_dict())
    s1 = simulate_statevector(circ)
    s2 = simulate_statevector(again)
    np.testing.assert_allclose(s1, s2, atol=1e-12)
