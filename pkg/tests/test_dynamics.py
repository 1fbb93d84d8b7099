import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ftfsim.dynamics import (CalibrationResult, PulseSchedule, PulseSegment,
                             calibrate_cz, chevron_scan, cz_metrics, cz_schedule,
                             detuning_phase_error, drive_schedule,
                             fit_phase_per_gate, propagate, spectator_phase_report)
from ftfsim.errors import ValidationError
from ftfsim.hamiltonian import build_composite, label_states

from conftest import two_level_operator_set


def test_schedule_validation():
    seg = PulseSegment("q", "charge-drive", "square", 0.01, 0.0, 50.0, 4.5)
    PulseSchedule((seg,), 50.0)
    with pytest.raises(ValidationError, match="overlap"):
        PulseSchedule((seg, PulseSegment("q", "charge-drive", "square",
                                         0.01, 40.0, 50.0, 4.5)), 100.0)
    with pytest.raises(ValidationError, match="duration"):
        PulseSchedule((seg,), 20.0)
    with pytest.raises(ValidationError, match="square only"):
        PulseSegment("q", "flux", "cosine", 0.5, 0.0, 50.0)


def test_schedule_json_roundtrip():
    sched = cz_schedule("C23", 4.52, 0.033, drive_duration=60.0,
                        flux_node="C23", flux_value=0.5, buffer=10.0)
    again = PulseSchedule.from_json(sched.to_json())
    assert again == sched
    assert again.duration == 80.0


def test_zero_amplitude_identity():
    ops = two_level_operator_set()
    res = propagate(ops, drive_schedule("q", 0.3, 0.0, 50.0, envelope="square"))
    assert np.max(np.abs(res.final - np.eye(2))) < 1e-12
    assert res.unitarity_defect < 1e-12


def test_resonant_pi_pulse_inversion():
    # weak lab-frame drive keeps the counter-rotating error below 1e-6
    m = 0.8
    ops = two_level_operator_set(f01=0.3, melem=m)
    amp = 5e-4
    t_pi = 1.0 / (2.0 * amp * m)
    sched = drive_schedule("q", 0.3, amp, t_pi, envelope="square")
    psi = propagate(ops, sched, initial=np.array([1, 0], complex)).final
    assert abs(np.abs(psi[1]) ** 2 - 1.0) < 1e-6
    # the rotating frame is exact on resonance
    psi_rwa = propagate(ops, sched, initial=np.array([1, 0], complex),
                        frame="rwa").final
    assert abs(np.abs(psi_rwa[1]) ** 2 - 1.0) < 1e-9


def test_unitarity_and_step_halving():
    ops = two_level_operator_set()
    sched = drive_schedule("q", 0.3, 0.004, 80.0, envelope="cosine")
    res = propagate(ops, sched, max_step=0.02)
    assert res.unitarity_defect < 1e-9
    res2 = propagate(ops, sched, max_step=0.01)
    assert np.max(np.abs(res.final - res2.final)) < 1e-8


def test_detuning_phase_error_values():
    assert detuning_phase_error(0.0, 1.0) == 0.0
    assert detuning_phase_error(1.0, 1.0) == pytest.approx(math.pi / math.sqrt(2.0))
    with pytest.raises(ValidationError):
        detuning_phase_error(0.1, 0.0)


@given(delta=st.floats(-5.0, 5.0), rabi=st.floats(1e-3, 10.0),
       scale=st.floats(0.01, 100.0))
@settings(max_examples=200, deadline=None)
def test_detuning_phase_error_properties(delta, rabi, scale):
    base = detuning_phase_error(delta, rabi)
    assert detuning_phase_error(-delta, rabi) == pytest.approx(base, rel=1e-12)
    assert detuning_phase_error(scale * delta, scale * rabi) == \
        pytest.approx(base, rel=1e-9)


def _geometric_phase_oracle(delta, omega):
    """Full two-level cyclic propagation: total phase minus the dynamical
    phase obtained by quadrature, for one generalized Rabi period."""
    h = 0.5 * np.array([[delta, omega], [omega, -delta]])
    om_tot = math.hypot(delta, omega)
    t_cycle = 1.0 / om_tot
    w, v = np.linalg.eigh(h)
    psi0 = np.array([0.0, 1.0])
    u_end = (v * np.exp(-2j * np.pi * w * t_cycle)) @ v.conj().T
    total = np.angle(np.vdot(psi0, u_end @ psi0))
    ts = np.linspace(0.0, t_cycle, 4001)
    energies = []
    for t in ts:
        u = (v * np.exp(-2j * np.pi * w * t)) @ v.conj().T
        p = u @ psi0
        energies.append(np.real(np.vdot(p, h @ p)))
    dynamical = -2.0 * np.pi * np.trapezoid(energies, ts)
    geometric = total - dynamical
    return abs((geometric - math.pi + math.pi) % (2.0 * math.pi) - math.pi)


def test_phase_error_matches_cyclic_propagation():
    for x in np.linspace(-0.5, 0.5, 21):
        closed = detuning_phase_error(x, 1.0)
        numeric = _geometric_phase_oracle(x, 1.0)
        assert abs(closed - numeric) < 1e-6


def test_chevron_two_level():
    m = 0.8
    ops = two_level_operator_set(f01=0.3, melem=m)
    amp = 0.002
    t_2pi = 1.0 / (amp * m)
    deltas = np.linspace(-0.01, 0.01, 9)
    pop = chevron_scan(ops, "q", 0.3 + deltas, [amp], t_2pi, "g",
                       frame="rwa", threads=1)
    # full revival on resonance
    assert pop[4, 0] > 1.0 - 1e-6
    # far-detuned edge barely leaves the initial state
    assert pop[0, 0] > 0.9
    # symmetric under detuning sign flip
    np.testing.assert_allclose(pop[:, 0], pop[::-1, 0], atol=1e-9)


def test_chevron_amplitude_revival():
    m = 0.8
    ops = two_level_operator_set(f01=0.3, melem=m)
    t = 400.0
    amps = np.linspace(0.2, 2.0, 10) / (t * m)
    pop = chevron_scan(ops, "q", [0.3], amps, t, "g", frame="rwa", threads=1)[0]
    # sinusoidal in amplitude: minimum near the pi amplitude, revival at 2pi
    assert pop[-1] > 1.0 - 1e-6
    assert np.min(pop) < 0.05


def test_chevron_center_matches_spectrum(unit_config, qcq_on):
    ops, spec = qcq_on
    f0 = spec.energy("eeg") - spec.energy("egg")
    freqs = f0 + np.linspace(-0.004, 0.004, 9)
    n_el = abs(ops.charge_op("C23")[spec.index_of("eeg"), spec.index_of("egg")])
    amp_pi = 1.0 / (2.0 * 160.0 * n_el)
    pop = chevron_scan(ops, "C23", freqs, [amp_pi], 160.0, "egg",
                       frame="rwa", keep_levels=40, threads=None, spectrum=spec)
    center = freqs[int(np.argmin(pop[:, 0]))]
    assert abs(center - f0) < 1e-3  # within 1 MHz of the spectral prediction


def test_rwa_lab_cross_check_at_center(qcq_on):
    ops, spec = qcq_on
    f0 = spec.energy("eeg") - spec.energy("egg")
    n_el = abs(ops.charge_op("C23")[spec.index_of("eeg"), spec.index_of("egg")])
    amp = 1.0 / (2.0 * 160.0 * n_el)
    i0 = spec.index_of("egg")
    psi0 = np.zeros(40, complex)
    psi0[i0] = 1.0
    sched = drive_schedule("C23", f0, amp, 160.0, envelope="square")
    p_lab = abs(propagate(ops, sched, initial=psi0, keep_levels=40,
                          frame="lab").final[i0]) ** 2
    p_rwa = abs(propagate(ops, sched, initial=psi0, keep_levels=40,
                          frame="rwa").final[i0]) ** 2
    assert abs(p_lab - p_rwa) < 0.02


def test_fit_phase_per_gate_identity():
    counts = np.arange(1, 9)
    slope, intercept = fit_phase_per_gate(counts, 0.03 * counts + 0.4)
    assert slope == pytest.approx(0.03, abs=1e-4)
    assert intercept == pytest.approx(0.4, abs=1e-3)


def test_calibrate_ideal_two_level_cz():
    """Exactly solvable target: a two-qubit system whose |ee> couples to a
    single auxiliary level; calibration must reach machine-level fidelity."""
    f_aux = 4.5
    f1, f2 = 0.25, 0.31
    energies = np.array([0.0, f2, f1, f1 + f2, f1 + f2 + f_aux])
    labels = ["gg", "ge", "eg", "ee", "aux"]
    n = np.zeros((5, 5), complex)
    n[3, 4] = 1j
    n[4, 3] = -1j
    from ftfsim.hamiltonian import OperatorSet, SpectrumResult

    ops = OperatorSet(names=("a", "b"), levels=(5, 1),
                      hamiltonian=np.diag(energies), energies=energies,
                      eigvecs=np.eye(5),
                      bare_energies={"a": energies, "b": np.zeros(1)},
                      element_charge_ops={"a": n, "b": np.zeros((1, 1))},
                      flux_point={}, element_eigvecs={"a": np.eye(5), "b": np.eye(1)})
    spec = SpectrumResult(energies=energies,
                          labels=labels,
                          overlaps=np.ones(5), ambiguous=np.zeros(5, bool),
                          flux_point={})
    # drive |ee> -> aux through one full cycle: conditional pi phase on |ee>
    sched = drive_schedule("a", f_aux, 2.0 / (60.0 * 1.0), 60.0, envelope="cosine")
    res = propagate(ops, sched, frame="rwa")
    idx = [labels.index(k) for k in ("gg", "ge", "eg", "ee")]
    u = res.final
    phases = np.angle(np.diag(u)[idx])
    cond = phases[0] - phases[1] - phases[2] + phases[3]
    assert abs(abs((cond + math.pi) % (2 * math.pi) - math.pi) - math.pi) < 1e-6
    gate = cz_metrics(ops, u, ("a", "b"), spectrum=spec)
    assert gate.fidelity > 1.0 - 1e-6
    assert gate.leakage < 1e-8


@pytest.mark.slow
def test_calibrate_cz_unit_cell(unit_config, qcq_on):
    ops, _ = qcq_on
    cal = calibrate_cz(ops, "C23", target_transition=("egg", "eeg"),
                       qubits=("Q2", "Q3"), duration=60.0, keep_levels=48)
    assert abs(abs(cal.gate.conditional_phase) - math.pi) < 1e-3
    assert cal.gate.fidelity >= 0.999
    assert cal.gate.leakage <= 5e-4
    assert cal.gate.unitarity_defect < 1e-9
    for stage, count in cal.history["evaluations"].items():
        assert count <= 60, stage


def test_propagate_flux_window_no_drive(unit_config, qcq_off):
    """A square flux excursion with no drive acts near-diagonally on the
    computational states (sudden-switch hybridization is small)."""
    ops, spec = qcq_off
    sched = cz_schedule("C23", 4.5, 0.0, drive_duration=60.0,
                        flux_node="C23", flux_value=0.5, buffer=10.0)
    res = propagate(ops, sched, keep_levels=20)
    u = res.final
    for lab in ("ggg", "gge", "egg", "ege"):
        i = spec.index_of(lab)
        assert abs(u[i, i]) > 0.99, lab


def test_spectator_phase_report_structure(unit_config):
    rows = spectator_phase_report(unit_config, ("Q1", "Q2"), "Q3",
                                  coupler_fluxes={"C12": 0.5, "C23": 0.0},
                                  drive_states=("ggg", "geg"),
                                  levels={"Q1": 5, "C12": 4, "Q2": 5,
                                          "C23": 4, "Q3": 5})
    by_state = {r["spectator_state"]: r for r in rows}
    assert by_state["g"]["shift"] == 0.0
    assert by_state["g"]["phase_error"] == 0.0
    assert all(r["phase_error"] >= 0 for r in rows)


def test_spectator_report_decoupled(unit_config):
    import dataclasses
    j = unit_config.couplings.copy()
    for nm in ("C23", "Q3"):
        i = unit_config.index(nm)
        j[i, :] = 0.0
        j[:, i] = 0.0
    cfg = dataclasses.replace(unit_config, couplings=j)
    rows = spectator_phase_report(cfg, ("Q1", "Q2"), "Q3",
                                  coupler_fluxes={"C12": 0.5, "C23": 0.0},
                                  drive_states=("ggg", "geg"),
                                  levels={"Q1": 4, "C12": 3, "Q2": 4,
                                          "C23": 3, "Q3": 4})
    assert all(abs(r["shift"]) < 1e-11 for r in rows)
    assert all(r["phase_error"] < 1e-7 for r in rows)
