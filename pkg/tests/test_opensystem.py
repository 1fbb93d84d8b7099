import numpy as np
import pytest

from ftfsim.dynamics import drive_schedule, propagate
from ftfsim.errors import DimensionError, ValidationError
from ftfsim.opensystem import (NoiseSpec, XxEstimate, angular_per_us_to_hz,
                               conditional_ramsey_zz, conditional_t1_experiment,
                               conditional_t1_xx, fit_decay, lindblad_propagate,
                               node_population, resonant_pair_operators)

from conftest import two_level_operator_set, uncoupled_pair_operator_set


def test_bare_relaxation_exponential():
    ops = two_level_operator_set()
    kappa = 0.05  # 1/us
    times = np.linspace(0.0, 60_000.0, 121)  # ns
    traj = lindblad_propagate(ops, NoiseSpec(relaxation={"q": kappa}), None,
                              np.array([0.0, 1.0], complex), times)
    pop = node_population(ops, traj, "q")
    expected = np.exp(-kappa * times * 1e-3)
    assert np.max(np.abs(pop - expected)) < 1e-8


def test_closed_system_matches_propagate():
    ops = two_level_operator_set()
    sched = drive_schedule("q", 0.3, 0.002, 120.0, envelope="cosine")
    times = np.linspace(0.0, 120.0, 13)
    traj = lindblad_propagate(ops, NoiseSpec(), sched,
                              np.array([1.0, 0.0], complex), times)
    psi = propagate(ops, sched, initial=np.array([1.0, 0.0], complex)).final
    # undo the interaction-picture phase to compare density matrices
    phase = np.exp(-2j * np.pi * ops.energies * sched.duration)
    psi_lab = phase * psi
    rho_ref = np.outer(psi_lab, psi_lab.conj())
    assert np.max(np.abs(traj[-1] - rho_ref)) < 1e-8


def test_trace_and_positivity():
    ops = uncoupled_pair_operator_set()
    noise = NoiseSpec(relaxation={"t": 0.02, "c": 0.01},
                      dephasing={"t": 0.05})
    psi = np.array([0.0, 0.5, 0.5, np.sqrt(0.5)], complex)
    times = np.linspace(0.0, 50_000.0, 41)
    traj = lindblad_propagate(ops, noise, None, psi, times)
    traces = np.einsum("tii->t", traj).real
    assert np.max(np.abs(traces - 1.0)) < 1e-8
    for rho in traj[::8]:
        assert np.linalg.eigvalsh(rho)[0] > -1e-8


def test_dephasing_rate_convention():
    ops = two_level_operator_set()
    gamma = 0.08
    times = np.linspace(0.0, 20_000.0, 51)
    psi = np.array([1.0, 1.0], complex) / np.sqrt(2.0)
    traj = lindblad_propagate(ops, NoiseSpec(dephasing={"q": gamma}), None,
                              psi, times)
    coherence = np.abs(traj[:, 0, 1])
    expected = 0.5 * np.exp(-gamma * times * 1e-3)
    assert np.max(np.abs(coherence - expected)) < 1e-8


def test_dimension_cap():
    from ftfsim.hamiltonian import OperatorSet
    fat = OperatorSet(names=("a",), levels=(256,), hamiltonian=np.eye(256),
                      energies=np.zeros(256), eigvecs=np.eye(256),
                      bare_energies={"a": np.zeros(256)},
                      element_charge_ops={"a": np.zeros((256, 256))},
                      flux_point={}, element_eigvecs={"a": np.eye(256)})
    with pytest.raises(DimensionError):
        lindblad_propagate(fat, NoiseSpec(), None, np.eye(256) / 256.0,
                           np.linspace(0, 10, 5))


def test_noise_spec_validation():
    with pytest.raises(ValidationError):
        NoiseSpec(relaxation={"q": -0.1})


def test_ramsey_synthetic_zz_injection():
    zz = 5e-6  # 5 kHz in GHz
    ops = uncoupled_pair_operator_set(zz=zz)
    zeta, _ = conditional_ramsey_zz(ops, "t", "c")
    assert zeta == pytest.approx(zz, abs=5e-8)  # +- 0.05 kHz


def test_ramsey_uncoupled_zero():
    ops = uncoupled_pair_operator_set()
    zeta, _ = conditional_ramsey_zz(ops, "t", "c")
    assert abs(zeta) < 1e-10


def test_ramsey_matches_static_zz(unit_config, qcq_off):
    from ftfsim.spectral import static_zz
    ops, _ = qcq_off
    zeta_static = static_zz(unit_config, ("Q2", "Q3"))
    zeta_ramsey, _ = conditional_ramsey_zz(ops, "Q2", "Q3")
    assert abs(zeta_static - zeta_ramsey) < 1e-7  # 0.1 kHz


def test_fit_decay_roundtrip():
    times = np.linspace(0.0, 120.0, 80)
    signal = 0.8 * np.exp(-0.031 * times) + 0.1
    fit = fit_decay(times, signal)
    assert fit.rate == pytest.approx(0.031, rel=1e-6)
    assert fit.amplitude == pytest.approx(0.8, rel=1e-6)
    assert fit.offset == pytest.approx(0.1, abs=1e-6)
    assert np.all(np.linalg.eigvalsh(fit.covariance) > -1e-12)


def test_conditional_t1_formula_values():
    est = conditional_t1_xx(0.02, 0.02, (0.021, 0.02))
    assert est.g_xx == pytest.approx(0.5 * np.sqrt(0.04 * 0.001), rel=1e-12)
    assert est.g_xx_hz == pytest.approx(503.29, rel=1e-3)
    assert conditional_t1_xx(0.02, 0.02, (0.02, 0.02)).g_xx == 0.0


def test_conditional_t1_negative_diagnostic():
    est = conditional_t1_xx(0.02, 0.02, (0.020, 0.021))
    assert not est.consistent
    assert est.g_xx is None
    assert "inconsistent" in est.message
    assert est.delta_gamma == pytest.approx(-0.001)


@pytest.mark.slow
def test_xx_roundtrip_overdamped():
    kc, kt = 0.032, 0.008
    ksum = kc + kt
    devs = []
    for ratio in (0.3, 0.1, 0.03):
        g = ratio * ksum
        res = conditional_t1_experiment(g, kc, kt)
        devs.append(abs(res["gamma_t_given_g"].rate - res["formula_rate"]))
        if ratio <= 0.1:
            est = res["estimate"]
            assert est.consistent
            assert abs(est.g_xx - g) / g < 0.10, (ratio, est.g_xx, g)
    # formula-vs-Lindblad agreement improves monotonically at weaker coupling
    assert devs[0] > devs[1] > devs[2]
