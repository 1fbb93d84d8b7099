import dataclasses

import numpy as np
import pytest

from ftfsim.errors import LabelingError, ValidationError
from ftfsim.hamiltonian import SpectrumResult, build_composite, label_states
from ftfsim.spectral import (delta_min, delta_min_from_spectrum, epsilon_max,
                             epsilon_max_from_energies, flux_sweep,
                             identify_map_transition, spectator_frequencies,
                             static_zz, tracked_delta_min_metric, transition_table,
                             zz_from_energies)


def _synthetic_spectrum(energies, labels, flux=None):
    energies = np.asarray(energies, dtype=float)
    return SpectrumResult(energies=energies, labels=list(labels),
                          overlaps=np.ones(len(labels)),
                          ambiguous=np.zeros(len(labels), dtype=bool),
                          flux_point=flux or {})


def test_delta_min_three_level():
    # transitions at 4.0 (g->e) and 4.3 (e->f); target the lower branch
    spec = _synthetic_spectrum([0.0, 4.0, 8.3], ["g", "e", "f"])
    value, competitor = delta_min_from_spectrum(spec, ("g", "e"))
    assert value == pytest.approx(0.3, abs=1e-12)
    assert competitor == ("e", "f")


def test_delta_min_degenerate_competitor():
    spec = _synthetic_spectrum([0.0, 4.0, 8.0], ["g", "e", "f"])
    value, _ = delta_min_from_spectrum(spec, ("g", "e"))
    assert value == 0.0


def test_delta_min_global_shift_invariance():
    e = np.array([0.0, 3.7, 7.9, 8.4])
    labels = ["gg", "ge", "eg", "ee"]
    base, _ = delta_min_from_spectrum(_synthetic_spectrum(e, labels), ("gg", "ge"))
    shifted, _ = delta_min_from_spectrum(_synthetic_spectrum(e + 11.3, labels),
                                         ("gg", "ge"))
    assert base == pytest.approx(shifted, abs=1e-12)


def test_delta_min_unit_cell_operating_point(unit_config):
    value = delta_min(unit_config, ("Q1", "Q2"), ("ggg", "geg"), 0.5)
    assert 0.03 <= value <= 0.3  # ~100 MHz selectivity scale


def test_identify_map_transition(unit_config, qcq_on):
    _, spec = qcq_on
    target = identify_map_transition(spec)
    # coupler excitation out of a computational state
    assert target[0][1] == "g" and target[1][1] == "e"


def test_transition_table_uncoupled(unit_config):
    zeroed = dataclasses.replace(unit_config,
                                 couplings=np.zeros_like(unit_config.couplings))
    ops = build_composite(zeroed, ["Q2", "C23", "Q3"], {"Q2": 2, "C23": 2, "Q3": 2})
    spec = label_states(ops)
    table = transition_table(spec, ops, "ggg")
    # one driven transition per node from the ground state
    for nm in ops.names:
        driven = [t for t in table.transitions if t.matrix_elements[nm] > 1e-8]
        assert len(driven) == 1
        bare_m = np.abs(ops.element_charge_ops[nm][0, 1])
        assert driven[0].matrix_elements[nm] == pytest.approx(bare_m, rel=1e-9)


def test_transition_table_branches_fig2a(unit_config, qcq_on):
    """From |egg>, the two dominant drive branches terminate at fgg and eeg;
    from |ege>, three branches appear: fge, eee, egf."""
    ops, spec = qcq_on
    table = transition_table(spec, ops, "egg", max_excitation=3)
    strongest = {t.final for t in table.strongest("C23", 2)}
    assert strongest == {"fgg", "eeg"}

    table2 = transition_table(spec, ops, "ege", max_excitation=4)
    strongest3 = {t.final for t in table2.strongest("C23", 3)}
    assert strongest3 == {"fge", "eee", "egf"}


def test_transition_table_missing_label(qcq_on):
    ops, spec = qcq_on
    with pytest.raises(LabelingError):
        transition_table(spec, ops, "zzz")


def test_epsilon_max_decoupled_spectator(unit_config):
    cfg = unit_config
    j = cfg.couplings.copy()
    iq3 = cfg.index("Q3")
    j[iq3, :] = 0.0
    j[:, iq3] = 0.0
    ic23 = cfg.index("C23")
    j[ic23, :] = 0.0
    j[:, ic23] = 0.0
    decoupled = dataclasses.replace(cfg, couplings=j)
    value = epsilon_max(decoupled, ("Q1", "Q2"), "Q3", ("ggg", "geg"), 0.0,
                        levels={"Q1": 4, "C12": 3, "Q2": 4, "C23": 3, "Q3": 4})
    assert abs(value) < 1e-11


def test_epsilon_max_pairwise_symmetry():
    freqs = {"g": 4.0, "e": 4.0002, "f": 3.9999}
    v1 = epsilon_max_from_energies(freqs)
    v2 = epsilon_max_from_energies({"g": freqs["g"], "f": freqs["e"], "e": freqs["f"]})
    assert v1 == pytest.approx(v2, abs=1e-15)
    assert v1 == pytest.approx(0.0003, abs=1e-12)


def test_epsilon_max_on_off_contrast(unit_config):
    levels = {"Q1": 5, "C12": 4, "Q2": 5, "C23": 4, "Q3": 5}
    off = epsilon_max(unit_config, ("Q1", "Q2"), "Q3", ("ggg", "geg"), 0.0,
                      levels=levels)
    on = epsilon_max(unit_config, ("Q1", "Q2"), "Q3", ("ggg", "geg"), 0.5,
                     levels=levels)
    assert on > 10 * off


def test_spectator_orientation_left(unit_config):
    """Spectator on the left of the active pair uses mirrored labels."""
    freqs = spectator_frequencies(unit_config, ("Q2", "Q3"), "Q1",
                                  ("egg", "eeg"), 0.0,
                                  levels={"Q1": 4, "C12": 3, "Q2": 5,
                                          "C23": 4, "Q3": 5},
                                  spectator_states="ge")
    assert set(freqs) == {"g", "e"}
    assert 3.0 < freqs["g"] < 6.0


def test_static_zz_uncoupled(unit_config):
    zeroed = dataclasses.replace(unit_config,
                                 couplings=np.zeros_like(unit_config.couplings))
    assert abs(static_zz(zeroed, ("Q2", "Q3"),
                         levels={"Q2": 4, "C23": 3, "Q3": 4})) < 1e-12


def test_static_zz_magnitude_and_pair_symmetry(unit_config):
    z_ab = static_zz(unit_config, ("Q2", "Q3"))
    z_ba = static_zz(unit_config, ("Q3", "Q2"))
    assert z_ab == pytest.approx(z_ba, abs=1e-15)
    assert abs(z_ab) < 5e-6  # |zeta| below 5 kHz with the coupler OFF
    z_on = static_zz(unit_config, ("Q2", "Q3"), flux_point={"C23": 0.5})
    assert abs(z_on) < 5e-6


def test_zz_formula_symmetry():
    assert zz_from_energies(0.0, 1.0, 2.0, 3.1) == pytest.approx(0.1)


def test_metric_small_coupling_scaling(unit_config):
    """epsilon_max decreases monotonically as couplings shrink; delta_min of
    the competing pair approaches the bare detuning."""
    values = []
    for scale in (1.0, 0.5, 0.25):
        cfg = dataclasses.replace(unit_config,
                                  couplings=unit_config.couplings * scale)
        values.append(epsilon_max(cfg, ("Q1", "Q2"), "Q3", ("ggg", "geg"), 0.0,
                                  levels={"Q1": 4, "C12": 3, "Q2": 4,
                                          "C23": 3, "Q3": 4}))
    assert values[0] > values[1] > values[2]

    deltas = []
    for scale in (0.25, 0.1, 0.02):
        cfg = dataclasses.replace(unit_config,
                                  couplings=unit_config.couplings * scale)
        ops = build_composite(cfg, ["Q2", "C23", "Q3"],
                              {"Q2": 5, "C23": 4, "Q3": 5})
        spec = label_states(ops)
        d, _ = delta_min_from_spectrum(spec, ("ggg", "gge"))
        deltas.append(d)
    # bare detuning of the competing transition in the uncoupled limit
    ops0 = build_composite(
        dataclasses.replace(unit_config,
                            couplings=np.zeros_like(unit_config.couplings)),
        ["Q2", "C23", "Q3"], {"Q2": 5, "C23": 4, "Q3": 5})
    spec0 = label_states(ops0)
    d0, _ = delta_min_from_spectrum(spec0, ("ggg", "gge"))
    errors = [abs(d - d0) for d in deltas]
    assert errors[0] > errors[1] > errors[2]


def test_flux_sweep_basics():
    result = flux_sweep(lambda x: 1.5, [0.0, 0.1, 0.2], metric_name="const")
    np.testing.assert_allclose(result.values, 1.5)
    with pytest.raises(ValidationError, match="axis not increasing"):
        flux_sweep(lambda x: x, [0.2, 0.1])
    with pytest.raises(ValidationError):
        flux_sweep(lambda x: x, [])


def test_flux_sweep_error_carries_point_index():
    def metric(x):
        if x > 0.15:
            raise LabelingError("boom")
        return x

    with pytest.raises(LabelingError, match="at sweep point 2"):
        flux_sweep(metric, [0.0, 0.1, 0.2], threads=1)


def test_tracked_delta_min_sweep(unit_config):
    metric = tracked_delta_min_metric(unit_config, ("Q1", "Q2"), ("ggg", "geg"),
                                      levels={"Q1": 5, "C12": 4, "Q2": 5})
    axis = np.linspace(0.40, 0.50, 6)
    result = flux_sweep(metric, axis, metric_name="delta_min", tracking=True)
    assert np.all(result.values > 0)
    # selectivity opens toward the operating point
    assert result.values[-1] > result.values[0]


def test_delta_min_ambiguous_target_errors(unit_config):
    spec = _synthetic_spectrum([0.0, 4.0, 4.3], ["g", "e", "f"])
    spec.ambiguous[1] = True
    with pytest.raises(LabelingError, match="ambiguous"):
        delta_min_from_spectrum(spec, ("g", "e"))
