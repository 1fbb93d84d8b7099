import numpy as np
import pytest

from ftfsim.device import (DeviceConfig, FluxoniumParams, TransmonCouplerParams,
                           load_config, loads_config, serialize, validate)
from ftfsim.errors import ConfigError

from conftest import CONFIG_PATH

MINIMAL = """
nodes:
  - {name: Q1, kind: fluxonium, e_c: 1.17, e_j: 4.2, e_l: 0.6, flux_ext: 0.5}
couplings: []
"""


def test_load_table_unit(unit_config):
    assert len(unit_config.nodes) == 5
    assert unit_config.names == ["Q1", "C12", "Q2", "C23", "Q3"]
    assert unit_config.coupling("Q1", "C12") == 0.309
    assert unit_config.coupling("C12", "Q1") == 0.309
    assert unit_config.coupling("Q2", "Q3") == -0.065
    assert unit_config.coupling("Q1", "Q3") == 0.0


def test_minimal_single_node():
    cfg = loads_config(MINIMAL)
    assert len(cfg.nodes) == 1
    assert cfg.couplings.shape == (1, 1)


def test_asymmetric_coupling_rejected():
    text = MINIMAL.replace("couplings: []", "") + """
  - {name: C12, kind: coupler, e_c: 0.21, e_j1: 17.0, e_j2: 28.0}
couplings:
  - {a: Q1, b: C12, j: 0.309}
  - {a: C12, b: Q1, j: 0.3}
"""
    # splice the coupler into the nodes list
    text = """
nodes:
  - {name: Q1, kind: fluxonium, e_c: 1.17, e_j: 4.2, e_l: 0.6, flux_ext: 0.5}
  - {name: C12, kind: coupler, e_c: 0.21, e_j1: 17.0, e_j2: 28.0}
couplings:
  - {a: Q1, b: C12, j: 0.309}
  - {a: C12, b: Q1, j: 0.3}
"""
    with pytest.raises(ConfigError, match="asymmetric"):
        loads_config(text)


def test_dangling_coupling_rejected():
    text = MINIMAL.replace("couplings: []",
                           "couplings:\n  - {a: Q1, b: Q9, j: 0.1}")
    with pytest.raises(ConfigError, match="unknown node"):
        loads_config(text)


def test_negative_energy_rejected():
    with pytest.raises(ConfigError, match="strictly positive"):
        loads_config(MINIMAL.replace("e_c: 1.17", "e_c: -1.17"))


def test_roundtrip_field_for_field(unit_config):
    again = loads_config(serialize(unit_config))
    assert again.names == unit_config.names
    np.testing.assert_array_equal(again.couplings, unit_config.couplings)
    for a, b in zip(again.nodes, unit_config.nodes):
        assert a == b


def test_coupling_matrix_symmetric_after_load(unit_config):
    j = unit_config.couplings
    np.testing.assert_array_equal(j, j.T)
    assert np.all(np.diag(j) == 0)


def test_validate_unit_clean(unit_config):
    assert validate(unit_config) == []


def test_validate_band_warnings():
    cfg = loads_config(MINIMAL.replace("e_l: 0.6", "e_l: 2.0"))
    warnings = validate(cfg)
    assert any("EL" in w and "outside design band" in w for w in warnings)


def test_validate_fluxonium_regime_warning():
    cfg = loads_config(MINIMAL.replace("e_j: 4.2", "e_j: 0.5"))
    warnings = validate(cfg)
    assert any("fluxonium regime" in w for w in warnings)


def test_validate_symmetric_junction_warning():
    cfg = loads_config("""
nodes:
  - {name: C1, kind: coupler, e_c: 0.22, e_j1: 17.0, e_j2: 17.0}
""")
    assert any("symmetric junctions" in w for w in validate(cfg))


def test_with_flux_immutable(unit_config):
    shifted = unit_config.with_flux({"C23": 0.5})
    assert shifted.node("C23").flux_ext == 0.5
    assert unit_config.node("C23").flux_ext == 0.0
    with pytest.raises(ConfigError):
        unit_config.with_flux({"nope": 0.1})


def test_readout_and_gate_noise_blocks():
    text = MINIMAL + """
readout:
  - {qubit: Q1, p_ge: 0.02, p_eg: 0.05}
gate_noise:
  cz: 0.01
"""
    cfg = loads_config(text)
    assert cfg.readout["Q1"].p_ge == 0.02
    assert cfg.gate_noise["cz"] == 0.01


def test_chain_between(unit_config):
    assert unit_config.chain_between("Q1", "Q2") == ["Q1", "C12", "Q2"]
    assert unit_config.chain_between("Q3", "Q2") == ["Q2", "C23", "Q3"]
