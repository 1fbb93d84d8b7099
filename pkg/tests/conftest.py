import os

import numpy as np
import pytest

from ftfsim.device import load_config
from ftfsim.hamiltonian import OperatorSet, build_composite, label_states

CONFIG_PATH = os.path.join(os.path.dirname(__file__), "..", "configs", "unit_s1.yaml")


@pytest.fixture(scope="session")
def unit_config():
    return load_config(CONFIG_PATH)


@pytest.fixture(scope="session")
def qcq_on(unit_config):
    """Q2-C23-Q3 at the coupling-ON point, shared across tests."""
    ops = build_composite(unit_config, ["Q2", "C23", "Q3"],
                          {"Q2": 6, "C23": 5, "Q3": 6}, flux_point={"C23": 0.5})
    return ops, label_states(ops)


@pytest.fixture(scope="session")
def qcq_off(unit_config):
    ops = build_composite(unit_config, ["Q2", "C23", "Q3"],
                          {"Q2": 6, "C23": 5, "Q3": 6})
    return ops, label_states(ops)


def two_level_operator_set(f01: float = 0.3, melem: float = 0.8) -> OperatorSet:
    """Synthetic driven two-level system with an imaginary charge operator."""
    n = np.array([[0.0, -1j * melem], [1j * melem, 0.0]])
    return OperatorSet(
        names=("q",), levels=(2,),
        hamiltonian=np.diag([0.0, f01]),
        energies=np.array([0.0, f01]),
        eigvecs=np.eye(2),
        bare_energies={"q": np.array([0.0, f01])},
        element_charge_ops={"q": n},
        flux_point={"q": 0.5},
        element_eigvecs={"q": np.eye(2)},
    )


def uncoupled_pair_operator_set(f1: float = 0.25, f2: float = 0.31,
                                zz: float = 0.0) -> OperatorSet:
    """Two bare qubits (t, c) with an optional diagonal ZZ term injected."""
    h = np.diag([0.0, f2, f1, f1 + f2 + zz])
    pauli = np.array([[0.0, -1j], [1j, 0.0]])
    return OperatorSet(
        names=("t", "c"), levels=(2, 2),
        hamiltonian=h,
        energies=np.diag(h).copy(),
        eigvecs=np.eye(4),
        bare_energies={"t": np.array([0.0, f1]), "c": np.array([0.0, f2])},
        element_charge_ops={"t": pauli, "c": pauli},
        flux_point={},
        element_eigvecs={"t": np.eye(2), "c": np.eye(2)},
    )
