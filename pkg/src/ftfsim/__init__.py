"""Fluxonium-transmon-fluxonium chain simulator and analysis toolkit."""

__version__ = "0.1.0"

from .device import (DeviceConfig, FluxoniumParams, TransmonCouplerParams,
                     load_config, loads_config, serialize, validate)
from .hamiltonian import (ElementBasis, OperatorSet, SpectrumResult,
                          build_composite, fluxonium_hamiltonian, label_states,
                          transmon_ej_eff, transmon_hamiltonian)

__all__ = [
    "__version__",
    "DeviceConfig", "FluxoniumParams", "TransmonCouplerParams",
    "load_config", "loads_config", "serialize", "validate",
    "ElementBasis", "OperatorSet", "SpectrumResult",
    "build_composite", "fluxonium_hamiltonian", "label_states",
    "transmon_ej_eff", "transmon_hamiltonian",
]
