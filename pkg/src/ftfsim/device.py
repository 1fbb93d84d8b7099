"""Device parameter model for a fluxonium / transmon-coupler chain.

Energies are stored in h*GHz and external fluxes in units of Phi0
throughout; these are the units used in every table of the design data,
and they keep user-facing files free of 2*pi bookkeeping.

Coupling coefficients are interpreted as charge-charge couplings
J_ij * n_i * n_j (the chain is capacitively coupled), with the signed
values taken verbatim from the config file.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from .errors import ConfigError

# Design bands for the unit cell (h*GHz). Parameters outside these
# ranges are legal but trigger validation warnings.
FLUXONIUM_BANDS = {"e_l": (0.55, 0.70), "e_c": (1.0, 1.3), "e_j": (4.0, 5.0)}
COUPLER_BANDS = {"e_c": (0.21, 0.23), "e_j1": (16.5, 17.0), "e_j2": (28.0, 28.5)}


@dataclass(frozen=True)
class FluxoniumParams:
    """Single fluxonium: small junction shunted by a large inductance."""

    name: str
    e_c: float
    e_j: float
    e_l: float
    flux_ext: float = 0.5
    t1: float | None = None       # us
    t2_echo: float | None = None  # us

    kind = "fluxonium"

    def __post_init__(self):
        for attr in ("e_c", "e_j", "e_l"):
            if getattr(self, attr) <= 0:
                raise ConfigError(f"{self.name}: {attr} must be strictly positive")


@dataclass(frozen=True)
class TransmonCouplerParams:
    """Flux-tunable transmon coupler with two asymmetric junctions."""

    name: str
    e_c: float
    e_j1: float
    e_j2: float
    flux_ext: float = 0.0

    kind = "coupler"

    def __post_init__(self):
        for attr in ("e_c", "e_j1", "e_j2"):
            if getattr(self, attr) <= 0:
                raise ConfigError(f"{self.name}: {attr} must be strictly positive")


Node = FluxoniumParams | TransmonCouplerParams


@dataclass(frozen=True)
class ReadoutParams:
    """Assignment-error probabilities for one qubit: p(read e | true g) etc."""

    qubit: str
    p_ge: float = 0.0  # p(read e | true g)
    p_eg: float = 0.0  # p(read g | true e)

    def __post_init__(self):
        for attr in ("p_ge", "p_eg"):
            v = getattr(self, attr)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"readout {self.qubit}: {attr} must lie in [0, 1]")


@dataclass(frozen=True)
class DeviceConfig:
    """Validated, immutable description of one chain.

    ``couplings`` is a symmetric (n, n) matrix of charge-coupling
    coefficients in h*GHz, ordered like ``nodes``. Optional noise fields
    default to ideal (infinite coherence, perfect readout) when absent.
    """

    nodes: tuple[Node, ...]
    couplings: np.ndarray
    readout: dict[str, ReadoutParams] = field(default_factory=dict)
    gate_noise: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        names = [n.name for n in self.nodes]
        if len(set(names)) != len(names):
            raise ConfigError("node names must be unique")
        j = np.asarray(self.couplings, dtype=float)
        n = len(self.nodes)
        if j.shape != (n, n):
            raise ConfigError(f"couplings matrix must be {n}x{n}, got {j.shape}")
        if not np.allclose(j, j.T, rtol=0, atol=0):
            raise ConfigError("asymmetric coupling matrix")
        if np.any(np.diag(j) != 0):
            raise ConfigError("coupling matrix diagonal must be zero")
        object.__setattr__(self, "couplings", j)
        self.couplings.setflags(write=False)

    @property
    def names(self) -> list[str]:
        return [n.name for n in self.nodes]

    def node(self, name: str) -> Node:
        for n in self.nodes:
            if n.name == name:
                return n
        raise ConfigError(f"no node named {name!r}")

    def index(self, name: str) -> int:
        return self.names.index(self.node(name).name)

    def coupling(self, a: str, b: str) -> float:
        return float(self.couplings[self.index(a), self.index(b)])

    def qubit_names(self) -> list[str]:
        return [n.name for n in self.nodes if n.kind == "fluxonium"]

    def chain_between(self, a: str, b: str) -> list[str]:
        """Contiguous slice of the node chain spanning two nodes, inclusive."""
        ia, ib = self.index(a), self.index(b)
        lo, hi = min(ia, ib), max(ia, ib)
        return self.names[lo : hi + 1]

    def with_flux(self, flux_point: dict[str, float]) -> "DeviceConfig":
        """Copy of the config with selected node fluxes replaced."""
        unknown = set(flux_point) - set(self.names)
        if unknown:
            raise ConfigError(f"flux override for unknown node(s): {sorted(unknown)}")
        new_nodes = tuple(
            replace(n, flux_ext=float(flux_point[n.name])) if n.name in flux_point else n
            for n in self.nodes
        )
        return DeviceConfig(new_nodes, self.couplings, self.readout, self.gate_noise)


def _node_from_dict(raw: dict) -> Node:
    try:
        kind = raw["kind"]
        name = raw["name"]
    except KeyError as exc:
        raise ConfigError(f"node entry missing required key {exc}") from None
    known = {
        "fluxonium": {"name", "kind", "e_c", "e_j", "e_l", "flux_ext", "t1", "t2_echo"},
        "coupler": {"name", "kind", "e_c", "e_j1", "e_j2", "flux_ext"},
    }
    if kind not in known:
        raise ConfigError(f"node {name!r}: unknown kind {kind!r}")
    extra = set(raw) - known[kind]
    if extra:
        raise ConfigError(f"node {name!r}: unknown keys {sorted(extra)}")
    fields_ = {k: v for k, v in raw.items() if k != "kind"}
    try:
        if kind == "fluxonium":
            return FluxoniumParams(**fields_)
        return TransmonCouplerParams(**fields_)
    except TypeError as exc:
        raise ConfigError(f"node {name!r}: {exc}") from None


def _parse(data: dict) -> DeviceConfig:
    if not isinstance(data, dict) or "nodes" not in data:
        raise ConfigError("config must be a mapping with a 'nodes' list")
    nodes = tuple(_node_from_dict(d) for d in data["nodes"])
    names = [n.name for n in nodes]
    if len(set(names)) != len(names):
        raise ConfigError("node names must be unique")
    n = len(nodes)
    j = np.zeros((n, n))
    seen: dict[frozenset, float] = {}
    for entry in data.get("couplings", []) or []:
        try:
            a, b, val = entry["a"], entry["b"], float(entry["j"])
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad coupling entry {entry!r}: {exc}") from None
        if a not in names or b not in names:
            raise ConfigError(f"coupling references unknown node: {a!r}-{b!r}")
        if a == b:
            raise ConfigError(f"coupling {a!r}-{b!r} must reference two distinct nodes")
        key = frozenset((a, b))
        if key in seen and seen[key] != val:
            raise ConfigError(f"asymmetric coupling: {a!r}-{b!r} given twice with different values")
        seen[key] = val
        ia, ib = names.index(a), names.index(b)
        j[ia, ib] = j[ib, ia] = val
    readout = {}
    for entry in data.get("readout", []) or []:
        r = ReadoutParams(**entry)
        if r.qubit not in names:
            raise ConfigError(f"readout references unknown node {r.qubit!r}")
        readout[r.qubit] = r
    gate_noise = dict(data.get("gate_noise", {}) or {})
    for gate, p in gate_noise.items():
        if not 0.0 <= float(p) <= 1.0:
            raise ConfigError(f"gate_noise[{gate!r}] must lie in [0, 1]")
    return DeviceConfig(nodes, j, readout, gate_noise)


def load_config(path) -> DeviceConfig:
    """Load and validate a device config from a YAML file."""
    with open(path, "r") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
    return _parse(data)


def loads_config(text: str) -> DeviceConfig:
    try:
        data = yaml.safe_load(io.StringIO(text))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config text: {exc}") from None
    return _parse(data)


def serialize(config: DeviceConfig) -> str:
    """Render a config back to its YAML file form (round-trips with load)."""
    nodes = []
    for n in config.nodes:
        if n.kind == "fluxonium":
            d = {"name": n.name, "kind": "fluxonium", "e_c": n.e_c, "e_j": n.e_j,
                 "e_l": n.e_l, "flux_ext": n.flux_ext}
            if n.t1 is not None:
                d["t1"] = n.t1
            if n.t2_echo is not None:
                d["t2_echo"] = n.t2_echo
        else:
            d = {"name": n.name, "kind": "coupler", "e_c": n.e_c, "e_j1": n.e_j1,
                 "e_j2": n.e_j2, "flux_ext": n.flux_ext}
        nodes.append(d)
    couplings = []
    names = config.names
    for i in range(len(names)):
        for k in range(i + 1, len(names)):
            if config.couplings[i, k] != 0.0:
                couplings.append({"a": names[i], "b": names[k],
                                  "j": float(config.couplings[i, k])})
    data: dict = {"nodes": nodes, "couplings": couplings}
    if config.readout:
        data["readout"] = [
            {"qubit": r.qubit, "p_ge": r.p_ge, "p_eg": r.p_eg}
            for r in config.readout.values()
        ]
    if config.gate_noise:
        data["gate_noise"] = dict(config.gate_noise)
    return yaml.safe_dump(data, sort_keys=False)


def validate(config: DeviceConfig) -> list[str]:
    """Check parameters against the unit-cell design bands.

    Returns a list of human-readable warnings; an empty list means the
    device sits fully inside the regime the architecture was designed for.
    Structural problems raise ConfigError at load time instead.
    """
    warnings: list[str] = []
    for n in config.nodes:
        if n.kind == "fluxonium":
            if n.e_j <= n.e_l:
                warnings.append(f"{n.name}: E_J <= E_L, outside the fluxonium regime")
            for attr, (lo, hi) in FLUXONIUM_BANDS.items():
                v = getattr(n, attr)
                if not lo <= v <= hi:
                    warnings.append(
                        f"{n.name}: {attr.upper().replace('_', '')} = {v} outside design band "
                        f"[{lo}, {hi}] GHz"
                    )
            if n.t1 is not None and n.t1 <= 0:
                warnings.append(f"{n.name}: nonpositive t1")
            if n.t2_echo is not None and n.t2_echo <= 0:
                warnings.append(f"{n.name}: nonpositive t2_echo")
        else:
            if n.e_j1 == n.e_j2:
                warnings.append(f"{n.name}: symmetric junctions, no tunability asymmetry")
            for attr, (lo, hi) in COUPLER_BANDS.items():
                v = getattr(n, attr)
                if not lo <= v <= hi:
                    warnings.append(
                        f"{n.name}: {attr.upper().replace('_', '')} = {v} outside design band "
                        f"[{lo}, {hi}] GHz"
                    )
    return warnings
