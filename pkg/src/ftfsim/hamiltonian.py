"""Single-element and composite Hamiltonians for the FTF chain.

Conventions (h = 1, energies in GHz, fluxes in Phi0):

  fluxonium   H = 4 E_C n^2 + (E_L/2) phi^2 - E_J cos(phi - 2*pi*flux)
  coupler     H = 4 E_C n^2 - E_J(flux) cos(phi),
              E_J(flux) = (E_J1+E_J2) sqrt(cos^2(pi*flux) + d^2 sin^2(pi*flux)),
              d = (E_J2-E_J1)/(E_J1+E_J2)
  coupling    H_int = sum_{i<j} J_ij n_i n_j

The inductor-gauge fluxonium form puts the half-flux sweet spot at
flux_ext = 0.5. Charge operators are returned in a gauge where they are
purely imaginary in every kept eigenbasis (natural for the fluxonium;
enforced for the transmon through its charge-parity symmetry), which
makes every assembled composite Hamiltonian real symmetric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .device import DeviceConfig, FluxoniumParams, TransmonCouplerParams
from .errors import ConvergenceError, DimensionError, LabelingError, ValidationError

DIMENSION_GUARD = 20_000

# Level index -> bare label character. Beyond 'h' the numeric index is used.
_LEVEL_CHARS = "gefh"


def level_char(k: int) -> str:
    return _LEVEL_CHARS[k] if k < len(_LEVEL_CHARS) else str(k)


def char_level(c: str) -> int:
    if c in _LEVEL_CHARS:
        return _LEVEL_CHARS.index(c)
    return int(c)


@dataclass(frozen=True)
class ElementBasis:
    """Numerical basis used to diagonalize one circuit element."""

    kind: str  # fluxonium-oscillator | transmon-charge | flux-grid
    dimension: int
    truncation_levels: int
    grid_span: tuple[float, float] = (-6 * math.pi, 6 * math.pi)

    def __post_init__(self):
        if self.kind not in ("fluxonium-oscillator", "transmon-charge", "flux-grid"):
            raise ValidationError(f"unknown basis kind {self.kind!r}")
        if self.dimension <= 0 or self.truncation_levels <= 0:
            raise ValidationError("basis dimensions must be positive")
        if self.truncation_levels > self.dimension:
            raise ValidationError("truncation_levels exceeds basis dimension")

    @classmethod
    def oscillator(cls, dimension: int = 120, keep: int = 6) -> "ElementBasis":
        return cls("fluxonium-oscillator", dimension, keep)

    @classmethod
    def charge(cls, cutoff: int = 40, keep: int = 5) -> "ElementBasis":
        return cls("transmon-charge", 2 * cutoff + 1, keep)

    @classmethod
    def flux_grid(cls, points: int = 2001, keep: int = 6,
                  span: tuple[float, float] = (-6 * math.pi, 6 * math.pi)) -> "ElementBasis":
        return cls("flux-grid", points, keep, span)


@dataclass(frozen=True)
class ElementOperators:
    """Kept eigenenergies and operators of a single element.

    Energies are ground-referenced (E0 = 0). Operators are expressed in
    the kept eigenbasis; charge_op is purely imaginary Hermitian.
    ``eigvecs`` columns are the kept eigenvectors in the underlying
    numerical basis (gauge factors included), used to project states
    between flux points.
    """

    energies: np.ndarray
    charge_op: np.ndarray
    phase_op: np.ndarray | None = None
    eigvecs: np.ndarray | None = None

    @property
    def f_ge(self) -> float:
        return float(self.energies[1] - self.energies[0])

    @property
    def f_ef(self) -> float:
        return float(self.energies[2] - self.energies[1])

    @property
    def f_gf(self) -> float:
        return float(self.energies[2] - self.energies[0])


def _check_tail_weight(evec: np.ndarray, tail: int = 10, tol: float = 1e-6):
    w = float(np.sum(np.abs(evec[-tail:]) ** 2))
    if w > tol:
        raise ConvergenceError(
            f"basis too small: highest kept eigenvector has tail weight {w:.2e}"
        )


def fluxonium_hamiltonian(params: FluxoniumParams, basis: ElementBasis | None = None) -> ElementOperators:
    """Diagonalize one fluxonium; returns kept energies, charge and phase ops.

    The oscillator basis (of the E_C/E_L quadratic part) is the production
    path; the flux-grid basis is the independent finite-difference oracle.
    """
    if basis is None:
        basis = ElementBasis.oscillator()
    if basis.kind == "flux-grid":
        return _fluxonium_flux_grid(params, basis)
    if basis.kind != "fluxonium-oscillator":
        raise ValidationError(f"basis kind {basis.kind!r} not valid for a fluxonium")

    dim, keep = basis.dimension, basis.truncation_levels
    sq = np.sqrt(np.arange(1, dim))
    a = np.diag(sq, 1)
    phi_zpf = (2.0 * params.e_c / params.e_l) ** 0.25
    n_zpf = 1.0 / (2.0 * phi_zpf)
    phi = phi_zpf * (a + a.T)
    n_im = n_zpf * (a.T - a)  # charge operator is 1j * n_im

    # cos(phi - theta) evaluated exactly on the truncated phi spectrum
    x, v = np.linalg.eigh(phi)
    theta = 2.0 * math.pi * params.flux_ext
    cos_term = (v * np.cos(x - theta)) @ v.T

    h = 4.0 * params.e_c * (n_im @ n_im.T) + 0.5 * params.e_l * (phi @ phi) \
        - params.e_j * cos_term
    evals, evecs = np.linalg.eigh(h)
    _check_tail_weight(evecs[:, keep - 1])
    v_keep = evecs[:, :keep]
    energies = evals[:keep] - evals[0]
    charge = 1j * (v_keep.T @ n_im @ v_keep)
    phase = v_keep.T @ phi @ v_keep
    return ElementOperators(energies, charge, phase, eigvecs=v_keep)


def _fluxonium_flux_grid(params: FluxoniumParams, basis: ElementBasis) -> ElementOperators:
    npts, keep = basis.dimension, basis.truncation_levels
    lo, hi = basis.grid_span
    grid = np.linspace(lo, hi, npts)
    dphi = grid[1] - grid[0]
    pot = 0.5 * params.e_l * grid ** 2 \
        - params.e_j * np.cos(grid - 2.0 * math.pi * params.flux_ext)
    diag = 8.0 * params.e_c / dphi ** 2 + pot
    off = np.full(npts - 1, -4.0 * params.e_c / dphi ** 2)
    evals, evecs = eigh_tridiagonal(diag, off, select="i", select_range=(0, keep - 1))
    _check_tail_weight(evecs[:, keep - 1], tail=max(10, npts // 100))

    # n = -i d/dphi via central differences; antisymmetric -> -i*D Hermitian
    d_vecs = np.zeros_like(evecs)
    d_vecs[1:-1] = (evecs[2:] - evecs[:-2]) / (2.0 * dphi)
    charge = 1j * (evecs.T @ d_vecs)
    charge = 0.5 * (charge + charge.conj().T)
    phase = evecs.T @ (grid[:, None] * evecs)
    return ElementOperators(evals - evals[0], charge, phase, eigvecs=evecs)


def transmon_ej_eff(params: TransmonCouplerParams, flux: float | None = None) -> float:
    """Effective Josephson energy of the asymmetric two-junction loop."""
    if flux is None:
        flux = params.flux_ext
    total = params.e_j1 + params.e_j2
    d = (params.e_j2 - params.e_j1) / total
    x = math.pi * flux
    return total * math.sqrt(math.cos(x) ** 2 + (d * math.sin(x)) ** 2)


def transmon_hamiltonian(params: TransmonCouplerParams, basis: ElementBasis | None = None) -> ElementOperators:
    """Diagonalize the coupler in the charge basis at its effective E_J.

    The returned charge operator carries a parity gauge i^sigma per
    eigenstate, which makes it purely imaginary (exactly, since n only
    connects states of opposite charge parity at zero offset charge).
    """
    if basis is None:
        basis = ElementBasis.charge()
    if basis.kind != "transmon-charge":
        raise ValidationError(f"basis kind {basis.kind!r} not valid for a transmon coupler")
    dim, keep = basis.dimension, basis.truncation_levels
    if dim % 2 == 0:
        raise ValidationError("transmon-charge basis dimension must be odd (cutoff symmetric)")
    cutoff = (dim - 1) // 2
    charge_numbers = np.arange(-cutoff, cutoff + 1, dtype=float)
    ej = transmon_ej_eff(params)
    diag = 4.0 * params.e_c * charge_numbers ** 2
    off = np.full(dim - 1, -0.5 * ej)
    evals, evecs = eigh_tridiagonal(diag, off, select="i", select_range=(0, keep - 1))
    _check_tail_weight(evecs[:, keep - 1], tail=max(4, dim // 10))

    n_eig = evecs.T @ (charge_numbers[:, None] * evecs)
    # parity of each kept eigenstate under n -> -n
    flipped = evecs[::-1]
    parity = np.array([1.0 if float(evecs[:, k] @ flipped[:, k]) > 0 else -1.0
                       for k in range(keep)])
    gauge = np.where(parity > 0, 1.0, 1.0j)
    n_gauged = np.conj(gauge)[:, None] * n_eig * gauge[None, :]
    charge = 1j * n_gauged.imag
    resid = float(np.max(np.abs(n_gauged.real)))
    if resid > 1e-9 * max(1.0, float(np.max(np.abs(n_eig)))):
        raise ConvergenceError(f"charge operator not parity-structured (residual {resid:.2e})")
    return ElementOperators(evals - evals[0], charge, eigvecs=evecs * gauge[None, :])


def element_operators(node, basis: ElementBasis | None = None, keep: int | None = None) -> ElementOperators:
    """Diagonalize any chain element with a default (or given) basis."""
    if node.kind == "fluxonium":
        b = basis or ElementBasis.oscillator(keep=keep or 6)
        if keep is not None and basis is None:
            b = ElementBasis.oscillator(keep=keep)
        return fluxonium_hamiltonian(node, b)
    b = basis or ElementBasis.charge(keep=keep or 5)
    if keep is not None and basis is None:
        b = ElementBasis.charge(keep=keep)
    return transmon_hamiltonian(node, b)


@dataclass
class OperatorSet:
    """Composite Hamiltonian, spectrum and lifted charge operators.

    The product basis is the tensor product of kept single-element
    eigenbases, ordered like ``names``. ``eigvecs`` columns express
    dressed eigenstates in that product basis; ``energies`` are
    ground-referenced.
    """

    names: tuple[str, ...]
    levels: tuple[int, ...]
    hamiltonian: np.ndarray
    energies: np.ndarray
    eigvecs: np.ndarray
    bare_energies: dict[str, np.ndarray]
    element_charge_ops: dict[str, np.ndarray]
    flux_point: dict[str, float]
    config: DeviceConfig | None = None
    ground_energy: float = 0.0
    element_eigvecs: dict[str, np.ndarray] = field(default_factory=dict)
    _lifted: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return int(np.prod(self.levels))

    def bare_index(self, label: str) -> int:
        """Flat product-basis index of a bare label such as 'egg'."""
        parts = [char_level(c) for c in label]
        if len(parts) != len(self.levels):
            raise LabelingError(f"label {label!r} has {len(parts)} slots, expected {len(self.levels)}")
        for lv, p in zip(self.levels, parts):
            if p >= lv:
                raise LabelingError(f"label {label!r} exceeds kept levels {self.levels}")
        return int(np.ravel_multi_index(parts, self.levels))

    def bare_label(self, index: int) -> str:
        return "".join(level_char(k) for k in np.unravel_index(index, self.levels))

    def charge_op(self, name: str, frame: str = "eigen") -> np.ndarray:
        """Charge operator of one node, lifted to the composite space."""
        key = (name, frame)
        if key not in self._lifted:
            if name not in self.names:
                raise ValidationError(f"node {name!r} not in subsystem {self.names}")
            mats = [self.element_charge_ops[nm] if nm == name else np.eye(lv)
                    for nm, lv in zip(self.names, self.levels)]
            op = mats[0]
            for m in mats[1:]:
                op = np.kron(op, m)
            if frame == "eigen":
                op = self.eigvecs.conj().T @ op @ self.eigvecs
            elif frame != "product":
                raise ValidationError(f"unknown frame {frame!r}")
            self._lifted[key] = op
        return self._lifted[key]


def build_composite(
    config: DeviceConfig,
    subsystem: list[str] | tuple[str, ...] | None = None,
    levels_per_node: dict[str, int] | None = None,
    flux_point: dict[str, float] | None = None,
    bases: dict[str, ElementBasis] | None = None,
) -> OperatorSet:
    """Assemble and diagonalize H = sum_k H_k + sum_{i<j} J_ij n_i n_j.

    ``subsystem`` selects a contiguous or arbitrary set of named nodes
    (defaults to all); couplings outside the subsystem are dropped.
    """
    if subsystem is None:
        subsystem = config.names
    names = tuple(subsystem)
    for nm in names:
        config.node(nm)
    if len(set(names)) != len(names):
        raise ValidationError("subsystem contains duplicate node names")
    if flux_point:
        config = config.with_flux(flux_point)

    levels_per_node = levels_per_node or {}
    elems: dict[str, ElementOperators] = {}
    levels: list[int] = []
    for nm in names:
        node = config.node(nm)
        keep = levels_per_node.get(nm, 6 if node.kind == "fluxonium" else 5)
        if keep < 2:
            raise ValidationError(f"levels_per_node[{nm!r}] must be >= 2")
        basis = (bases or {}).get(nm)
        elems[nm] = element_operators(node, basis=basis, keep=keep)
        levels.append(keep)

    dim = int(np.prod(levels))
    if dim > DIMENSION_GUARD:
        raise DimensionError(
            f"composite dimension {dim} exceeds the guard of {DIMENSION_GUARD}; "
            "reduce levels_per_node or the subsystem size"
        )

    eyes = [np.eye(lv) for lv in levels]

    def lift(mats_by_pos: dict[int, np.ndarray]) -> np.ndarray:
        op = None
        for pos in range(len(names)):
            m = mats_by_pos.get(pos, eyes[pos])
            op = m if op is None else np.kron(op, m)
        return op

    h = np.zeros((dim, dim))
    for pos, nm in enumerate(names):
        h += lift({pos: np.diag(elems[nm].energies)}).real
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            jij = config.coupling(names[i], names[j])
            if jij == 0.0:
                continue
            term = lift({i: elems[names[i]].charge_op, j: elems[names[j]].charge_op})
            if np.max(np.abs(term.imag)) > 1e-9 * max(1.0, np.max(np.abs(term.real))):
                raise ConvergenceError("coupling term not real; charge gauge broken")
            h += jij * term.real

    asym = float(np.max(np.abs(h - h.T)))
    if asym > 1e-12 * max(1.0, float(np.max(np.abs(h)))):
        raise ConvergenceError(f"assembled Hamiltonian asymmetry {asym:.2e}")
    h = 0.5 * (h + h.T)

    evals, evecs = np.linalg.eigh(h)
    fluxes = {nm: float(config.node(nm).flux_ext) for nm in names}
    return OperatorSet(
        names=names,
        levels=tuple(levels),
        hamiltonian=h,
        energies=evals - evals[0],
        eigvecs=evecs,
        bare_energies={nm: elems[nm].energies for nm in names},
        element_charge_ops={nm: elems[nm].charge_op for nm in names},
        flux_point=fluxes,
        config=config,
        ground_energy=float(evals[0]),
        element_eigvecs={nm: elems[nm].eigvecs for nm in names},
    )


@dataclass
class SpectrumResult:
    """Labeled composite spectrum at one flux point.

    Each kept eigenstate carries the bare product label maximizing its
    squared overlap; the assignment is a bijection. States whose best
    overlap is <= 0.5 are flagged ambiguous (their label is still the
    greedy assignment, typically near an avoided crossing).
    """

    energies: np.ndarray
    labels: list[str]
    overlaps: np.ndarray
    ambiguous: np.ndarray
    flux_point: dict[str, float]

    def __post_init__(self):
        if np.any(np.diff(self.energies) < -1e-12):
            raise ValidationError("spectrum energies must be ascending")
        if len(set(self.labels)) != len(self.labels):
            raise ValidationError("labels must be unique within one result")

    def index_of(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LabelingError(f"no state labeled {label!r}") from None

    def energy(self, label: str, strict: bool = False) -> float:
        i = self.index_of(label)
        if strict and self.ambiguous[i]:
            raise LabelingError(f"state {label!r} is ambiguous at this flux point")
        return float(self.energies[i])

    def has(self, label: str) -> bool:
        return label in self.labels

    def to_dict(self) -> dict:
        return {
            "energies": [float(e) for e in self.energies],
            "labels": list(self.labels),
            "overlaps": [float(o) for o in self.overlaps],
            "ambiguous": [bool(a) for a in self.ambiguous],
            "flux_point": {k: float(v) for k, v in self.flux_point.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpectrumResult":
        return cls(
            energies=np.asarray(d["energies"], dtype=float),
            labels=list(d["labels"]),
            overlaps=np.asarray(d["overlaps"], dtype=float),
            ambiguous=np.asarray(d["ambiguous"], dtype=bool),
            flux_point=dict(d["flux_point"]),
        )


def label_states(operators: OperatorSet, ambiguity_threshold: float = 0.5) -> SpectrumResult:
    """Assign bare product labels to dressed states by maximum overlap.

    Greedy over descending overlap with conflict resolution by the
    next-best available pairing, so the result is a bijection between
    dressed states and bare product labels.
    """
    ov = np.abs(operators.eigvecs) ** 2  # [bare, dressed]
    dim = ov.shape[0]
    assigned_bare = np.full(dim, -1)
    assigned_overlap = np.zeros(dim)
    bare_taken = np.zeros(dim, dtype=bool)
    dressed_taken = np.zeros(dim, dtype=bool)

    flat = np.flatnonzero(ov.ravel() > 1e-6)
    order = flat[np.argsort(ov.ravel()[flat])[::-1]]
    n_done = 0
    for f in order:
        b, d = divmod(int(f), dim)
        if bare_taken[b] or dressed_taken[d]:
            continue
        assigned_bare[d] = b
        assigned_overlap[d] = ov[b, d]
        bare_taken[b] = True
        dressed_taken[d] = True
        n_done += 1
        if n_done == dim:
            break
    if n_done < dim:
        rest_d = np.flatnonzero(~dressed_taken)
        rest_b = np.flatnonzero(~bare_taken)
        for d, b in zip(rest_d, rest_b):
            assigned_bare[d] = b
            assigned_overlap[d] = ov[b, d]

    labels = [operators.bare_label(int(b)) for b in assigned_bare]
    ambiguous = assigned_overlap <= ambiguity_threshold
    return SpectrumResult(
        energies=operators.energies.copy(),
        labels=labels,
        overlaps=assigned_overlap,
        ambiguous=ambiguous,
        flux_point=dict(operators.flux_point),
    )
