"""Gate-level chain simulator: GHZ compilation, parity analysis, fidelity
estimators and small-system tomography.

Native gates are X90, X180, CZ and VirtualZ(theta); everything else is a
composite. Virtual-Z gates are frame updates and therefore noiseless by
construction; depolarizing noise attaches to physical gates only, and
initialization error enters before the first layer. Bit convention:
qubit 0 is the leftmost character of a bitstring, 0 = g and 1 = e, and
basis-state indices order qubit 0 as the most significant bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cliffords import CZ, EYE2, X90, X180
from .errors import DimensionError, ValidationError
from .records import MeasurementRecord

STATEVECTOR_QUBIT_CAP = 20
DENSITY_QUBIT_CAP = 12

PHYSICAL_KINDS = ("x90", "x180", "cz")
GATE_KINDS = PHYSICAL_KINDS + ("vz",)


@dataclass(frozen=True)
class Gate:
    kind: str
    targets: tuple[int, ...]
    angle: float = 0.0

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValidationError(f"unknown gate kind {self.kind!r}")
        n = 2 if self.kind == "cz" else 1
        if len(self.targets) != n:
            raise ValidationError(f"{self.kind} takes {n} target(s)")

    @property
    def is_physical(self) -> bool:
        return self.kind in PHYSICAL_KINDS

    def unitary(self) -> np.ndarray:
        if self.kind == "x90":
            return X90
        if self.kind == "x180":
            return X180
        if self.kind == "vz":
            return np.diag([1.0, np.exp(1j * self.angle)])
        return CZ


def x90(q: int) -> Gate:
    return Gate("x90", (q,))


def x180(q: int) -> Gate:
    return Gate("x180", (q,))


def vz(q: int, angle: float) -> Gate:
    return Gate("vz", (q,), angle)


def rz(q: int, angle: float) -> Gate:
    """Alias: virtual-Z rotations implement Rz up to global phase."""
    return Gate("vz", (q,), angle)


def cz(a: int, b: int) -> Gate:
    return Gate("cz", (a, b))


def hadamard_seq(q: int) -> list[Gate]:
    """H = VZ(pi/2) X90 VZ(pi/2), exactly (one physical pulse)."""
    return [vz(q, math.pi / 2), x90(q), vz(q, math.pi / 2)]


def ry90_seq(q: int) -> list[Gate]:
    """Ry(+pi/2) = VZ(pi/2) . X90 . VZ(-pi/2) (time order left to right)."""
    return [vz(q, -math.pi / 2), x90(q), vz(q, math.pi / 2)]


def ry90m_seq(q: int) -> list[Gate]:
    """Ry(-pi/2) as Ry(-pi) then Ry(+pi/2): three rotations per CNOT
    target in total, matching the native-gate accounting of the
    theory-fidelity product (two X90 and one X180 plus frame updates)."""
    return [vz(q, math.pi), x180(q)] + ry90_seq(q)


@dataclass
class Circuit:
    """Layered gate list on a nearest-neighbor chain."""

    n_qubits: int
    layers: list[list[Gate]] = field(default_factory=list)

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValidationError("circuit needs at least one qubit")
        for layer in self.layers:
            self._check_layer(layer)

    def _check_layer(self, layer: list[Gate]):
        used: set[int] = set()
        for g in layer:
            for t in g.targets:
                if not 0 <= t < self.n_qubits:
                    raise ValidationError(f"gate target {t} outside circuit")
                if t in used:
                    raise ValidationError("gates within one layer must act on disjoint qubits")
                used.add(t)
            if g.kind == "cz" and abs(g.targets[0] - g.targets[1]) != 1:
                raise ValidationError("CZ targets must be nearest neighbors on the chain")

    def add_layer(self, gates: list[Gate]) -> "Circuit":
        self._check_layer(gates)
        self.layers.append(list(gates))
        return self

    def add_sequences(self, seqs: dict[int, list[Gate]]) -> "Circuit":
        """Zip per-qubit gate sequences into parallel layers.

        Sequence step i of every qubit lands in the same layer, so the
        disjointness invariant holds while composites of different
        lengths stay aligned to their own qubit.
        """
        depth = max((len(s) for s in seqs.values()), default=0)
        for i in range(depth):
            layer = [s[i] for s in seqs.values() if i < len(s)]
            if layer:
                self.add_layer(layer)
        return self

    @property
    def gates(self):
        for layer in self.layers:
            yield from layer

    def cz_layer_count(self) -> int:
        return sum(1 for layer in self.layers if any(g.kind == "cz" for g in layer))

    def to_dict(self) -> dict:
        return {
            "n_qubits": self.n_qubits,
            "layers": [[[g.kind, list(g.targets), g.angle] for g in layer]
                       for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Circuit":
        layers = [[Gate(kind, tuple(t), angle) for kind, t, angle in layer]
                  for layer in d["layers"]]
        return cls(d["n_qubits"], layers)

    def physical_gate_counts(self) -> dict[str, int]:
        counts = {k: 0 for k in PHYSICAL_KINDS}
        for g in self.gates:
            if g.is_physical:
                counts[g.kind] += 1
        return counts


def compile_ghz(n: int, chain_offset: int = 0, total_qubits: int | None = None) -> Circuit:
    """GHZ preparation from the central qubit outward.

    A Hadamard composite seeds the root; CNOTs (one CZ and three
    single-qubit rotations on the target) spread entanglement to both
    sides in parallel, giving exactly ceil(n/2) CZ layers.
    """
    if n < 2:
        raise ValidationError("GHZ needs at least two qubits")
    total = total_qubits if total_qubits is not None else chain_offset + n
    if chain_offset < 0 or chain_offset + n > total:
        raise ValidationError("chain too short for the requested GHZ block")
    circ = Circuit(total)
    root = chain_offset + (n - 1) // 2
    lo, hi = chain_offset, chain_offset + n - 1
    circ.add_sequences({root: hadamard_seq(root)})

    def cnot_layers(pairs: list[tuple[int, int]]):
        circ.add_sequences({tgt: ry90_seq(tgt) for _, tgt in pairs})
        circ.add_layer([cz(ctrl, tgt) for ctrl, tgt in pairs])
        post = {tgt: ry90m_seq(tgt) for _, tgt in pairs}
        post.update({ctrl: [vz(ctrl, math.pi)] for ctrl, _ in pairs})
        circ.add_sequences(post)

    step = 1
    while True:
        pairs = []
        right_t = root + step
        if right_t <= hi:
            pairs.append((right_t - 1, right_t))
        left_t = root - (step - 1)
        if step >= 2 and left_t >= lo:
            pairs.append((left_t + 1, left_t))
        if not pairs:
            break
        cnot_layers(pairs)
        step += 1
    return circ


@dataclass(frozen=True)
class NoiseModel:
    """Depolarizing-per-gate noise with initialization error.

    ``p1``/``p2`` are uniform-replacement probabilities: with that
    probability the gate's qubits are replaced by the maximally mixed
    state. The average gate fidelity of such a channel is
    1 - p*(d-1)/(d) for subspace dimension d, i.e. F1 = 1 - p1/2 and
    F2 = 1 - 3*p2/4.
    """

    p1: float = 0.0
    p2: float = 0.0
    init_excited: float | tuple[float, ...] = 0.0

    def __post_init__(self):
        probs = [self.p1, self.p2]
        probs += list(self.init_excited) if isinstance(self.init_excited, tuple) \
            else [self.init_excited]
        for p in probs:
            if not 0.0 <= p <= 1.0:
                raise ValidationError("noise probabilities must lie in [0, 1]")

    def is_trivial(self) -> bool:
        eps = self.init_excited if isinstance(self.init_excited, tuple) \
            else (self.init_excited,)
        return self.p1 == 0.0 and self.p2 == 0.0 and not any(eps)

    def epsilon(self, qubit: int) -> float:
        if isinstance(self.init_excited, tuple):
            return self.init_excited[qubit]
        return self.init_excited

    @classmethod
    def from_fidelities(cls, f1: float, f2: float,
                        init_excited=0.0) -> "NoiseModel":
        """Invert the average-fidelity relations F1=1-p1/2, F2=1-3p2/4."""
        return cls(p1=2.0 * (1.0 - f1), p2=4.0 * (1.0 - f2) / 3.0,
                   init_excited=init_excited)


def _apply_unitary_state(state: np.ndarray, u: np.ndarray, targets, n: int) -> np.ndarray:
    k = len(targets)
    t = np.moveaxis(state.reshape([2] * n), list(targets), range(k))
    moved_shape = t.shape
    t = (u @ t.reshape(2 ** k, -1)).reshape(moved_shape)
    return np.moveaxis(t, range(k), list(targets)).reshape(-1)


def _apply_rows(mat: np.ndarray, u: np.ndarray, targets, n: int) -> np.ndarray:
    """Apply u on the row (ket) qubit indices of a (2^n, 2^n) matrix."""
    dim = 2 ** n
    k = len(targets)
    t = np.moveaxis(mat.reshape([2] * n + [dim]), list(targets), range(k))
    moved_shape = t.shape
    t = (u @ t.reshape(2 ** k, -1)).reshape(moved_shape)
    return np.moveaxis(t, range(k), list(targets)).reshape(dim, dim)


def _apply_unitary_density(rho: np.ndarray, u: np.ndarray, targets, n: int) -> np.ndarray:
    rho = _apply_rows(rho, u, targets, n)
    return _apply_rows(rho.conj().T, u, targets, n).conj().T


def _depolarize(rho: np.ndarray, p: float, targets, n: int) -> np.ndarray:
    """Uniform replacement: rho -> (1-p) rho + p * (I/d) (x) Tr_targets(rho)."""
    if p == 0.0:
        return rho
    k = len(targets)
    dim = 2 ** n
    rest = [q for q in range(n) if q not in targets]
    perm = list(targets) + rest
    t = rho.reshape([2] * n + [2] * n)
    t = t.transpose(perm + [n + q for q in perm])
    t = t.reshape(2 ** k, 2 ** (n - k), 2 ** k, 2 ** (n - k))
    reduced = np.trace(t, axis1=0, axis2=2)
    mixed = np.zeros_like(t)
    idx = np.arange(2 ** k)
    mixed[idx, :, idx, :] = reduced[None, :, :] / (2 ** k)
    out = (1.0 - p) * t + p * mixed
    inv = np.argsort(perm)
    out = out.reshape([2] * n + [2] * n)
    out = out.transpose(list(inv) + [n + q for q in inv])
    return out.reshape(dim, dim)


def initial_state(n: int, bitstring: str | None = None) -> np.ndarray:
    state = np.zeros(2 ** n, dtype=complex)
    idx = 0 if bitstring is None else int(bitstring, 2)
    state[idx] = 1.0
    return state


def initial_density(n: int, noise: NoiseModel) -> np.ndarray:
    rho = None
    for q in range(n):
        eps = noise.epsilon(q)
        local = np.diag([1.0 - eps, eps]).astype(complex)
        rho = local if rho is None else np.kron(rho, local)
    return rho


def simulate_statevector(circuit: Circuit, initial: np.ndarray | None = None) -> np.ndarray:
    n = circuit.n_qubits
    if n > STATEVECTOR_QUBIT_CAP:
        raise DimensionError(f"statevector mode capped at {STATEVECTOR_QUBIT_CAP} qubits")
    state = initial.copy() if initial is not None else initial_state(n)
    for g in circuit.gates:
        state = _apply_unitary_state(state, g.unitary(), g.targets, n)
    return state


def simulate_density(circuit: Circuit, noise: NoiseModel,
                     initial: np.ndarray | None = None) -> np.ndarray:
    """Density-matrix simulation with per-physical-gate depolarizing."""
    n = circuit.n_qubits
    if n > DENSITY_QUBIT_CAP:
        raise DimensionError(f"density-matrix mode capped at {DENSITY_QUBIT_CAP} qubits")
    if initial is not None:
        rho = initial.astype(complex).copy()
        if rho.ndim == 1:
            rho = np.outer(rho, rho.conj())
    else:
        rho = initial_density(n, noise)
    for g in circuit.gates:
        rho = _apply_unitary_density(rho, g.unitary(), g.targets, n)
        if g.is_physical:
            p = noise.p2 if g.kind == "cz" else noise.p1
            rho = _depolarize(rho, p, g.targets, n)
    return rho


def probabilities(circuit: Circuit, noise: NoiseModel | None = None,
                  initial: np.ndarray | None = None) -> np.ndarray:
    if noise is None or noise.is_trivial():
        if initial is not None and initial.ndim == 2:
            rho = simulate_density(circuit, NoiseModel(), initial)
            return np.diag(rho).real.copy()
        state = simulate_statevector(circuit, initial)
        return np.abs(state) ** 2
    rho = simulate_density(circuit, noise, initial)
    return np.diag(rho).real.copy()


def sample_record(probs: np.ndarray, shots: int, seed, n_qubits: int,
                  basis: str = "z", m1: np.ndarray | None = None) -> MeasurementRecord:
    rng = np.random.default_rng(seed)
    probs = np.clip(np.asarray(probs, dtype=float), 0.0, None)
    probs = probs / probs.sum()
    outcomes = rng.choice(probs.size, size=shots, p=probs)
    bits = ((outcomes[:, None] >> np.arange(n_qubits - 1, -1, -1)[None, :]) & 1
            ).astype(np.uint8)
    return MeasurementRecord(n_qubits=n_qubits, bits=bits, m1=m1,
                             seed=None if seed is None else int(seed), basis=basis)


def simulate(circuit: Circuit, noise: NoiseModel | None = None,
             shots: int | None = None, seed=None):
    """Exact state (no shots) or a sampled MeasurementRecord.

    Returns a statevector for noiseless shot-free runs, a density matrix
    when noise is present, and a MeasurementRecord when shots are given;
    records are bit-for-bit reproducible for a fixed (seed, shots).
    """
    noise = noise or NoiseModel()
    if shots is None:
        if noise.is_trivial():
            return simulate_statevector(circuit)
        return simulate_density(circuit, noise)
    probs = probabilities(circuit, noise)
    return sample_record(probs, shots, seed, circuit.n_qubits)


def ghz_target_state(n: int) -> np.ndarray:
    state = np.zeros(2 ** n, dtype=complex)
    state[0] = state[-1] = 1.0 / math.sqrt(2.0)
    return state


def state_fidelity(state_or_rho: np.ndarray, target: np.ndarray) -> float:
    if state_or_rho.ndim == 1:
        return float(np.abs(np.vdot(target, state_or_rho)) ** 2)
    return float(np.real(target.conj() @ state_or_rho @ target))


@dataclass
class ParityResult:
    """Harmonic decomposition of a parity oscillation."""

    phases: np.ndarray
    parity: np.ndarray
    amplitudes: dict[int, float]
    phase_offsets: dict[int, float]
    constant: float
    dominant_order: int

    @property
    def a_n(self) -> float:
        return self.amplitudes[max(self.amplitudes)]

    def amplitude(self, order: int) -> float:
        return self.amplitudes[order]


def parity_from_probabilities(probs_per_phase: np.ndarray) -> np.ndarray:
    """<Pi> = sum_x (-1)^wt(x) P_x for each row of probabilities."""
    probs = np.asarray(probs_per_phase, dtype=float)
    n = int(round(math.log2(probs.shape[-1])))
    signs = np.array([(-1) ** bin(x).count("1") for x in range(2 ** n)])
    return probs @ signs


def fit_parity(phases, parity, n: int) -> ParityResult:
    """Joint least squares over harmonic orders 1..n with free offsets.

    The model is c + sum_m [a_m cos(m phi) + b_m sin(m phi)], resolved
    simultaneously so coexisting harmonics do not bias each other.
    """
    phases = np.asarray(phases, dtype=float)
    parity = np.asarray(parity, dtype=float)
    span = phases[-1] - phases[0]
    if span < 2.0 * math.pi / n - 1e-9:
        raise ValidationError("phase grid shorter than one period of the order-n harmonic")
    if phases.size < 4 * n:
        raise ValidationError(f"undersampled grid: need >= {4 * n} points for order {n}")
    cols = [np.ones_like(phases)]
    for m in range(1, n + 1):
        cols.append(np.cos(m * phases))
        cols.append(np.sin(m * phases))
    design = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(design, parity, rcond=None)
    amplitudes, offsets = {}, {}
    for m in range(1, n + 1):
        a, b = coef[2 * m - 1], coef[2 * m]
        amplitudes[m] = float(math.hypot(a, b))
        offsets[m] = float(math.atan2(-b, a))
    dominant = max(amplitudes, key=amplitudes.get)
    return ParityResult(phases, parity, amplitudes, offsets, float(coef[0]), dominant)


def parity_experiment(source, n: int, phases, noise: NoiseModel | None = None,
                      shots: int | None = None, seed=None) -> ParityResult:
    """Collective-phase parity oscillation of a prepared n-qubit state.

    ``source`` is the pre-rotation state (vector or density matrix) or a
    Circuit preparing it. Each phase point applies Rz(phi) on every
    qubit, a global X90, and measures the Z-basis parity; with ``shots``
    the parity comes from sampled bitstrings instead of exact
    probabilities.
    """
    phases = np.asarray(phases, dtype=float)
    if isinstance(source, Circuit):
        state = simulate(source, noise)
    else:
        state = np.asarray(source)
    rng = np.random.default_rng(seed)
    rows = []
    for phi in phases:
        readout = Circuit(n)
        readout.add_layer([vz(q, phi) for q in range(n)])
        readout.add_layer([x90(q) for q in range(n)])
        probs = probabilities(readout, noise,
                              initial=state.copy() if state.ndim == 2 else state)
        if shots is not None:
            rec = sample_record(probs, shots, rng.integers(2 ** 63), n)
            probs = rec.probabilities()
        rows.append(probs)
    parity = parity_from_probabilities(np.asarray(rows))
    return fit_parity(phases, parity, n)


def ghz_fidelity(populations: tuple[float, float], a_n: float) -> float:
    """F = (P_g + P_e + A_N) / 2 from populations and parity contrast."""
    p_g, p_e = populations
    for v in (p_g, p_e, a_n):
        if not 0.0 <= v <= 1.0 + 1e-9:
            raise ValidationError("populations and amplitude must lie in [0, 1]")
    if p_g + p_e > 1.0 + 1e-9:
        raise ValidationError("populations exceed unity")
    return min(1.0, (p_g + p_e + a_n) / 2.0)


def theory_fidelity(n: int, sq_fidelities, cz_fidelities,
                    root_index: int | None = None) -> float:
    """Product model: F_SQ(root) * prod_others F_SQ^3 * prod F_CZ.

    The root qubit costs one rotation (its Hadamard); every other qubit
    is a CNOT target costing three rotations plus one CZ per link.
    """
    sq = list(sq_fidelities)
    czf = list(cz_fidelities)
    if len(sq) != n or len(czf) != n - 1:
        raise ValidationError(f"need {n} single-qubit and {n - 1} CZ fidelities")
    if root_index is None:
        root_index = (n - 1) // 2
    f = sq[root_index]
    for i, v in enumerate(sq):
        if i != root_index:
            f *= v ** 3
    for v in czf:
        f *= v
    return float(f)


_PAULIS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.diag([1.0, -1.0]).astype(complex),
}


def tomography_density(state_or_rho: np.ndarray, n: int) -> np.ndarray:
    """Linear-inversion state tomography with a physicality projection.

    Pauli expectations are computed exactly, inverted to rho, then
    projected to the nearest positive-semidefinite unit-trace matrix in
    Frobenius norm (eigenvalue water-filling).
    """
    if n > 5:
        raise DimensionError("tomography supported for n <= 5")
    rho = state_or_rho if state_or_rho.ndim == 2 else \
        np.outer(state_or_rho, state_or_rho.conj())
    labels = ["I", "X", "Y", "Z"]
    est = np.zeros_like(rho)
    for idx in np.ndindex(*(4,) * n):
        p = _PAULIS[labels[idx[0]]]
        for k in idx[1:]:
            p = np.kron(p, _PAULIS[labels[k]])
        expval = np.real(np.trace(rho @ p))
        est = est + expval * p / (2 ** n)
    w, v = np.linalg.eigh(0.5 * (est + est.conj().T))
    w = _project_simplex(w)
    return (v * w) @ v.conj().T


def _project_simplex(w: np.ndarray) -> np.ndarray:
    """Nearest point on {w >= 0, sum w = 1} in Euclidean norm."""
    u = np.sort(w)[::-1]
    css = np.cumsum(u)
    rho_idx = np.nonzero(u + (1.0 - css) / (np.arange(len(u)) + 1) > 0)[0][-1]
    theta = (1.0 - css[rho_idx]) / (rho_idx + 1)
    return np.clip(w + theta, 0.0, None)
