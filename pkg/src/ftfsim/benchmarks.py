"""Randomized benchmarking, cross-entropy benchmarking and random
circuit sampling.

RB sequences are random Clifford words closed by the group inverse, so
every sequence composes to the identity ideally; the interleaved variant
inserts the target gate between Cliffords and folds it into the running
product before inversion. XEB follows the linear cross-entropy
estimator; the printed form (M-U)(E-U)/(E-U)^2 reduces identically to
(M-U)/(E-U), which is what is computed (no needless cancellation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from .circuits import Circuit, Gate, NoiseModel, cz, simulate_statevector, vz, x90
from .cliffords import CZ, clifford_group
from .errors import FitError, ValidationError


@dataclass
class RbSequence:
    circuit: Circuit
    clifford_indices: list[int]
    length: int
    interleaved: str | None = None


def _word_to_gates(word, qubit_map) -> list[Gate]:
    return [Gate(kind, tuple(qubit_map[q] for q in targets), angle)
            for kind, targets, angle in word]


def generate_rb(
    n_qubits: int,
    lengths,
    n_sequences: int = 1,
    interleaved: str | None = None,
    seed=None,
    qubits: tuple[int, ...] | None = None,
) -> list[RbSequence]:
    """Random Clifford sequences with their inversion gate appended.

    ``lengths`` counts the random Cliffords before the inverse; the
    interleaved variant (currently ``"cz"``) inserts the target between
    them. Sequence construction is reproducible for a fixed seed.
    """
    group = clifford_group(n_qubits)
    qubits = qubits or tuple(range(n_qubits))
    if len(qubits) != n_qubits:
        raise ValidationError("qubit map must cover the benchmarked qubits")
    if interleaved is not None and (interleaved != "cz" or n_qubits != 2):
        raise ValidationError("only two-qubit CZ interleaving is supported")
    rng = np.random.default_rng(seed)
    out = []
    for length in lengths:
        for _ in range(n_sequences):
            idxs = rng.integers(0, group.size, int(length)).tolist()
            circ = Circuit(max(qubits) + 1)
            total = np.eye(2 ** n_qubits, dtype=complex)
            for i in idxs:
                for g in _word_to_gates(group.words[i], qubits):
                    circ.add_layer([g])
                total = group.unitaries[i] @ total
                if interleaved == "cz":
                    circ.add_layer([cz(qubits[0], qubits[1])])
                    total = CZ @ total
            for g in _word_to_gates(group.inverse_word(total), qubits):
                circ.add_layer([g])
            out.append(RbSequence(circ, idxs, int(length), interleaved))
    return out


def rb_survival(seq: RbSequence) -> float:
    """Noiseless ground-state survival (1 up to numerical error)."""
    state = simulate_statevector(seq.circuit)
    return float(np.abs(state[0]) ** 2)


def simulate_rb_depolarized(n_qubits: int, lengths, p_clifford: float,
                            n_sequences: int = 1, seed=None,
                            shots: int | None = None) -> dict[int, list[float]]:
    """Survival with a uniform depolarizing channel applied once per
    Clifford: rho -> (1-p) rho + p I/d after each group element.

    The survival then decays as ((d-1)/d) * (1-p)^L + 1/d exactly, which
    serves as the analytic oracle for the fitters.
    """
    group = clifford_group(n_qubits)
    rng = np.random.default_rng(seed)
    d = 2 ** n_qubits
    out: dict[int, list[float]] = {int(l): [] for l in lengths}
    for length in lengths:
        for _ in range(n_sequences):
            idxs = rng.integers(0, group.size, int(length))
            rho = np.zeros((d, d), dtype=complex)
            rho[0, 0] = 1.0
            total = np.eye(d, dtype=complex)
            for i in idxs:
                u = group.unitaries[i]
                rho = u @ rho @ u.conj().T
                rho = (1.0 - p_clifford) * rho + p_clifford * np.trace(rho) * np.eye(d) / d
                total = u @ total
            u_inv = total.conj().T
            rho = u_inv @ rho @ u_inv.conj().T
            survival = float(np.real(rho[0, 0]))
            if shots is not None:
                survival = rng.binomial(shots, min(max(survival, 0.0), 1.0)) / shots
            out[int(length)].append(survival)
    return out


@dataclass
class FitReport:
    """Parameter estimates with one-sigma uncertainties."""

    params: dict[str, float]
    stderr: dict[str, float]
    fidelity: float | None = None
    extras: dict = field(default_factory=dict)


def fit_rb(lengths, survivals, d: int = 2) -> FitReport:
    """Fit F(L) = A p^L + B and convert to average gate fidelity.

    ``survivals`` maps each length to one value or a list (averaged).
    The standard conversion F = 1 - (1-p)(d-1)/d applies to the fitted
    decay; interleaved gate fidelities come from fit ratios via
    interleaved_fidelity.
    """
    if isinstance(survivals, dict):
        items = sorted((int(l), np.mean(v)) for l, v in survivals.items())
        xs = np.array([l for l, _ in items], dtype=float)
        ys = np.array([v for _, v in items], dtype=float)
    else:
        xs = np.asarray(lengths, dtype=float)
        ys = np.asarray(survivals, dtype=float)
    if xs.size < 3:
        raise ValidationError("need at least three distinct sequence lengths")

    b0 = 1.0 / d
    a0 = max(ys[0] - b0, 1e-3)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.clip((ys - b0) / a0, 1e-12, None)
    slope = np.polyfit(xs, np.log(ratio), 1)[0]
    p0 = float(np.clip(np.exp(slope), 1e-6, 1.0))

    def model(length, a, p, b):
        return a * p ** length + b

    try:
        popt, pcov = curve_fit(model, xs, ys, p0=(a0, p0, b0), maxfev=20000)
    except RuntimeError as exc:
        raise FitError(f"RB fit failed: {exc}") from None
    a, p, b = popt
    if not 0.0 < p <= 1.0 + 1e-12:
        raise FitError(f"decay parameter p={p:.4f} outside (0, 1]")
    p = min(p, 1.0)
    err = np.sqrt(np.clip(np.diag(pcov), 0.0, None))
    fidelity = 1.0 - (1.0 - p) * (d - 1) / d
    return FitReport(params={"A": float(a), "p": float(p), "B": float(b)},
                     stderr={"A": float(err[0]), "p": float(err[1]), "B": float(err[2])},
                     fidelity=float(fidelity))


def interleaved_fidelity(p_reference: float, p_interleaved: float, d: int = 4) -> float:
    """Gate fidelity from the decay ratio of interleaved to reference RB."""
    return 1.0 - (1.0 - p_interleaved / p_reference) * (d - 1) / d


def xeb_fidelity(measured: np.ndarray, ideal: np.ndarray) -> float:
    """Linear cross-entropy sequence fidelity (M - U) / (E - U)."""
    measured = np.asarray(measured, dtype=float)
    ideal = np.asarray(ideal, dtype=float)
    if measured.shape != ideal.shape:
        raise ValidationError("distributions must cover the same outcomes")
    u = float(np.mean(ideal))
    e = float(np.sum(ideal ** 2))
    m = float(np.sum(measured * ideal))
    if abs(e - u) < 1e-15:
        raise ValidationError("ideal distribution is uniform; XEB undefined")
    return (m - u) / (e - u)


def fit_xeb_decay(depths, fidelities) -> FitReport:
    """Exponential fit of per-depth XEB fidelities, F(L) = A p^L + B."""
    return fit_rb(depths, fidelities, d=2)


def error_per_cycle(n_qubits: int, p: float) -> float:
    """EPC = (2^N - 1)/2^N * (1 - p)."""
    d = 2 ** n_qubits
    return (d - 1) / d * (1.0 - p)


def random_su2_seq(q: int, rng) -> list[Gate]:
    """Haar-flavored single-qubit gate as VZ-X90-VZ-X90-VZ."""
    a, b, c = rng.uniform(0.0, 2.0 * math.pi, 3)
    return [vz(q, a), x90(q), vz(q, b), x90(q), vz(q, c)]


def generate_rcs(pairs, cycles: int, seed=None,
                 n_qubits: int | None = None) -> Circuit:
    """Random circuit sampling: per cycle a layer of random single-qubit
    gates on every involved qubit followed by parallel CZs on the pairs,
    with a final random rotation before readout."""
    pairs = [tuple(p) for p in pairs]
    involved = sorted({q for p in pairs for q in p})
    if len(involved) != 2 * len(pairs):
        raise ValidationError("RCS pairs must be disjoint")
    n = n_qubits if n_qubits is not None else (max(involved) + 1 if involved else 1)
    rng = np.random.default_rng(seed)
    circ = Circuit(n)
    for _ in range(int(cycles)):
        circ.add_sequences({q: random_su2_seq(q, rng) for q in involved})
        circ.add_layer([cz(a, b) for a, b in pairs])
    circ.add_sequences({q: random_su2_seq(q, rng) for q in involved})
    return circ
