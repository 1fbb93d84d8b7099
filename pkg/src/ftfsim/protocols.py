"""End-to-end GHZ generation and characterization protocol.

Mirrors the measurement flow of the hardware experiment: initialize with
per-qubit excitation error, optionally read a pre-selection round (M1,
subject to the same readout confusion as the final round), run the GHZ
circuit, then either measure Z-basis populations or sweep a collective
virtual-Z phase followed by a global X90 for parity oscillations. Shots
are sampled per phase point; exact (shot-free) evaluation is available
for noise-model studies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuits import (Circuit, NoiseModel, ParityResult, compile_ghz, fit_parity,
                       ghz_fidelity, initial_state, parity_from_probabilities,
                       probabilities, simulate_density, vz, x90)
from .errors import ValidationError
from .mitigation import ConfusionModel, unfold
from .records import MeasurementRecord


@dataclass
class GhzExperimentResult:
    n: int
    parity: ParityResult
    p_ground: float
    p_excited: float
    fidelity: float
    retention: float
    shots_per_point: int | None
    phases: np.ndarray


class _BranchCache:
    """Final pre-rotation states keyed by the initial bitstring branch."""

    def __init__(self, circuit: Circuit, noise: NoiseModel):
        self.circuit = circuit
        self.noise = noise
        self.n = circuit.n_qubits
        self._states: dict[tuple, np.ndarray] = {}
        self._noisy = noise.p1 > 0 or noise.p2 > 0

    def state(self, bits: tuple) -> np.ndarray:
        if bits not in self._states:
            init = initial_state(self.n, "".join(map(str, bits)))
            if self._noisy:
                rho = simulate_density(self.circuit, self.noise,
                                       initial=np.outer(init, init.conj()))
                self._states[bits] = rho
            else:
                from .circuits import simulate_statevector
                self._states[bits] = simulate_statevector(self.circuit, init)
        return self._states[bits]

    def probabilities(self, bits: tuple, phase: float | None) -> np.ndarray:
        state = self.state(bits)
        if phase is None:
            if state.ndim == 2:
                return np.diag(state).real.copy()
            return np.abs(state) ** 2
        readout = Circuit(self.n)
        readout.add_layer([vz(q, phase) for q in range(self.n)])
        readout.add_layer([x90(q) for q in range(self.n)])
        return probabilities(readout, self.noise, initial=state.copy())


def _sample_branches(rng, noise: NoiseModel, n: int, shots: int) -> np.ndarray:
    eps = np.array([noise.epsilon(q) for q in range(n)])
    return (rng.random((shots, n)) < eps[None, :]).astype(np.uint8)


def _corrupt_bits(rng, bits: np.ndarray, confusion: ConfusionModel | None) -> np.ndarray:
    if confusion is None:
        return bits.copy()
    out = bits.copy()
    for q, m in enumerate(confusion.matrices):
        p_flip = np.where(out[:, q] == 0, m[1, 0], m[0, 1])
        out[:, q] = np.where(rng.random(len(out)) < p_flip, 1 - out[:, q], out[:, q])
    return out


def _measured_distribution(rng, cache: _BranchCache, branches: np.ndarray,
                           phase: float | None,
                           confusion: ConfusionModel | None) -> np.ndarray:
    """Sampled M2 distribution for the given per-shot branches."""
    n = cache.n
    counts = np.zeros(2 ** n)
    uniq, inverse, cnt = np.unique(branches, axis=0, return_inverse=True,
                                   return_counts=True)
    for k, (row, c) in enumerate(zip(uniq, cnt)):
        probs = np.clip(cache.probabilities(tuple(row), phase), 0.0, None)
        probs /= probs.sum()
        outcomes = rng.choice(probs.size, size=int(c), p=probs)
        counts += np.bincount(outcomes, minlength=counts.size)
    dist = counts / counts.sum()
    if confusion is not None:
        # sample explicit readout flips to keep shot statistics honest
        idx = np.repeat(np.arange(counts.size), counts.astype(int))
        bits = _corrupt_bits(rng, _indices_to_bits(idx, n), confusion)
        counts = np.bincount(_bits_to_indices(bits), minlength=2 ** n).astype(float)
        dist = counts / counts.sum()
    return dist


def _indices_to_bits(idx: np.ndarray, n: int) -> np.ndarray:
    return ((idx[:, None] >> np.arange(n - 1, -1, -1)[None, :]) & 1).astype(np.uint8)


def _bits_to_indices(bits: np.ndarray) -> np.ndarray:
    n = bits.shape[1]
    return bits.astype(np.int64) @ (1 << np.arange(n - 1, -1, -1))


def ghz_experiment(
    n: int,
    phases,
    noise: NoiseModel | None = None,
    shots_per_point: int | None = None,
    seed=None,
    preselect: bool = False,
    confusion: ConfusionModel | None = None,
    unfold_readout: bool = True,
) -> GhzExperimentResult:
    """GHZ preparation, population and parity measurement with mitigation.

    With ``shots_per_point`` unset the protocol evaluates exact mixtures
    (pre-selection then assumes a perfect M1 round); with shots, every
    stage including M1 filtering and readout confusion is sampled.
    """
    noise = noise or NoiseModel()
    phases = np.asarray(phases, dtype=float)
    circuit = compile_ghz(n)
    cache = _BranchCache(circuit, noise)
    rng = np.random.default_rng(seed)

    if shots_per_point is None:
        if preselect:
            branch_weights = {tuple([0] * n): 1.0}
            retention = float(np.prod([1.0 - noise.epsilon(q) for q in range(n)]))
        else:
            branch_weights = _exact_branch_weights(noise, n)
            retention = 1.0
        pop = _exact_distribution(cache, branch_weights, None, confusion)
        if confusion is not None and unfold_readout:
            pop = unfold(pop, confusion)
        parity_vals = []
        for phi in phases:
            dist = _exact_distribution(cache, branch_weights, float(phi), confusion)
            if confusion is not None and unfold_readout:
                dist = unfold(dist, confusion)
            parity_vals.append(parity_from_probabilities(dist))
        parity = fit_parity(phases, np.asarray(parity_vals), n)
    else:
        retention_acc = []

        def measure(phase):
            branches = _sample_branches(rng, noise, n, shots_per_point)
            if preselect:
                m1 = _corrupt_bits(rng, branches, confusion)
                keep = ~m1.any(axis=1)
                retention_acc.append(float(np.mean(keep)))
                branches = branches[keep]
                if branches.size == 0:
                    raise ValidationError("pre-selection rejected every shot")
            dist = _measured_distribution(rng, cache, branches, phase, confusion)
            if confusion is not None and unfold_readout:
                dist = unfold(dist, confusion)
            return dist

        pop = measure(None)
        parity_vals = [parity_from_probabilities(measure(float(phi))) for phi in phases]
        parity = fit_parity(phases, np.asarray(parity_vals), n)
        retention = float(np.mean(retention_acc)) if retention_acc else 1.0

    p_g, p_e = float(pop[0]), float(pop[-1])
    fid = ghz_fidelity((min(p_g, 1.0), min(p_e, 1.0)), min(parity.a_n, 1.0))
    return GhzExperimentResult(n=n, parity=parity, p_ground=p_g, p_excited=p_e,
                               fidelity=fid, retention=retention,
                               shots_per_point=shots_per_point, phases=phases)


def _exact_branch_weights(noise: NoiseModel, n: int, cutoff: float = 1e-12) -> dict:
    eps = [noise.epsilon(q) for q in range(n)]
    weights: dict[tuple, float] = {}
    for idx in range(2 ** n):
        bits = tuple((idx >> (n - 1 - q)) & 1 for q in range(n))
        w = 1.0
        for q, b in enumerate(bits):
            w *= eps[q] if b else 1.0 - eps[q]
        if w > cutoff:
            weights[bits] = w
    total = sum(weights.values())
    return {b: w / total for b, w in weights.items()}


def _exact_distribution(cache: _BranchCache, branch_weights: dict,
                        phase: float | None,
                        confusion: ConfusionModel | None) -> np.ndarray:
    dist = np.zeros(2 ** cache.n)
    for bits, w in branch_weights.items():
        dist += w * cache.probabilities(bits, phase)
    dist = np.clip(dist, 0.0, None)
    dist /= dist.sum()
    if confusion is not None:
        dist = confusion.forward(dist)
    return dist


def ghz_record(n: int, noise: NoiseModel | None, shots: int, seed=None,
               confusion: ConfusionModel | None = None) -> MeasurementRecord:
    """Z-basis GHZ measurement record with an M1 pre-selection round."""
    noise = noise or NoiseModel()
    circuit = compile_ghz(n)
    cache = _BranchCache(circuit, noise)
    rng = np.random.default_rng(seed)
    branches = _sample_branches(rng, noise, n, shots)
    m1 = _corrupt_bits(rng, branches, confusion)
    uniq, inverse = np.unique(branches, axis=0, return_inverse=True)
    bits = np.zeros((shots, n), dtype=np.uint8)
    for k, row in enumerate(uniq):
        sel = inverse == k
        probs = np.clip(cache.probabilities(tuple(row), None), 0.0, None)
        probs /= probs.sum()
        outcomes = rng.choice(probs.size, size=int(np.sum(sel)), p=probs)
        bits[sel] = _indices_to_bits(outcomes, n)
    bits = _corrupt_bits(rng, bits, confusion)
    return MeasurementRecord(n_qubits=n, bits=bits, m1=m1,
                             seed=None if seed is None else int(seed),
                             metadata={"protocol": "ghz", "shots": shots})
