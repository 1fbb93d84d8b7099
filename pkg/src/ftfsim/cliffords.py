"""Single- and two-qubit Clifford groups over the native gate set.

Both groups are generated once per process by breadth-first closure from
{X90, VirtualZ(pi/2)} (plus CZ for two qubits), storing for each element
a native-gate word and its unitary up to global phase. The closure sizes
(24 and 11520) are asserted, which doubles as a correctness check of the
construction.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

_C = 1.0 / math.sqrt(2.0)
X90 = np.array([[_C, -1j * _C], [-1j * _C, _C]])
X180 = np.array([[0.0, -1j], [-1j, 0.0]])
Z90 = np.diag([1.0, 1j])
CZ = np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex)
EYE2 = np.eye(2, dtype=complex)


def canonical_key(u: np.ndarray, decimals: int = 8) -> bytes:
    """Hashable form of a unitary modulo global phase."""
    flat = u.ravel()
    k = int(np.argmax(np.abs(flat) > 1e-6))
    normalized = u * (np.conj(flat[k]) / np.abs(flat[k]))
    r = np.round(normalized.real, decimals) + 0.0
    i = np.round(normalized.imag, decimals) + 0.0
    return r.tobytes() + i.tobytes()


@dataclass(frozen=True)
class CliffordGroup:
    """Closure of the native generators, with decompositions and inverses."""

    n_qubits: int
    unitaries: tuple[np.ndarray, ...]
    words: tuple[tuple[tuple, ...], ...]   # per element: ((kind, targets, angle), ...)
    index_of: dict                          # canonical key -> element index
    inverse_index: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.unitaries)

    def lookup(self, u: np.ndarray) -> int:
        key = canonical_key(u)
        if key not in self.index_of:
            raise KeyError("unitary is not an element of the Clifford group")
        return self.index_of[key]

    def inverse_word(self, u: np.ndarray) -> tuple[tuple, ...]:
        return self.words[self.lookup(u.conj().T)]


def _bfs(generators: list[tuple[np.ndarray, tuple]], dim: int,
         expected: int) -> CliffordGroup:
    eye = np.eye(dim, dtype=complex)
    unitaries = [eye]
    words = [()]
    index_of = {canonical_key(eye): 0}
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for g_mat, g_word in generators:
            u = g_mat @ unitaries[i]
            key = canonical_key(u)
            if key in index_of:
                continue
            index_of[key] = len(unitaries)
            unitaries.append(u)
            words.append(words[i] + (g_word,))
            queue.append(index_of[key])
    if len(unitaries) != expected:
        raise AssertionError(
            f"Clifford closure produced {len(unitaries)} elements, expected {expected}")
    inverse = []
    for u in unitaries:
        inverse.append(index_of[canonical_key(u.conj().T)])
    n = int(math.log2(dim))
    return CliffordGroup(n, tuple(unitaries), tuple(words), index_of, tuple(inverse))


@lru_cache(maxsize=None)
def clifford_group(n_qubits: int) -> CliffordGroup:
    if n_qubits == 1:
        gens = [(X90, ("x90", (0,), 0.0)), (Z90, ("vz", (0,), math.pi / 2))]
        return _bfs(gens, 2, 24)
    if n_qubits == 2:
        gens = [
            (np.kron(X90, EYE2), ("x90", (0,), 0.0)),
            (np.kron(EYE2, X90), ("x90", (1,), 0.0)),
            (np.kron(Z90, EYE2), ("vz", (0,), math.pi / 2)),
            (np.kron(EYE2, Z90), ("vz", (1,), math.pi / 2)),
            (CZ, ("cz", (0, 1), 0.0)),
        ]
        return _bfs(gens, 4, 11520)
    raise ValueError("Clifford tables available for 1 and 2 qubits only")
