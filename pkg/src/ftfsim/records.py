"""Shot-level measurement records and their binary file format.

Layout (documented for cross-tool use):

  bytes 0..7    magic b"FTFREC1\\n"
  bytes 8..11   little-endian uint32 header length H
  bytes 12..    H bytes of UTF-8 JSON: {"qubits", "shots", "seed",
                "basis", "preselected", "has_m1", "metadata"}
  then          shots * ceil(qubits/8) bytes of packed M2 bitstrings
  then          the same again for M1 when has_m1 is true

Rows are packed big-endian per shot with qubit 0 in the most significant
bit of byte 0; bit value 1 means the excited state |e>.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

MAGIC = b"FTFREC1\n"


@dataclass
class MeasurementRecord:
    n_qubits: int
    bits: np.ndarray                      # (shots, n_qubits) uint8
    m1: np.ndarray | None = None          # pre-selection round, same shape
    seed: int | None = None
    basis: str = "z"
    preselected: bool = False
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.bits = np.ascontiguousarray(self.bits, dtype=np.uint8)
        if self.bits.ndim != 2 or self.bits.shape[1] != self.n_qubits:
            raise ValidationError("bits must be a (shots, n_qubits) array")
        if self.m1 is not None:
            self.m1 = np.ascontiguousarray(self.m1, dtype=np.uint8)
            if self.m1.shape != self.bits.shape:
                raise ValidationError("m1 must match the shape of bits")

    @property
    def shots(self) -> int:
        return self.bits.shape[0]

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for key, cnt in zip(*np.unique(self.indices(), return_counts=True)):
            out[format(int(key), f"0{self.n_qubits}b")] = int(cnt)
        return out

    def indices(self) -> np.ndarray:
        weights = 1 << np.arange(self.n_qubits - 1, -1, -1)
        return (self.bits.astype(np.int64) @ weights)

    def probabilities(self) -> np.ndarray:
        probs = np.bincount(self.indices(), minlength=2 ** self.n_qubits)
        return probs / self.shots

    def save(self, path):
        header = {
            "qubits": self.n_qubits,
            "shots": self.shots,
            "seed": self.seed,
            "basis": self.basis,
            "preselected": self.preselected,
            "has_m1": self.m1 is not None,
            "metadata": self.metadata,
        }
        blob = json.dumps(header, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            fh.write(np.packbits(self.bits, axis=1).tobytes())
            if self.m1 is not None:
                fh.write(np.packbits(self.m1, axis=1).tobytes())

    @classmethod
    def load(cls, path) -> "MeasurementRecord":
        with open(path, "rb") as fh:
            if fh.read(8) != MAGIC:
                raise ValidationError(f"{path} is not a measurement record")
            (hlen,) = struct.unpack("<I", fh.read(4))
            header = json.loads(fh.read(hlen).decode())
            n = header["qubits"]
            shots = header["shots"]
            row_bytes = (n + 7) // 8
            raw = fh.read(shots * row_bytes)
            bits = np.unpackbits(
                np.frombuffer(raw, dtype=np.uint8).reshape(shots, row_bytes),
                axis=1)[:, :n]
            m1 = None
            if header.get("has_m1"):
                raw = fh.read(shots * row_bytes)
                m1 = np.unpackbits(
                    np.frombuffer(raw, dtype=np.uint8).reshape(shots, row_bytes),
                    axis=1)[:, :n]
        return cls(n_qubits=n, bits=bits, m1=m1, seed=header.get("seed"),
                   basis=header.get("basis", "z"),
                   preselected=header.get("preselected", False),
                   metadata=header.get("metadata", {}))
