"""Readout confusion modeling, pre-selection and ML unfolding.

The per-qubit confusion matrix M has entries M[r, s] = p(read r | true s)
with columns summing to one; multi-qubit models are tensor products by
default, with an optional explicit joint matrix for small systems.
Unfolding uses multiplicative (expectation-maximization style) updates,
which maximize the multinomial likelihood while keeping the iterate a
valid probability vector at every step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .device import DeviceConfig
from .errors import ConvergenceError, ValidationError
from .records import MeasurementRecord

UNFOLD_TOL = 1e-10
UNFOLD_MAX_ITER = 10_000
JOINT_QUBIT_CAP = 6
DENSE_QUBIT_CAP = 12


@dataclass(frozen=True)
class ConfusionModel:
    """Per-qubit (or joint) readout assignment-error model."""

    matrices: tuple[np.ndarray, ...] = ()
    joint: np.ndarray | None = None

    def __post_init__(self):
        mats = tuple(np.asarray(m, dtype=float) for m in self.matrices)
        object.__setattr__(self, "matrices", mats)
        for m in mats:
            self._check(m, 2)
        if self.joint is not None:
            joint = np.asarray(self.joint, dtype=float)
            if joint.shape[0] > 2 ** JOINT_QUBIT_CAP:
                raise ValidationError(f"joint confusion capped at {JOINT_QUBIT_CAP} qubits")
            self._check(joint, joint.shape[0])
            object.__setattr__(self, "joint", joint)
            if mats:
                raise ValidationError("give either per-qubit matrices or a joint matrix")

    @staticmethod
    def _check(m: np.ndarray, dim: int):
        if m.shape != (dim, dim):
            raise ValidationError(f"confusion matrix must be {dim}x{dim}")
        if np.any(m < -1e-12) or np.any(m > 1 + 1e-12):
            raise ValidationError("confusion entries must lie in [0, 1]")
        if np.max(np.abs(m.sum(axis=0) - 1.0)) > 1e-9:
            raise ValidationError("confusion matrix columns must sum to 1")

    @property
    def n_qubits(self) -> int:
        if self.joint is not None:
            return int(np.round(np.log2(self.joint.shape[0])))
        return len(self.matrices)

    @classmethod
    def uniform(cls, n: int, p_ge: float, p_eg: float | None = None) -> "ConfusionModel":
        p_eg = p_ge if p_eg is None else p_eg
        m = np.array([[1.0 - p_ge, p_eg], [p_ge, 1.0 - p_eg]])
        return cls(matrices=(m,) * n)

    @classmethod
    def from_config(cls, config: DeviceConfig, qubits: list[str]) -> "ConfusionModel":
        mats = []
        for q in qubits:
            r = config.readout.get(q)
            p_ge = r.p_ge if r else 0.0
            p_eg = r.p_eg if r else 0.0
            mats.append(np.array([[1.0 - p_ge, p_eg], [p_ge, 1.0 - p_eg]]))
        return cls(matrices=tuple(mats))

    def identity_like(self) -> bool:
        if self.joint is not None:
            return bool(np.allclose(self.joint, np.eye(self.joint.shape[0])))
        return all(np.allclose(m, np.eye(2)) for m in self.matrices)

    def dense(self) -> np.ndarray:
        """Full 2^n x 2^n matrix (guarded; prefer the tensor contractions)."""
        if self.joint is not None:
            return self.joint.copy()
        if self.n_qubits > DENSE_QUBIT_CAP:
            raise ValidationError(f"dense confusion capped at {DENSE_QUBIT_CAP} qubits")
        out = np.array([[1.0]])
        for m in self.matrices:
            out = np.kron(out, m)
        return out

    def forward(self, dist: np.ndarray) -> np.ndarray:
        """p_read = M p_true via per-qubit contractions."""
        return self._contract(dist, transpose=False)

    def backward(self, dist: np.ndarray) -> np.ndarray:
        """M^T applied to a distribution-shaped vector."""
        return self._contract(dist, transpose=True)

    def _contract(self, dist: np.ndarray, transpose: bool) -> np.ndarray:
        dist = np.asarray(dist, dtype=float)
        n = self.n_qubits
        if dist.shape != (2 ** n,):
            raise ValidationError(f"distribution must have length {2 ** n}")
        if self.joint is not None:
            m = self.joint.T if transpose else self.joint
            return m @ dist
        t = dist.reshape([2] * n)
        for q, m in enumerate(self.matrices):
            mq = m.T if transpose else m
            t = np.moveaxis(np.tensordot(mq, t, axes=([1], [q])), 0, q)
        return t.reshape(-1)


def apply_confusion(target, model: ConfusionModel, seed=None):
    """Forward readout corruption.

    Distributions are mapped exactly through the model; records get
    per-shot stochastic flips, reproducible for a fixed seed.
    """
    if isinstance(target, MeasurementRecord):
        if model.joint is not None:
            raise ValidationError("record-mode corruption needs per-qubit matrices")
        if model.n_qubits != target.n_qubits:
            raise ValidationError("confusion model does not match record width")
        rng = np.random.default_rng(seed)
        bits = target.bits.copy()
        for q, m in enumerate(model.matrices):
            flip_g = m[1, 0]   # p(read e | true g)
            flip_e = m[0, 1]   # p(read g | true e)
            r = rng.random(bits.shape[0])
            p_flip = np.where(bits[:, q] == 0, flip_g, flip_e)
            bits[:, q] = np.where(r < p_flip, 1 - bits[:, q], bits[:, q])
        return MeasurementRecord(n_qubits=target.n_qubits, bits=bits, m1=target.m1,
                                 seed=target.seed, basis=target.basis,
                                 preselected=target.preselected,
                                 metadata=dict(target.metadata))
    return model.forward(np.asarray(target, dtype=float))


def unfold(measured, model: ConfusionModel,
           tol: float = UNFOLD_TOL, max_iter: int = UNFOLD_MAX_ITER) -> np.ndarray:
    """Constrained maximum-likelihood readout correction.

    Multiplicative updates p <- p * M^T(m / (M p)) enforce positivity and
    normalization natively and converge to the multinomial ML estimate.
    """
    m_vec = np.asarray(measured, dtype=float)
    if np.any(m_vec < 0):
        raise ValidationError("measured distribution has negative entries")
    total = m_vec.sum()
    if total <= 0:
        raise ValidationError("measured distribution is empty")
    m_vec = m_vec / total
    if model.joint is None:
        for q, m in enumerate(model.matrices):
            if m[0, 0] <= 0.5 or m[1, 1] <= 0.5:
                raise ValidationError(
                    f"qubit {q} readout fidelity <= 0.5; unfolding ill-conditioned")
    if model.identity_like():
        return m_vec.copy()

    p = np.full_like(m_vec, 1.0 / m_vec.size)
    for _ in range(max_iter):
        forward = model.forward(p)
        ratio = np.divide(m_vec, forward, out=np.zeros_like(m_vec),
                          where=forward > 1e-300)
        p_new = p * model.backward(ratio)
        s = p_new.sum()
        if s <= 0:
            raise ConvergenceError("unfolding collapsed to zero mass")
        p_new = p_new / s
        delta = float(np.sum(np.abs(p_new - p)))
        p = p_new
        if delta <= tol:
            return p
    raise ConvergenceError(f"unfolding did not converge within {max_iter} iterations")


def preselect(record: MeasurementRecord) -> tuple[MeasurementRecord, float]:
    """Keep shots whose pre-selection round read all-ground.

    Returns the filtered record and the retention fraction. Idempotent:
    the filtered record keeps its (all-ground) M1 rows.
    """
    if record.m1 is None:
        raise ValidationError("record carries no pre-selection (M1) data")
    keep = ~record.m1.any(axis=1)
    retention = float(np.mean(keep)) if record.shots else 0.0
    filtered = MeasurementRecord(
        n_qubits=record.n_qubits,
        bits=record.bits[keep],
        m1=record.m1[keep],
        seed=record.seed,
        basis=record.basis,
        preselected=True,
        metadata=dict(record.metadata),
    )
    return filtered, retention
