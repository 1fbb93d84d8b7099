"""Time-domain simulation of driven subsystems and CZ calibration.

Propagation runs in the interaction picture of the static dressed basis,
in the lab frame with the explicit cosine carrier by default (selectivity
margins here are not huge compared to Rabi rates, so the rotating-wave
approximation is an opt-in speedup, cross-checked in tests rather than
assumed). Square flux-bias segments are handled piecewise-statically:
the composite is re-assembled at each flux window and states are carried
across windows by exact basis projection.

Times are in ns, frequencies and amplitudes in GHz; a drive segment
contributes amplitude * envelope(t) * cos(2*pi*f*t + phase) * n_node, so
the on-resonance Rabi frequency is amplitude * |<f|n|i>| * envelope.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

from .errors import ConvergenceError, LabelingError, ValidationError
from .hamiltonian import OperatorSet, SpectrumResult, build_composite, label_states
from .spectral import (default_levels, delta_min_from_spectrum,
                       identify_map_transition, spectator_frequencies)

ENVELOPES = ("square", "cosine", "cosine-flat-top")


@dataclass(frozen=True)
class PulseSegment:
    node: str
    channel: str              # "charge-drive" | "flux"
    envelope: str             # square | cosine | cosine-flat-top
    amplitude: float          # GHz (charge) or target flux in Phi0 (flux)
    start: float              # ns
    duration: float           # ns
    frequency: float = 0.0    # GHz carrier, charge-drive only
    phase: float = 0.0        # rad
    ramp: float = 0.0         # ns, cosine-flat-top edges

    def __post_init__(self):
        if self.channel not in ("charge-drive", "flux"):
            raise ValidationError(f"unknown channel {self.channel!r}")
        if self.envelope not in ENVELOPES:
            raise ValidationError(f"unknown envelope {self.envelope!r}")
        if self.duration <= 0:
            raise ValidationError("segment duration must be positive")
        if self.channel == "flux" and self.envelope != "square":
            raise ValidationError("flux segments are piecewise-static: square only")
        if self.envelope == "cosine-flat-top" and not 0 < self.ramp <= self.duration / 2:
            raise ValidationError("cosine-flat-top needs 0 < ramp <= duration/2")

    @property
    def end(self) -> float:
        return self.start + self.duration

    def envelope_at(self, t: np.ndarray | float) -> np.ndarray | float:
        """Dimensionless envelope in [0, 1] at absolute time t."""
        tau = t - self.start
        inside = (tau >= 0) & (tau <= self.duration)
        if self.envelope == "square":
            return np.where(inside, 1.0, 0.0)
        if self.envelope == "cosine":
            return np.where(inside, np.sin(np.pi * np.clip(tau, 0, self.duration)
                                           / self.duration) ** 2, 0.0)
        r = self.ramp
        tau_c = np.clip(tau, 0, self.duration)
        up = np.sin(0.5 * np.pi * np.clip(tau_c / r, 0, 1)) ** 2
        down = np.sin(0.5 * np.pi * np.clip((self.duration - tau_c) / r, 0, 1)) ** 2
        return np.where(inside, np.minimum(up, down), 0.0)

    def area(self) -> float:
        """Integral of the envelope over the segment (ns)."""
        if self.envelope == "square":
            return self.duration
        if self.envelope == "cosine":
            return self.duration / 2.0
        return self.duration - self.ramp


@dataclass(frozen=True)
class PulseSchedule:
    segments: tuple[PulseSegment, ...]
    duration: float           # ns, total
    buffer: float = 0.0       # ns, flux-to-drive spacing used by builders

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        by_key: dict[tuple[str, str], list[PulseSegment]] = {}
        for s in segs:
            by_key.setdefault((s.node, s.channel), []).append(s)
        for key, group in by_key.items():
            group = sorted(group, key=lambda s: s.start)
            for a, b in zip(group, group[1:]):
                if b.start < a.end - 1e-12:
                    raise ValidationError(f"overlapping segments on {key}")
        max_end = max((s.end for s in segs), default=0.0)
        if self.duration < max_end - 1e-12:
            raise ValidationError("total duration shorter than last segment end")

    def charge_segments(self) -> list[PulseSegment]:
        return [s for s in self.segments if s.channel == "charge-drive"]

    def flux_segments(self) -> list[PulseSegment]:
        return [s for s in self.segments if s.channel == "flux"]

    def to_dict(self) -> dict:
        return {
            "duration": self.duration,
            "buffer": self.buffer,
            "segments": [
                {"node": s.node, "channel": s.channel, "envelope": s.envelope,
                 "amplitude": s.amplitude, "start": s.start, "duration": s.duration,
                 "frequency": s.frequency, "phase": s.phase, "ramp": s.ramp}
                for s in self.segments
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PulseSchedule":
        segs = tuple(PulseSegment(**s) for s in d["segments"])
        return cls(segs, d["duration"], d.get("buffer", 0.0))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "PulseSchedule":
        return cls.from_dict(json.loads(text))


def drive_schedule(node: str, frequency: float, amplitude: float, duration: float,
                   envelope: str = "cosine", phase: float = 0.0, start: float = 0.0,
                   ramp: float = 0.0) -> PulseSchedule:
    seg = PulseSegment(node, "charge-drive", envelope, amplitude, start, duration,
                       frequency, phase, ramp)
    return PulseSchedule((seg,), start + duration)


def cz_schedule(drive_node: str, frequency: float, amplitude: float,
                drive_duration: float = 60.0, envelope: str = "cosine",
                flux_node: str | None = None, flux_value: float = 0.5,
                buffer: float = 10.0) -> PulseSchedule:
    """Gate schedule: optional square flux window enclosing the drive."""
    if flux_node is None:
        return drive_schedule(drive_node, frequency, amplitude, drive_duration,
                              envelope=envelope)
    flux = PulseSegment(flux_node, "flux", "square", flux_value, 0.0,
                        drive_duration + 2 * buffer)
    drive = PulseSegment(drive_node, "charge-drive", envelope, amplitude,
                         buffer, drive_duration, frequency)
    return PulseSchedule((flux, drive), flux.duration, buffer)


@dataclass
class GateResult:
    """Outcome of a propagation, with CZ metrics when computed."""

    final: np.ndarray
    duration: float
    unitarity_defect: float | None = None
    conditional_phase: float | None = None
    leakage: float | None = None
    fidelity: float | None = None
    phase_corrections: dict[str, float] | None = None


def _flux_windows(operators: OperatorSet, schedule: PulseSchedule):
    """Split [0, T] into windows of constant flux and build each window's
    operator set (reusing the base one where fluxes match)."""
    flux_segs = schedule.flux_segments()
    bounds = {0.0, schedule.duration}
    for s in flux_segs:
        bounds.add(max(0.0, s.start))
        bounds.add(min(schedule.duration, s.end))
    edges = sorted(bounds)
    windows = []
    for t0, t1 in zip(edges, edges[1:]):
        if t1 - t0 <= 1e-12:
            continue
        fluxes = dict(operators.flux_point)
        for s in flux_segs:
            if s.start <= t0 + 1e-12 and s.end >= t1 - 1e-12:
                if s.node not in fluxes:
                    raise ValidationError(f"flux segment on node {s.node!r} outside subsystem")
                fluxes[s.node] = s.amplitude
        windows.append((t0, t1, fluxes))
    if not windows:
        windows = [(0.0, schedule.duration, dict(operators.flux_point))]
    return windows


def _window_operators(operators: OperatorSet, fluxes: dict[str, float]) -> OperatorSet:
    if all(abs(fluxes[nm] - operators.flux_point[nm]) < 1e-15 for nm in operators.names):
        return operators
    if operators.config is None:
        raise ValidationError("flux pulses need an OperatorSet built from a DeviceConfig")
    levels = dict(zip(operators.names, operators.levels))
    return build_composite(operators.config, list(operators.names), levels,
                           flux_point=fluxes)


def _product_basis_overlap(ops_a: OperatorSet, ops_b: OperatorSet) -> np.ndarray:
    """<basis_b | basis_a> between the two product bases, via per-element
    eigenvector overlaps in the underlying numerical basis."""
    mats = []
    for nm in ops_a.names:
        va = ops_a.element_eigvecs[nm]
        vb = ops_b.element_eigvecs[nm]
        mats.append(vb.conj().T @ va)
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def propagate(
    operators: OperatorSet,
    schedule: PulseSchedule,
    initial: np.ndarray | None = None,
    frame: str = "lab",
    keep_levels: int | None = None,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    max_step: float | None = None,
    rwa_cutoff: float = 1.0,
) -> GateResult:
    """Solve the time-dependent Schroedinger equation for a schedule.

    ``initial`` is a state vector or a matrix of column states in the
    dressed basis of ``operators`` (None propagates the identity).
    ``keep_levels`` truncates the dressed basis to its lowest K states;
    states far above the driven manifold only contribute virtual shifts,
    which the truncation convergence test bounds.
    """
    if frame not in ("lab", "rwa"):
        raise ValidationError(f"unknown frame {frame!r}")
    for seg in schedule.charge_segments():
        if seg.node not in operators.names:
            raise ValidationError(f"drive on node {seg.node!r} outside subsystem {operators.names}")

    dim = operators.dim
    k = min(keep_levels, dim) if keep_levels else dim
    if initial is None:
        psi = np.eye(k, dtype=complex)
        propagator_mode = True
    else:
        psi = np.asarray(initial, dtype=complex)
        if psi.ndim == 1:
            psi = psi[:, None]
        if psi.shape[0] != k:
            raise ValidationError(f"initial state has {psi.shape[0]} rows, expected {k}")
        psi = psi.copy()
        propagator_mode = False

    windows = _flux_windows(operators, schedule)
    window_ops = [_window_operators(operators, fl) for _, _, fl in windows]

    for w, ((t0, t1, _), ops_w) in enumerate(zip(windows, window_ops)):
        energies = ops_w.energies[:k]
        segs = [s for s in schedule.charge_segments()
                if s.start < t1 - 1e-12 and s.end > t0 + 1e-12]
        if segs:
            drives = [(s, ops_w.charge_op(s.node, frame="eigen")[:k, :k]) for s in segs]
            psi = _integrate_window(psi, energies, drives, t0, t1, frame,
                                    rtol, atol, max_step, rwa_cutoff)
        # close the window in the lab frame of this window's basis
        psi = np.exp(-2j * np.pi * energies * (t1 - t0))[:, None] * psi
        if w + 1 < len(windows):
            nxt = window_ops[w + 1]
            t_prod = _product_basis_overlap(ops_w, nxt)
            psi = (nxt.eigvecs.conj().T @ t_prod @ ops_w.eigvecs[:, :k]) @ psi
            psi = psi[:k]

    if window_ops[-1] is not operators:
        t_prod = _product_basis_overlap(window_ops[-1], operators)
        psi = (operators.eigvecs.conj().T @ t_prod @ window_ops[-1].eigvecs[:, :k]) @ psi
        psi = psi[:k]
    # interaction picture relative to the base static Hamiltonian
    psi = np.exp(2j * np.pi * operators.energies[:k] * schedule.duration)[:, None] * psi

    defect = None
    if propagator_mode and not schedule.flux_segments():
        gram = psi.conj().T @ psi
        defect = float(np.max(np.abs(gram - np.eye(k))))
    out = psi if initial is None or np.asarray(initial).ndim != 1 else psi[:, 0]
    return GateResult(final=out, duration=schedule.duration, unitarity_defect=defect)


def _integrate_window(psi, energies, drives, t0, t1, frame, rtol, atol, max_step, rwa_cutoff):
    k, m = psi.shape
    w = 2.0 * np.pi * energies

    if frame == "rwa":
        terms = []
        for seg, n_op in drives:
            rates = energies[:, None] - energies[None, :]
            lower = np.abs(rates - seg.frequency) <= np.abs(rates + seg.frequency)
            rate = np.where(lower, rates - seg.frequency, rates + seg.frequency)
            keep = np.abs(rate) <= rwa_cutoff
            const = np.where(lower,
                             np.exp(-1j * (2 * np.pi * seg.frequency * t0 + seg.phase)),
                             np.exp(1j * (2 * np.pi * seg.frequency * t0 + seg.phase)))
            base = 0.5 * n_op * const * keep
            if np.any(keep & (np.abs(n_op) > 0)):
                terms.append((seg, base, 2 * np.pi * rate))

        def rhs(tau, y):
            cur = y.view(complex).reshape(k, m)
            acc = np.zeros_like(cur)
            t_abs = t0 + tau
            for seg, base, rate in terms:
                amp = seg.amplitude * seg.envelope_at(t_abs)
                if amp == 0.0:
                    continue
                v = base * np.exp(1j * rate * tau)
                acc += amp * (v @ cur)
            return (-2j * np.pi * acc).ravel().view(float)
    else:
        def rhs(tau, y):
            cur = y.view(complex).reshape(k, m)
            phase = np.exp(1j * w * tau)
            acc = np.zeros_like(cur)
            t_abs = t0 + tau
            for seg, n_op in drives:
                amp = seg.amplitude * seg.envelope_at(t_abs)
                if amp == 0.0:
                    continue
                amp = amp * math.cos(2 * math.pi * seg.frequency * t_abs + seg.phase)
                v = phase[:, None] * n_op * phase.conj()[None, :]
                acc += amp * (v @ cur)
            return (-2j * np.pi * acc).ravel().view(float)

    kwargs = {} if max_step is None else {"max_step": max_step}
    sol = solve_ivp(rhs, (0.0, t1 - t0), psi.astype(complex).ravel().view(float),
                    method="DOP853", rtol=rtol, atol=atol, **kwargs)
    if not sol.success:
        raise ConvergenceError(f"integrator failed: {sol.message}")
    return sol.y[:, -1].view(complex).reshape(k, m)


def _wrap_angle(x: float) -> float:
    return float(np.angle(np.exp(1j * x)))


def computational_indices(spectrum: SpectrumResult, names, qubits) -> list[int]:
    """Dressed indices of (gg, ge, eg, ee) on the two named qubits, all
    other subsystem nodes in g."""
    pos = {q: list(names).index(q) for q in qubits}
    idx = []
    for sa, sb in (("g", "g"), ("g", "e"), ("e", "g"), ("e", "e")):
        chars = ["g"] * len(names)
        chars[pos[qubits[0]]] = sa
        chars[pos[qubits[1]]] = sb
        idx.append(spectrum.index_of("".join(chars)))
    return idx


def cz_metrics(
    operators: OperatorSet,
    propagator: np.ndarray,
    qubits: tuple[str, str],
    spectrum: SpectrumResult | None = None,
    phase_corrections: dict[str, float] | None = None,
    duration: float = 0.0,
) -> GateResult:
    """Conditional phase, leakage and average CZ fidelity of a propagator.

    The propagator lives in the (possibly truncated) dressed basis. When
    no explicit virtual-Z corrections are supplied, the single-qubit
    phases read off the propagator diagonal are used, which is what an
    ideal virtual-Z calibration would apply.
    """
    spectrum = spectrum or label_states(operators)
    idx = computational_indices(spectrum, operators.names, qubits)
    if max(idx) >= propagator.shape[0]:
        raise ValidationError("propagator truncation dropped a computational state")
    m = propagator[np.ix_(idx, idx)]
    diag_phases = np.angle(np.diag(m))
    cond = _wrap_angle(diag_phases[0] - diag_phases[1] - diag_phases[2] + diag_phases[3])
    leak = 1.0 - float(np.mean(np.sum(np.abs(m) ** 2, axis=0)))

    if phase_corrections is None:
        alpha = _wrap_angle(diag_phases[2] - diag_phases[0])
        beta = _wrap_angle(diag_phases[1] - diag_phases[0])
        corrections = {qubits[0]: alpha, qubits[1]: beta}
    else:
        corrections = dict(phase_corrections)
        alpha = corrections[qubits[0]]
        beta = corrections[qubits[1]]
    z_corr = np.diag(np.exp(-1j * np.array([0.0, beta, alpha, alpha + beta])))
    m_corr = z_corr @ m
    cz = np.diag([1.0, 1.0, 1.0, -1.0])
    d = 4
    fid = (np.trace(m_corr.conj().T @ m_corr).real
           + np.abs(np.trace(cz @ m_corr)) ** 2) / (d * (d + 1))
    return GateResult(final=propagator, duration=duration,
                      conditional_phase=cond, leakage=leak, fidelity=float(fid),
                      phase_corrections=corrections)


def chevron_scan(
    operators: OperatorSet,
    drive_node: str,
    frequencies,
    amplitudes,
    duration: float,
    initial_label: str,
    envelope: str = "square",
    frame: str = "rwa",
    keep_levels: int | None = 48,
    threads: int | None = None,
    spectrum: SpectrumResult | None = None,
) -> np.ndarray:
    """Population remaining in the initial labeled state per (f, A) point.

    Returns an array of shape (len(frequencies), len(amplitudes)).
    """
    spectrum = spectrum or label_states(operators)
    i0 = spectrum.index_of(initial_label)
    k = min(keep_levels or operators.dim, operators.dim)
    if i0 >= k:
        raise LabelingError(f"initial state {initial_label!r} above truncation")
    freqs = np.atleast_1d(np.asarray(frequencies, dtype=float))
    amps = np.atleast_1d(np.asarray(amplitudes, dtype=float))
    psi0 = np.zeros(k, dtype=complex)
    psi0[i0] = 1.0

    def run_one(fa):
        f, a = fa
        sched = drive_schedule(drive_node, f, a, duration, envelope=envelope)
        res = propagate(operators, sched, initial=psi0, frame=frame,
                        keep_levels=k)
        return float(np.abs(res.final[i0]) ** 2)

    points = [(f, a) for f in freqs for a in amps]
    if threads is not None and threads <= 1:
        values = [run_one(p) for p in points]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(run_one, points))
    return np.asarray(values).reshape(len(freqs), len(amps))


@dataclass
class CalibrationResult:
    schedule: PulseSchedule
    gate: GateResult
    phase_corrections: dict[str, float]
    target: tuple[str, str]
    drive_frequency: float
    drive_amplitude: float
    history: dict = field(default_factory=dict)


def fit_phase_per_gate(counts, phases) -> tuple[float, float]:
    """Linear fit phi(N) = N*phi_sq + phi0 on unwrapped repeated-gate phases."""
    counts = np.asarray(counts, dtype=float)
    phases = np.unwrap(np.asarray(phases, dtype=float))
    slope, intercept = np.polyfit(counts, phases, 1)
    return float(slope), float(intercept)


def calibrate_cz(
    operators: OperatorSet,
    drive_node: str,
    target_transition: tuple[str, str] | None = None,
    qubits: tuple[str, str] | None = None,
    duration: float = 60.0,
    envelope: str = "cosine",
    frame: str = "lab",
    keep_levels: int = 48,
    isolation_threshold: float = 0.01,
    phase_tolerance: float = 1e-3,
    stage_budget: int = 60,
) -> CalibrationResult:
    """Four-stage MAP CZ calibration on a static flux configuration.

    (i) identify the gate transition from the labeled spectrum, (ii)
    locate the resonance by scanning the drive frequency at half the 2pi
    amplitude, (iii) set the amplitude for a full population return, then
    fine-tune the frequency until the conditional phase is pi within
    tolerance, and (iv) extract per-qubit virtual-Z corrections from a
    linear fit of accumulated phase versus repeated gate count.
    """
    spectrum = label_states(operators)
    if qubits is None:
        qubits = tuple(nm for nm in operators.names
                       if operators.config and operators.config.node(nm).kind == "fluxonium")
        if len(qubits) != 2:
            raise ValidationError("cannot infer qubit pair; pass qubits=")
    if target_transition is None:
        target_transition = identify_map_transition(spectrum)
    i_lab, f_lab = target_transition
    d_min, competitor = delta_min_from_spectrum(spectrum, target_transition)
    if d_min < isolation_threshold:
        raise ConvergenceError(
            f"target {i_lab}->{f_lab} not isolated: delta_min {d_min*1e3:.1f} MHz "
            f"< {isolation_threshold*1e3:.1f} MHz (competitor {competitor})")
    i0 = spectrum.index_of(i_lab)
    f0 = spectrum.index_of(f_lab)
    freq0 = float(spectrum.energies[f0] - spectrum.energies[i0])
    n_op = operators.charge_op(drive_node, frame="eigen")
    m_el = float(np.abs(n_op[f0, i0]))
    if m_el < 1e-6:
        raise ConvergenceError(f"target transition has no {drive_node} drive weight")

    k = min(keep_levels, operators.dim)
    if max(i0, f0) >= k:
        raise ValidationError("keep_levels truncates the target transition")
    probe = np.zeros(k, dtype=complex)
    probe[i0] = 1.0
    area = PulseSegment(drive_node, "charge-drive", envelope, 1.0, 0.0, duration,
                        ramp=duration / 4 if envelope == "cosine-flat-top" else 0.0).area()
    amp_2pi = 1.0 / (area * m_el)
    evals = {"frequency": 0, "amplitude": 0, "phase": 0}

    def return_pop(freq, amp):
        sched = drive_schedule(drive_node, freq, amp, duration, envelope=envelope,
                               ramp=duration / 4 if envelope == "cosine-flat-top" else 0.0)
        res = propagate(operators, sched, initial=probe, frame=frame, keep_levels=k)
        return float(np.abs(res.final[i0]) ** 2)

    # (ii) resonance: minimize return population at the pi amplitude.
    # Window stays well inside delta_min so a competitor cannot capture it.
    rabi_peak = 1.0 / (2.0 * area)
    half_width = min(max(1.5 * rabi_peak, 0.002), 0.45 * d_min)

    def freq_obj(f):
        evals["frequency"] += 1
        return return_pop(f, amp_2pi / 2.0)

    r = minimize_scalar(freq_obj, bounds=(freq0 - half_width, freq0 + half_width),
                        method="bounded",
                        options={"xatol": 1e-5, "maxiter": stage_budget})
    freq_res = float(r.x)

    # (iii.a) amplitude: maximize return at resonance (full 2pi rotation)
    def amp_obj(a):
        evals["amplitude"] += 1
        return -return_pop(freq_res, a)

    r = minimize_scalar(amp_obj, bounds=(0.75 * amp_2pi, 1.25 * amp_2pi),
                        method="bounded",
                        options={"xatol": 1e-5 * amp_2pi, "maxiter": stage_budget})
    amp_cal = float(r.x)

    # (iii.b) conditional phase -> pi
    idx = computational_indices(spectrum, operators.names, qubits)
    psi_comp = np.zeros((k, 4), dtype=complex)
    for col, j in enumerate(idx):
        psi_comp[j, col] = 1.0

    def propagator_at(freq):
        sched = drive_schedule(drive_node, freq, amp_cal, duration, envelope=envelope,
                               ramp=duration / 4 if envelope == "cosine-flat-top" else 0.0)
        res = propagate(operators, sched, initial=psi_comp, frame=frame, keep_levels=k)
        return res.final, sched

    def phase_err(freq):
        evals["phase"] += 1
        u4, _ = propagator_at(freq)
        ph = np.angle([u4[j, c] for c, j in enumerate(idx)])
        cond = _wrap_angle(ph[0] - ph[1] - ph[2] + ph[3])
        return abs(abs(cond) - math.pi)

    span = max(min(d_min / 4.0, 0.004), 5e-4)
    r = minimize_scalar(phase_err, bounds=(freq_res - span, freq_res + span),
                        method="bounded",
                        options={"xatol": 1e-7, "maxiter": stage_budget})
    freq_cal = float(r.x)
    final_err = phase_err(freq_cal)
    if final_err > phase_tolerance:
        raise ConvergenceError(
            f"conditional phase missed pi by {final_err:.2e} rad after "
            f"{evals['phase']} evaluations (tolerance {phase_tolerance:.0e})")

    # final propagator on the truncated basis
    sched = drive_schedule(drive_node, freq_cal, amp_cal, duration, envelope=envelope,
                           ramp=duration / 4 if envelope == "cosine-flat-top" else 0.0)
    res = propagate(operators, sched, initial=None, frame=frame, keep_levels=k)
    u = res.final

    # (iv) virtual-Z from repeated-gate phase accumulation
    corrections = {}
    n_reps = np.arange(1, 9)
    u_pow = np.eye(k, dtype=complex)
    ph_a, ph_b = [], []
    for _ in n_reps:
        u_pow = u @ u_pow
        d_ph = np.angle(np.diag(u_pow)[idx])
        ph_a.append(d_ph[2] - d_ph[0])
        ph_b.append(d_ph[1] - d_ph[0])
    corrections[qubits[0]], _ = fit_phase_per_gate(n_reps, ph_a)
    corrections[qubits[1]], _ = fit_phase_per_gate(n_reps, ph_b)

    gate = cz_metrics(operators, u, qubits, spectrum=spectrum,
                      phase_corrections=corrections, duration=duration)
    gate.unitarity_defect = res.unitarity_defect
    return CalibrationResult(
        schedule=sched, gate=gate, phase_corrections=corrections,
        target=(i_lab, f_lab), drive_frequency=freq_cal, drive_amplitude=amp_cal,
        history={"delta_min": d_min, "matrix_element": m_el,
                 "spectral_frequency": freq0, "resonance_frequency": freq_res,
                 "amp_2pi_estimate": amp_2pi, "evaluations": evals,
                 "final_phase_error": final_err},
    )


def detuning_phase_error(delta: float, rabi: float) -> float:
    """Deviation of the cyclic-drive geometric phase from pi.

    One generalized Rabi cycle about the tilted axis encloses solid angle
    2*pi*(1 - cos(theta)); the accumulated geometric phase is half of it,
    so the error is pi*|cos(theta)| with cos(theta) = delta/sqrt(delta^2+rabi^2).
    Even in delta and invariant under joint rescaling of (delta, rabi).
    """
    if rabi <= 0:
        raise ValidationError("rabi rate must be positive")
    return math.pi * abs(delta) / math.hypot(delta, rabi)


def spectator_phase_report(
    config,
    active_pair: tuple[str, str],
    spectator: str,
    coupler_fluxes: dict[str, float] | None = None,
    drive_states: tuple[str, str] | None = None,
    spectator_states: str = "gef",
    gate_duration: float = 120.0,
    levels: dict[str, int] | None = None,
) -> list[dict]:
    """Spectator-state-dependent gate-frequency shifts and phase errors.

    The shift for each spectator state is referenced to the all-ground
    spectator; the phase error applies the cyclic-drive closed form at
    the Rabi rate of a gate whose full cycle spans ``gate_duration``.
    """
    active_sub = config.chain_between(*active_pair)
    active_couplers = [nm for nm in active_sub if config.node(nm).kind == "coupler"]
    if len(active_couplers) != 1:
        raise ValidationError("active pair must span exactly one coupler")
    near_qubit = min(active_pair, key=lambda q: abs(config.index(q) - config.index(spectator)))
    spect_span = config.chain_between(near_qubit, spectator)
    spect_couplers = [nm for nm in spect_span if config.node(nm).kind == "coupler"]
    if len(spect_couplers) != 1:
        raise ValidationError("spectator must sit one coupler past the active pair")
    coupler_fluxes = dict(coupler_fluxes or {})
    active_flux = coupler_fluxes.get(active_couplers[0], 0.5)
    spect_flux = coupler_fluxes.get(spect_couplers[0], 0.0)

    if drive_states is None:
        sub_levels = {nm: (6 if config.node(nm).kind == "fluxonium" else 5)
                      for nm in active_sub}
        ops = build_composite(config, active_sub, sub_levels,
                              flux_point={active_couplers[0]: active_flux})
        drive_states = identify_map_transition(label_states(ops))

    freqs = spectator_frequencies(
        config, active_pair, spectator, drive_states, spect_flux,
        active_coupler_flux=active_flux, spectator_states=spectator_states,
        levels=levels)
    rabi = 1.0 / gate_duration
    ref = freqs["g"] if "g" in freqs else freqs[spectator_states[0]]
    rows = []
    for state in spectator_states:
        shift = freqs[state] - ref
        rows.append({
            "spectator_state": state,
            "frequency": freqs[state],
            "shift": shift,
            "phase_error": detuning_phase_error(shift, rabi),
        })
    return rows
