"""Figure-of-merit sweeps on labeled spectra.

Transition tables, the minimum spectral detuning of a target transition
(selectivity), the maximum spectator-induced shift of a gate transition,
and the static ZZ coupling, all as exact eigenvalue differences within a
single diagonalization so that kHz-scale outputs are meaningful.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .device import DeviceConfig
from .errors import LabelingError, ValidationError
from .hamiltonian import (OperatorSet, SpectrumResult, build_composite,
                          char_level, label_states)

# Default kept levels per element kind, by subsystem size. Three-node
# subsystems afford more levels; five-node ones trade levels for runtime.
_LEVELS_3 = {"fluxonium": 6, "coupler": 5}
_LEVELS_5 = {"fluxonium": 5, "coupler": 4}


def default_levels(config: DeviceConfig, subsystem: list[str]) -> dict[str, int]:
    table = _LEVELS_3 if len(subsystem) <= 3 else _LEVELS_5
    return {nm: table[config.node(nm).kind] for nm in subsystem}


def excitation_count(label: str) -> int:
    return sum(char_level(c) for c in label)


def _labeled_energies(spectrum: SpectrumResult, strict: bool = False) -> dict[str, float]:
    out = {}
    for lab, e, amb in zip(spectrum.labels, spectrum.energies, spectrum.ambiguous):
        if strict and amb:
            continue
        out[lab] = float(e)
    return out


@dataclass
class Transition:
    initial: str
    final: str
    frequency: float
    matrix_elements: dict[str, float] = field(default_factory=dict)


@dataclass
class TransitionTable:
    """Upward transitions out of one labeled state, with per-node drive
    matrix elements |<f| n_k |i>|."""

    from_label: str
    transitions: list[Transition]
    flux_point: dict[str, float]

    def frequency(self, final: str) -> float:
        for t in self.transitions:
            if t.final == final:
                return t.frequency
        raise LabelingError(f"no transition to {final!r} in table")

    def strongest(self, drive_node: str, count: int = 5) -> list[Transition]:
        return sorted(self.transitions,
                      key=lambda t: t.matrix_elements.get(drive_node, 0.0),
                      reverse=True)[:count]

    def rows(self) -> list[dict]:
        return [
            {"initial": t.initial, "final": t.final, "frequency": t.frequency,
             **{f"n_{k}": v for k, v in t.matrix_elements.items()}}
            for t in self.transitions
        ]


def transition_table(
    spectrum: SpectrumResult,
    operators: OperatorSet,
    from_label: str,
    max_excitation: int | None = None,
) -> TransitionTable:
    """All upward transitions from ``from_label`` with drive matrix elements."""
    i = spectrum.index_of(from_label)
    e_i = spectrum.energies[i]
    n_ops = {nm: operators.charge_op(nm, frame="eigen") for nm in operators.names}
    transitions = []
    for d, (lab, e_f) in enumerate(zip(spectrum.labels, spectrum.energies)):
        if d == i or e_f <= e_i:
            continue
        if max_excitation is not None and excitation_count(lab) > max_excitation:
            continue
        elems = {nm: float(np.abs(n_ops[nm][d, i])) for nm in operators.names}
        transitions.append(Transition(from_label, lab, float(e_f - e_i), elems))
    transitions.sort(key=lambda t: t.frequency)
    return TransitionTable(from_label, transitions, dict(spectrum.flux_point))


def delta_min_from_spectrum(
    spectrum: SpectrumResult,
    target: tuple[str, str],
    excitation_bound: int | None = None,
) -> tuple[float, tuple[str, str]]:
    """Minimum detuning between the target transition and its competitors.

    The competing set contains every upward transition between labeled
    states whose initial state is the target's initial or differs from it
    by a single excitation on one node, bounded to states with total
    excitation count <= that of the target's final state + 1 (so the set
    does not grow with basis truncation).
    """
    i_lab, f_lab = target
    energies = _labeled_energies(spectrum)
    for lab in target:
        if lab not in energies:
            raise LabelingError(f"target state {lab!r} not labeled at this flux point")
        if spectrum.ambiguous[spectrum.index_of(lab)]:
            raise LabelingError(f"target state {lab!r} is ambiguous at this flux point")
    f_target = energies[f_lab] - energies[i_lab]
    if excitation_bound is None:
        excitation_bound = excitation_count(f_lab) + 1

    initials = {i_lab}
    for lab in energies:
        diff = [(a, b) for a, b in zip(lab, i_lab) if a != b]
        if len(diff) == 1 and abs(char_level(diff[0][0]) - char_level(diff[0][1])) == 1:
            initials.add(lab)

    best = None
    for i2 in initials:
        if excitation_count(i2) > excitation_bound:
            continue
        e_i2 = energies[i2]
        for f2, e_f2 in energies.items():
            if f2 == i2 or (i2, f2) == (i_lab, f_lab):
                continue
            if excitation_count(f2) > excitation_bound:
                continue
            freq = e_f2 - e_i2
            if freq <= 0:
                continue
            d = abs(freq - f_target)
            if best is None or d < best[0]:
                best = (d, (i2, f2))
    if best is None:
        raise LabelingError("no competing transitions in the candidate set")
    return best


def delta_min(
    config: DeviceConfig,
    active_pair: tuple[str, str],
    target_transition: tuple[str, str],
    flux: float,
    levels: dict[str, int] | None = None,
) -> float:
    """Spectral selectivity of a gate transition at one coupler flux."""
    sub = config.chain_between(*active_pair)
    coupler = [nm for nm in sub if config.node(nm).kind == "coupler"]
    if len(coupler) != 1:
        raise ValidationError(f"active pair {active_pair} must span exactly one coupler")
    ops = build_composite(config, sub, levels or default_levels(config, sub),
                          flux_point={coupler[0]: flux})
    spectrum = label_states(ops)
    value, _ = delta_min_from_spectrum(spectrum, target_transition)
    return value


def identify_map_transition(
    spectrum: SpectrumResult,
    coupler_position: int = 1,
) -> tuple[str, str]:
    """Pick the gate transition the calibration would drive.

    Candidates are coupler excitations out of each computational state
    (qubits in g/e, couplers in g); the most spectrally isolated one wins,
    mirroring the selection of an isolated high-contrast feature.
    """
    energies = _labeled_energies(spectrum)
    n_slots = len(spectrum.labels[0])
    best = None
    for lab in energies:
        parts = [char_level(c) for c in lab]
        if any(p > 1 for p in parts) or parts[coupler_position] != 0:
            continue
        final_parts = list(parts)
        final_parts[coupler_position] = 1
        f_lab = "".join("gef"[p] if p < 3 else str(p) for p in final_parts)
        if f_lab not in energies:
            continue
        try:
            d, _ = delta_min_from_spectrum(spectrum, (lab, f_lab))
        except LabelingError:
            continue
        if best is None or d > best[0]:
            best = (d, (lab, f_lab))
    if best is None:
        raise LabelingError("no labelable coupler-excitation transition found")
    return best[1]


def epsilon_max_from_energies(frequencies: dict[str, float]) -> float:
    """Max pairwise difference of the gate frequency across spectator states."""
    keys = sorted(frequencies)
    vals = [frequencies[k] for k in keys]
    return max(abs(a - b) for m, a in enumerate(vals) for b in vals[m + 1:]) if len(vals) > 1 else 0.0


def spectator_frequencies(
    config: DeviceConfig,
    active_pair: tuple[str, str],
    spectator: str,
    drive_states: tuple[str, str],
    spectator_coupler_flux: float,
    active_coupler_flux: float = 0.5,
    spectator_states: str = "gef",
    levels: dict[str, int] | None = None,
) -> dict[str, float]:
    """Gate transition frequency per spectator state, coupler(s) in g.

    ``drive_states`` are labels of the active block (the chain from one
    active qubit to the other); the spectator chain is appended with its
    coupler held in g and the spectator in each of ``spectator_states``.
    """
    active_sub = config.chain_between(*active_pair)
    i_s = config.index(spectator)
    i_lo = min(config.index(q) for q in active_pair)
    i_hi = max(config.index(q) for q in active_pair)
    if i_lo <= i_s <= i_hi:
        raise ValidationError("spectator must lie outside the active pair span")
    spectator_right = i_s > i_hi
    full_sub = (config.names[i_lo: i_s + 1] if spectator_right
                else config.names[i_s: i_hi + 1])
    extra = [nm for nm in full_sub if nm not in active_sub]
    expected = ["coupler", "fluxonium"] if spectator_right else ["fluxonium", "coupler"]
    if [config.node(nm).kind for nm in extra] != expected:
        raise ValidationError("spectator must be the next qubit past one spectator coupler")
    spect_coupler = next(nm for nm in extra if config.node(nm).kind == "coupler")
    active_couplers = [nm for nm in active_sub if config.node(nm).kind == "coupler"]

    a_lab, b_lab = drive_states
    if len(a_lab) != len(active_sub) or len(b_lab) != len(active_sub):
        raise ValidationError("drive-state labels must cover the active block")

    flux_point = {spect_coupler: spectator_coupler_flux}
    for nm in active_couplers:
        flux_point[nm] = active_coupler_flux
    ops = build_composite(config, full_sub,
                          levels or default_levels(config, full_sub),
                          flux_point=flux_point)
    spectrum = label_states(ops)
    energies = _labeled_energies(spectrum)

    freqs = {}
    for k in spectator_states:
        if spectator_right:
            a_full, b_full = a_lab + "g" + k, b_lab + "g" + k
        else:
            a_full, b_full = k + "g" + a_lab, k + "g" + b_lab
        for lab in (a_full, b_full):
            if lab not in energies:
                raise LabelingError(f"state {lab!r} not labelable at this flux point")
            if spectrum.ambiguous[spectrum.index_of(lab)]:
                raise LabelingError(f"state {lab!r} ambiguous at this flux point")
        freqs[k] = energies[b_full] - energies[a_full]
    return freqs


def epsilon_max(
    config: DeviceConfig,
    active_pair: tuple[str, str],
    spectator: str,
    drive_states: tuple[str, str],
    spectator_coupler_flux: float,
    active_coupler_flux: float = 0.5,
    levels: dict[str, int] | None = None,
) -> float:
    """Maximum spectator-induced shift of the gate transition (h*GHz)."""
    freqs = spectator_frequencies(
        config, active_pair, spectator, drive_states, spectator_coupler_flux,
        active_coupler_flux=active_coupler_flux, levels=levels)
    return epsilon_max_from_energies(freqs)


def zz_from_energies(e_gg: float, e_ge: float, e_eg: float, e_ee: float) -> float:
    return (e_ee - e_eg) - (e_ge - e_gg)


def static_zz(
    config: DeviceConfig,
    qubit_pair: tuple[str, str],
    flux_point: dict[str, float] | None = None,
    levels: dict[str, int] | None = None,
) -> float:
    """Signed ZZ strength zeta = (E_ee - E_eg) - (E_ge - E_gg) in h*GHz.

    Energies come from the chain spanning the pair (couplers in g) within
    one diagonalization, so kHz-scale values carry no cross-run noise.
    """
    sub = config.chain_between(*qubit_pair)
    ops = build_composite(config, sub, levels or default_levels(config, sub),
                          flux_point=flux_point)
    spectrum = label_states(ops)
    energies = _labeled_energies(spectrum)
    ia = sub.index(qubit_pair[0])
    ib = sub.index(qubit_pair[1])

    def lab(sa: str, sb: str) -> str:
        chars = ["g"] * len(sub)
        chars[ia], chars[ib] = sa, sb
        return "".join(chars)

    needed = [lab("g", "g"), lab("g", "e"), lab("e", "g"), lab("e", "e")]
    for l in needed:
        if l not in energies:
            raise LabelingError(f"computational state {l!r} not labelable")
        if spectrum.ambiguous[spectrum.index_of(l)]:
            raise LabelingError(f"computational state {l!r} ambiguous")
    return zz_from_energies(*(energies[l] for l in needed))


@dataclass
class SweepResult:
    """One metric evaluated along a flux axis."""

    axis: np.ndarray
    values: np.ndarray
    metric_name: str
    subsystem: str

    def __post_init__(self):
        self.axis = np.asarray(self.axis, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.axis.size == 0:
            raise ValidationError("sweep axis must be non-empty")
        if np.any(np.diff(self.axis) <= 0):
            raise ValidationError("axis not increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("sweep produced non-finite values")

    def to_rows(self) -> list[dict]:
        return [{"flux": float(x), self.metric_name: float(v)}
                for x, v in zip(self.axis, self.values)]


def flux_sweep(
    metric,
    axis,
    metric_name: str = "value",
    subsystem: str = "",
    threads: int | None = None,
    tracking: bool = False,
) -> SweepResult:
    """Evaluate ``metric(flux)`` over an increasing flux grid.

    In the default mode points run in parallel (the eigensolvers release
    the GIL) and ``metric`` takes only the flux value. In tracking mode
    the sweep is sequential by contract and ``metric(flux, carry)`` must
    return ``(value, carry)``, letting label assignments propagate
    adiabatically through anticrossings.
    """
    axis = np.asarray(axis, dtype=float)
    if axis.size == 0:
        raise ValidationError("sweep axis must be non-empty")
    if np.any(np.diff(axis) <= 0):
        raise ValidationError("axis not increasing")

    if tracking:
        values = []
        carry = None
        for i, x in enumerate(axis):
            try:
                value, carry = metric(float(x), carry)
            except Exception as exc:
                raise type(exc)(f"at sweep point {i} (flux={x}): {exc}") from exc
            values.append(value)
        return SweepResult(axis, np.asarray(values, dtype=float), metric_name, subsystem)

    def run_one(i_x):
        i, x = i_x
        try:
            return metric(float(x))
        except Exception as exc:
            raise type(exc)(f"at sweep point {i} (flux={x}): {exc}") from exc

    if threads is not None and threads <= 1:
        values = [run_one((i, x)) for i, x in enumerate(axis)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(run_one, enumerate(axis)))
    return SweepResult(axis, np.asarray(values, dtype=float), metric_name, subsystem)


def tracked_delta_min_metric(
    config: DeviceConfig,
    active_pair: tuple[str, str],
    target_transition: tuple[str, str],
    levels: dict[str, int] | None = None,
):
    """Tracking-mode metric closure for delta_min flux sweeps.

    The first point is labeled by overlap; later points inherit labels by
    energy rank (adiabatic continuation), which keeps the target labeled
    through avoided crossings where single-point assignment is ambiguous.
    """
    sub = config.chain_between(*active_pair)
    coupler = [nm for nm in sub if config.node(nm).kind == "coupler"]
    if len(coupler) != 1:
        raise ValidationError(f"active pair {active_pair} must span exactly one coupler")
    lv = levels or default_levels(config, sub)

    def metric(flux: float, carry):
        ops = build_composite(config, sub, lv, flux_point={coupler[0]: flux})
        if carry is None:
            spectrum = label_states(ops)
        else:
            fresh = label_states(ops)
            spectrum = SpectrumResult(
                energies=ops.energies.copy(),
                labels=list(carry),
                overlaps=fresh.overlaps,
                ambiguous=np.zeros(len(carry), dtype=bool),
                flux_point=dict(ops.flux_point),
            )
        value, _ = delta_min_from_spectrum(spectrum, target_transition)
        return value, list(spectrum.labels)

    return metric
