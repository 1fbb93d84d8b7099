"""Command-line entry point for reproducible runs.

Every run writes a manifest (command, config, resolved parameters, seed,
tool version) into the output directory before any result, then CSV/JSON
data products and matplotlib figures, and finally timings.json. All data
products are byte-reproducible from the manifest; timings.json is the
one file that varies between identical runs.

Exit codes: 0 success, 2 usage error, 3 validation error, 4 numerical
failure. Failures also print a machine-readable JSON object to stderr.
"""

from __future__ import annotations

import csv
import json
import os
import sys
import time
from dataclasses import dataclass, field

import click
import numpy as np

from . import __version__
from .benchmarks import (error_per_cycle, fit_rb, generate_rb, generate_rcs,
                         rb_survival, simulate_rb_depolarized, xeb_fidelity)
from .circuits import NoiseModel, sample_record, simulate_statevector
from .device import load_config, validate
from .dynamics import calibrate_cz, chevron_scan, spectator_phase_report
from .errors import (ConfigError, ConvergenceError, DimensionError, FitError,
                     FtfError, LabelingError, ValidationError)
from .hamiltonian import build_composite, label_states
from .mitigation import ConfusionModel, apply_confusion, unfold
from .opensystem import conditional_ramsey_zz, conditional_t1_experiment
from .protocols import ghz_experiment, ghz_record
from .records import MeasurementRecord
from .spectral import (default_levels, delta_min_from_spectrum, epsilon_max,
                       flux_sweep, identify_map_transition, spectator_frequencies,
                       static_zz, tracked_delta_min_metric, transition_table)

VALIDATION_ERRORS = (ConfigError, ValidationError, DimensionError, LabelingError)
NUMERICAL_ERRORS = (ConvergenceError, FitError)


@dataclass
class RunContext:
    config_path: str | None
    output_dir: str
    seed: int | None
    threads: int | None
    plot: bool
    _config: object = None
    stages: dict = field(default_factory=dict)
    t0: float = 0.0

    @property
    def config(self):
        if self._config is None:
            if self.config_path is None:
                raise ConfigError("this command needs --config")
            self._config = load_config(self.config_path)
            for w in validate(self._config):
                click.echo(f"config warning: {w}", err=True)
        return self._config


def _parse_assignments(values, cast=float) -> dict:
    out = {}
    for item in values:
        if "=" not in item:
            raise click.UsageError(f"expected NAME=VALUE, got {item!r}")
        name, _, raw = item.partition("=")
        try:
            out[name.strip()] = cast(raw)
        except ValueError:
            raise click.UsageError(f"cannot parse value in {item!r}") from None
    return out


def _parse_sweep(spec: str) -> tuple[str, np.ndarray]:
    """NAME=start:stop:step, inclusive of the endpoint within half a step."""
    name, _, grid = spec.partition("=")
    parts = grid.split(":")
    if not name or len(parts) != 3:
        raise click.UsageError(f"sweep must be NAME=start:stop:step, got {spec!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise click.UsageError(f"cannot parse sweep {spec!r}") from None
    if step <= 0 or stop <= start:
        raise click.UsageError("sweep needs stop > start and step > 0")
    count = int(np.floor((stop - start) / step + 0.5)) + 1
    return name.strip(), start + step * np.arange(count)


def _parse_pair(value: str, what: str) -> tuple[str, str]:
    parts = [p.strip() for p in value.split(",")]
    if len(parts) != 2:
        raise click.UsageError(f"{what} must be two comma-separated names")
    return parts[0], parts[1]


def _parse_target(value: str) -> tuple[str, str] | None:
    if value == "auto":
        return None
    parts = value.split(":")
    if len(parts) != 2:
        raise click.UsageError("target must be INITIAL:FINAL labels or 'auto'")
    return parts[0], parts[1]


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(path, rows, fieldnames=None):
    if fieldnames is None:
        fieldnames = list(rows[0].keys()) if rows else []
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def start_run(ctx: RunContext, command: str, params: dict):
    os.makedirs(ctx.output_dir, exist_ok=True)
    manifest = {
        "command": command,
        "config": ctx.config_path,
        "parameters": params,
        "seed": ctx.seed,
        "output_dir": ctx.output_dir,
        "threads": ctx.threads,
        "version": __version__,
    }
    write_json(os.path.join(ctx.output_dir, "manifest.json"), manifest)
    ctx.t0 = time.perf_counter()


def finish_run(ctx: RunContext):
    timings = {"wall_clock_s": time.perf_counter() - ctx.t0,
               "stages_s": ctx.stages}
    write_json(os.path.join(ctx.output_dir, "timings.json"), timings)


def out(ctx: RunContext, name: str) -> str:
    return os.path.join(ctx.output_dir, name)


@click.group()
@click.option("--config", "-c", "config_path", type=click.Path(exists=True),
              default=None, help="Device config file (YAML).")
@click.option("--output-dir", "-o", default=None,
              help="Output directory (default $FTFSIM_OUTPUT_DIR or ./ftfsim-out).")
@click.option("--seed", type=int, default=None, help="Master seed for stochastic runs.")
@click.option("--threads", type=int, default=None, help="Worker-thread cap for sweeps.")
@click.option("--plot/--no-plot", default=True, help="Render figures alongside data.")
@click.version_option(__version__)
@click.pass_context
def main(ctx, config_path, output_dir, seed, threads, plot):
    """Fluxonium-transmon-fluxonium chain simulator and analysis toolkit."""
    outdir = output_dir or os.environ.get("FTFSIM_OUTPUT_DIR", "ftfsim-out")
    ctx.obj = RunContext(config_path, outdir, seed, threads, plot)


def run_command(ctx: RunContext, name: str, params: dict, body):
    start_run(ctx, name, params)
    try:
        body()
    except VALIDATION_ERRORS as exc:
        _fail(name, exc, 3)
    except NUMERICAL_ERRORS as exc:
        _fail(name, exc, 4)
    except FtfError as exc:
        _fail(name, exc, 4)
    finish_run(ctx)


def _fail(command: str, exc: Exception, code: int):
    payload = {"error": type(exc).__name__, "message": str(exc), "command": command}
    click.echo(json.dumps(payload, sort_keys=True), err=True)
    sys.exit(code)


@main.command()
@click.option("--subsystem", default=None, help="Comma-separated node names (default all).")
@click.option("--flux", multiple=True, help="Node flux override NODE=VALUE (repeatable).")
@click.option("--levels", multiple=True, help="Kept levels NODE=K (repeatable).")
@click.pass_obj
def spectrum(ctx: RunContext, subsystem, flux, levels):
    """Labeled composite spectrum at one flux point."""
    params = {"subsystem": subsystem, "flux": list(flux), "levels": list(levels)}

    def body():
        sub = subsystem.split(",") if subsystem else None
        ops = build_composite(
            ctx.config, sub,
            _parse_assignments(levels, int) or None,
            flux_point=_parse_assignments(flux) or None)
        spec = label_states(ops)
        write_json(out(ctx, "spectrum.json"), spec.to_dict())
        rows = [{"index": i, "energy_ghz": float(e), "label": lab,
                 "overlap": float(ov), "ambiguous": bool(amb)}
                for i, (e, lab, ov, amb) in enumerate(
                    zip(spec.energies, spec.labels, spec.overlaps, spec.ambiguous))]
        write_csv(out(ctx, "spectrum.csv"), rows)
        if ctx.plot:
            from .plotting import plot_spectrum_levels, save_figure
            keep = min(len(spec.energies), 30)
            fig = plot_spectrum_levels(spec.energies[:keep], spec.labels[:keep],
                                       spec.ambiguous[:keep],
                                       title=f"subsystem {','.join(ops.names)}")
            save_figure(fig, out(ctx, "spectrum.png"))
        click.echo(f"lowest states: {spec.labels[:6]}")

    run_command(ctx, "spectrum", params, body)


@main.command()
@click.option("--subsystem", required=True, help="Comma-separated node names.")
@click.option("--from-label", "from_label", required=True, help="Initial bare label.")
@click.option("--flux", multiple=True, help="Node flux override NODE=VALUE.")
@click.option("--levels", multiple=True, help="Kept levels NODE=K.")
@click.option("--sweep", default=None, help="Coupler flux sweep NODE=start:stop:step.")
@click.option("--drive", default=None, help="Drive node for matrix-element weights.")
@click.option("--max-excitation", type=int, default=None)
@click.pass_obj
def transitions(ctx: RunContext, subsystem, from_label, flux, levels, sweep, drive,
                max_excitation):
    """Transition table from one labeled state (optionally vs coupler flux)."""
    params = {"subsystem": subsystem, "from_label": from_label, "flux": list(flux),
              "levels": list(levels), "sweep": sweep, "drive": drive,
              "max_excitation": max_excitation}

    def body():
        sub = subsystem.split(",")
        lv = _parse_assignments(levels, int) or None
        base_flux = _parse_assignments(flux)
        kinds = {nm: ctx.config.node(nm).kind for nm in sub}
        drive_node = drive or next(nm for nm in sub if kinds[nm] == "coupler")

        def table_at(flux_point):
            ops = build_composite(ctx.config, sub, lv, flux_point=flux_point)
            spec = label_states(ops)
            return transition_table(spec, ops, from_label, max_excitation=max_excitation)

        if sweep is None:
            table = table_at(base_flux or None)
            write_csv(out(ctx, "transitions.csv"), table.rows())
            write_json(out(ctx, "transitions.json"),
                       {"from": from_label, "transitions": table.rows()})
            click.echo(f"{len(table.transitions)} transitions from {from_label}")
            return

        node, axis = _parse_sweep(sweep)
        rows = []
        branch_freq: dict[str, list] = {}
        branch_strength: dict[str, list] = {}
        for x in axis:
            fp = dict(base_flux)
            fp[node] = float(x)
            table = table_at(fp)
            for t in table.transitions:
                rows.append({"flux": float(x), "final": t.final,
                             "frequency_ghz": t.frequency,
                             "drive_weight": t.matrix_elements.get(drive_node, 0.0)})
        write_csv(out(ctx, "transitions_sweep.csv"), rows)
        finals = {}
        for r in rows:
            finals.setdefault(r["final"], {})[r["flux"]] = r
        top = sorted(finals.items(),
                     key=lambda kv: -max(r["drive_weight"] for r in kv[1].values()))[:6]
        for final, per_flux in top:
            branch_freq[final] = [per_flux.get(float(x), {}).get("frequency_ghz", np.nan)
                                  for x in axis]
            branch_strength[final] = [per_flux.get(float(x), {}).get("drive_weight", 0.0)
                                      for x in axis]
        if ctx.plot:
            from .plotting import plot_transition_branches, save_figure
            fig = plot_transition_branches(axis, branch_freq, branch_strength,
                                           title=f"from |{from_label}> vs {node} flux")
            save_figure(fig, out(ctx, "transitions.png"))
        click.echo(f"swept {len(axis)} points on {node}")

    run_command(ctx, "transitions", params, body)


@main.command(name="delta-min")
@click.option("--pair", required=True, help="Active qubit pair, e.g. Q1,Q2.")
@click.option("--target", default="auto", help="Transition INITIAL:FINAL or 'auto'.")
@click.option("--flux", type=float, default=None, help="Single coupler flux point.")
@click.option("--sweep", default=None, help="Sweep NODE=start:stop:step.")
@click.option("--levels", multiple=True, help="Kept levels NODE=K.")
@click.option("--tracking/--no-tracking", default=True,
              help="Carry labels adiabatically through sweeps.")
@click.pass_obj
def delta_min_cmd(ctx: RunContext, pair, target, flux, sweep, levels, tracking):
    """Spectral selectivity of the gate transition."""
    params = {"pair": pair, "target": target, "flux": flux, "sweep": sweep,
              "levels": list(levels), "tracking": tracking}

    def body():
        qpair = _parse_pair(pair, "--pair")
        lv = _parse_assignments(levels, int) or None
        sub = ctx.config.chain_between(*qpair)
        coupler = next(nm for nm in sub if ctx.config.node(nm).kind == "coupler")
        tgt = _parse_target(target)

        def resolve_target(at_flux):
            if tgt is not None:
                return tgt
            ops = build_composite(ctx.config, sub, lv or default_levels(ctx.config, sub),
                                  flux_point={coupler: at_flux})
            return identify_map_transition(label_states(ops))

        if sweep is None:
            x = 0.5 if flux is None else flux
            t = resolve_target(x)
            ops = build_composite(ctx.config, sub, lv or default_levels(ctx.config, sub),
                                  flux_point={coupler: x})
            value, competitor = delta_min_from_spectrum(label_states(ops), t)
            write_json(out(ctx, "delta_min.json"),
                       {"pair": list(qpair), "target": list(t), "flux": x,
                        "delta_min_ghz": value, "competitor": list(competitor)})
            click.echo(f"delta_min = {value * 1e3:.2f} MHz (competitor {competitor})")
            return

        node, axis = _parse_sweep(sweep)
        t = resolve_target(float(axis[-1]))
        if tracking:
            metric = tracked_delta_min_metric(ctx.config, qpair, t, levels=lv)
            result = flux_sweep(metric, axis, metric_name="delta_min_ghz",
                                subsystem=",".join(sub), tracking=True)
        else:
            def metric(x):
                ops = build_composite(ctx.config, sub,
                                      lv or default_levels(ctx.config, sub),
                                      flux_point={coupler: x})
                return delta_min_from_spectrum(label_states(ops), t)[0]
            result = flux_sweep(metric, axis, metric_name="delta_min_ghz",
                                subsystem=",".join(sub), threads=ctx.threads)
        write_csv(out(ctx, "delta_min.csv"), result.to_rows())
        write_json(out(ctx, "delta_min.json"),
                   {"pair": list(qpair), "target": list(t), "sweep_node": node,
                    "min_ghz": float(np.min(result.values)),
                    "max_ghz": float(np.max(result.values))})
        if ctx.plot:
            from .plotting import plot_sweep, save_figure
            fig = plot_sweep(result.axis, result.values * 1e3, "delta_min (MHz)",
                             title=f"target {t[0]}->{t[1]}")
            save_figure(fig, out(ctx, "delta_min.png"))
        click.echo(f"delta_min range [{np.min(result.values)*1e3:.2f}, "
                   f"{np.max(result.values)*1e3:.2f}] MHz over {len(axis)} points")

    run_command(ctx, "delta-min", params, body)


@main.command(name="epsilon-max")
@click.option("--pair", required=True, help="Active qubit pair, e.g. Q1,Q2.")
@click.option("--spectator", required=True)
@click.option("--drive-states", default="auto", help="Active-block labels A:B or 'auto'.")
@click.option("--active-flux", type=float, default=0.5)
@click.option("--spectator-flux", type=float, default=None)
@click.option("--sweep", default=None, help="Spectator coupler sweep NODE=start:stop:step.")
@click.option("--levels", multiple=True)
@click.pass_obj
def epsilon_max_cmd(ctx: RunContext, pair, spectator, drive_states, active_flux,
                    spectator_flux, sweep, levels):
    """Maximum spectator-induced shift of the gate transition."""
    params = {"pair": pair, "spectator": spectator, "drive_states": drive_states,
              "active_flux": active_flux, "spectator_flux": spectator_flux,
              "sweep": sweep, "levels": list(levels)}

    def body():
        qpair = _parse_pair(pair, "--pair")
        lv = _parse_assignments(levels, int) or None
        ds = _parse_target(drive_states)
        if ds is None:
            sub = ctx.config.chain_between(*qpair)
            ops = build_composite(ctx.config, sub, default_levels(ctx.config, sub),
                                  flux_point={nm: active_flux for nm in sub
                                              if ctx.config.node(nm).kind == "coupler"})
            ds = identify_map_transition(label_states(ops))

        def metric(x):
            return epsilon_max(ctx.config, qpair, spectator, ds, x,
                               active_coupler_flux=active_flux, levels=lv)

        if sweep is None:
            x = 0.0 if spectator_flux is None else spectator_flux
            value = metric(x)
            write_json(out(ctx, "epsilon_max.json"),
                       {"pair": list(qpair), "spectator": spectator,
                        "drive_states": list(ds), "spectator_flux": x,
                        "epsilon_max_ghz": value})
            click.echo(f"epsilon_max = {value * 1e6:.2f} kHz")
            return
        node, axis = _parse_sweep(sweep)
        result = flux_sweep(metric, axis, metric_name="epsilon_max_ghz",
                            subsystem=spectator, threads=ctx.threads)
        write_csv(out(ctx, "epsilon_max.csv"), result.to_rows())
        write_json(out(ctx, "epsilon_max.json"),
                   {"pair": list(qpair), "drive_states": list(ds), "sweep_node": node,
                    "min_ghz": float(np.min(result.values)),
                    "max_ghz": float(np.max(result.values))})
        if ctx.plot:
            from .plotting import plot_sweep, save_figure
            fig = plot_sweep(result.axis, result.values * 1e6, "epsilon_max (kHz)",
                             title=f"A,B = {ds[0]},{ds[1]}", logy=True)
            save_figure(fig, out(ctx, "epsilon_max.png"))
        click.echo(f"epsilon_max range [{np.min(result.values)*1e6:.2f}, "
                   f"{np.max(result.values)*1e6:.2f}] kHz")

    run_command(ctx, "epsilon-max", params, body)


@main.command()
@click.option("--pair", required=True, help="Qubit pair, e.g. Q2,Q3.")
@click.option("--flux", multiple=True, help="Coupler flux NODE=VALUE (repeatable).")
@click.option("--sweep", default=None, help="Sweep NODE=start:stop:step.")
@click.option("--levels", multiple=True)
@click.option("--ramsey/--no-ramsey", default=False,
              help="Cross-check with a time-domain conditional Ramsey fit.")
@click.pass_obj
def zz(ctx: RunContext, pair, flux, sweep, levels, ramsey):
    """Static ZZ coupling between a qubit pair."""
    params = {"pair": pair, "flux": list(flux), "sweep": sweep,
              "levels": list(levels), "ramsey": ramsey}

    def body():
        qpair = _parse_pair(pair, "--pair")
        lv = _parse_assignments(levels, int) or None
        base_flux = _parse_assignments(flux)
        if sweep is None:
            zeta = static_zz(ctx.config, qpair, flux_point=base_flux or None, levels=lv)
            payload = {"pair": list(qpair), "flux": base_flux, "zz_ghz": zeta,
                       "zz_khz": zeta * 1e6}
            if ramsey:
                sub = ctx.config.chain_between(*qpair)
                ops = build_composite(ctx.config, sub,
                                      lv or default_levels(ctx.config, sub),
                                      flux_point=base_flux or None)
                zr, details = conditional_ramsey_zz(ops, qpair[0], qpair[1])
                payload["zz_ramsey_ghz"] = zr
                payload["ramsey_details"] = details
            write_json(out(ctx, "zz.json"), payload)
            click.echo(f"zz = {zeta * 1e6:.4f} kHz")
            return
        node, axis = _parse_sweep(sweep)

        def metric(x):
            fp = dict(base_flux)
            fp[node] = x
            return static_zz(ctx.config, qpair, flux_point=fp, levels=lv)

        result = flux_sweep(metric, axis, metric_name="zz_ghz",
                            subsystem=",".join(qpair), threads=ctx.threads)
        write_csv(out(ctx, "zz.csv"), result.to_rows())
        if ctx.plot:
            from .plotting import plot_sweep, save_figure
            fig = plot_sweep(result.axis, np.abs(result.values) * 1e6, "|zz| (kHz)",
                             title=f"{qpair[0]}-{qpair[1]}", logy=True)
            save_figure(fig, out(ctx, "zz.png"))
        click.echo(f"|zz| range [{np.min(np.abs(result.values))*1e6:.4f}, "
                   f"{np.max(np.abs(result.values))*1e6:.4f}] kHz")

    run_command(ctx, "zz", params, body)


@main.command()
@click.option("--subsystem", required=True)
@click.option("--drive", required=True, help="Driven node.")
@click.option("--initial", required=True, help="Initial bare label.")
@click.option("--final", default=None, help="Final label for auto-centering.")
@click.option("--center", type=float, default=None, help="Center frequency (GHz).")
@click.option("--span", type=float, default=0.03, help="Frequency span (GHz).")
@click.option("--freq-points", type=int, default=15)
@click.option("--amp-points", type=int, default=11)
@click.option("--amp-max", type=float, default=None, help="Max drive amplitude (GHz).")
@click.option("--duration", type=float, default=160.0)
@click.option("--envelope", default="square")
@click.option("--frame", default="rwa", type=click.Choice(["rwa", "lab"]))
@click.option("--flux", multiple=True)
@click.option("--levels", multiple=True)
@click.pass_obj
def chevron(ctx: RunContext, subsystem, drive, initial, final, center, span,
            freq_points, amp_points, amp_max, duration, envelope, frame, flux, levels):
    """2D Rabi chevron: population vs drive frequency and amplitude."""
    params = {k: v for k, v in locals().items() if k != "ctx"}
    params = {"subsystem": subsystem, "drive": drive, "initial": initial,
              "final": final, "center": center, "span": span,
              "freq_points": freq_points, "amp_points": amp_points,
              "amp_max": amp_max, "duration": duration, "envelope": envelope,
              "frame": frame, "flux": list(flux), "levels": list(levels)}

    def body():
        sub = subsystem.split(",")
        ops = build_composite(ctx.config, sub,
                              _parse_assignments(levels, int) or None,
                              flux_point=_parse_assignments(flux) or None)
        spec = label_states(ops)
        c = center
        a_max = amp_max
        if c is None:
            if final is None:
                raise ValidationError("need --center or --final to place the scan")
            c = spec.energy(final) - spec.energy(initial)
        if a_max is None:
            n_op = ops.charge_op(drive, frame="eigen")
            i0 = spec.index_of(initial)
            melems = np.abs(n_op[:, i0])
            melems[i0] = 0.0
            m = float(np.max(melems))
            a_max = 2.0 / (duration * m) if m > 0 else 0.01
        freqs = c + np.linspace(-span / 2, span / 2, freq_points)
        amps = np.linspace(a_max / amp_points, a_max, amp_points)
        pop = chevron_scan(ops, drive, freqs, amps, duration, initial,
                           envelope=envelope, frame=frame, threads=ctx.threads,
                           spectrum=spec)
        rows = [{"frequency_ghz": float(f), "amplitude_ghz": float(a),
                 "population": float(pop[i, j])}
                for i, f in enumerate(freqs) for j, a in enumerate(amps)]
        write_csv(out(ctx, "chevron.csv"), rows)
        write_json(out(ctx, "chevron.json"),
                   {"center_ghz": float(c), "duration_ns": duration,
                    "initial": initial, "frame": frame,
                    "min_population": float(pop.min())})
        if ctx.plot:
            from .plotting import plot_chevron, save_figure
            fig = plot_chevron(freqs, amps, pop,
                               title=f"|{initial}> return, {duration:.0f} ns {envelope}")
            save_figure(fig, out(ctx, "chevron.png"))
        click.echo(f"chevron {freq_points}x{amp_points}, min population {pop.min():.3f}")

    run_command(ctx, "chevron", params, body)


@main.command(name="calibrate-cz")
@click.option("--subsystem", required=True)
@click.option("--drive", required=True)
@click.option("--target", default="auto", help="Transition INITIAL:FINAL or 'auto'.")
@click.option("--duration", type=float, default=60.0)
@click.option("--envelope", default="cosine")
@click.option("--frame", default="lab", type=click.Choice(["lab", "rwa"]))
@click.option("--keep-levels", type=int, default=48)
@click.option("--flux", multiple=True)
@click.option("--levels", multiple=True)
@click.pass_obj
def calibrate_cz_cmd(ctx: RunContext, subsystem, drive, target, duration, envelope,
                     frame, keep_levels, flux, levels):
    """Four-stage microwave-activated CZ calibration."""
    params = {"subsystem": subsystem, "drive": drive, "target": target,
              "duration": duration, "envelope": envelope, "frame": frame,
              "keep_levels": keep_levels, "flux": list(flux), "levels": list(levels)}

    def body():
        sub = subsystem.split(",")
        ops = build_composite(ctx.config, sub,
                              _parse_assignments(levels, int) or None,
                              flux_point=_parse_assignments(flux) or None)
        cal = calibrate_cz(ops, drive, target_transition=_parse_target(target),
                           duration=duration, envelope=envelope, frame=frame,
                           keep_levels=keep_levels)
        with open(out(ctx, "schedule.json"), "w") as fh:
            fh.write(cal.schedule.to_json())
            fh.write("\n")
        write_json(out(ctx, "calibration.json"), {
            "target": list(cal.target),
            "drive_frequency_ghz": cal.drive_frequency,
            "drive_amplitude_ghz": cal.drive_amplitude,
            "conditional_phase_rad": cal.gate.conditional_phase,
            "fidelity": cal.gate.fidelity,
            "leakage": cal.gate.leakage,
            "phase_corrections_rad": cal.phase_corrections,
            "history": {k: (dict(v) if isinstance(v, dict) else v)
                        for k, v in cal.history.items()},
        })
        click.echo(f"CZ {cal.target[0]}->{cal.target[1]}: fidelity {cal.gate.fidelity:.5f}, "
                   f"leakage {cal.gate.leakage:.2e}, "
                   f"|phase|-pi = {abs(abs(cal.gate.conditional_phase) - np.pi):.2e} rad")

    run_command(ctx, "calibrate-cz", params, body)


@main.command(name="spectator-report")
@click.option("--pair", required=True)
@click.option("--spectator", required=True)
@click.option("--drive-states", default="auto")
@click.option("--active-flux", type=float, default=0.5)
@click.option("--spectator-flux", type=float, default=0.0)
@click.option("--gate-duration", type=float, default=120.0)
@click.option("--levels", multiple=True)
@click.pass_obj
def spectator_report_cmd(ctx: RunContext, pair, spectator, drive_states, active_flux,
                         spectator_flux, gate_duration, levels):
    """Spectator-state frequency shifts and equivalent phase errors."""
    params = {"pair": pair, "spectator": spectator, "drive_states": drive_states,
              "active_flux": active_flux, "spectator_flux": spectator_flux,
              "gate_duration": gate_duration, "levels": list(levels)}

    def body():
        qpair = _parse_pair(pair, "--pair")
        sub = ctx.config.chain_between(*qpair)
        active_coupler = next(nm for nm in sub
                              if ctx.config.node(nm).kind == "coupler")
        spect_span = ctx.config.chain_between(
            min(qpair, key=lambda q: abs(ctx.config.index(q) - ctx.config.index(spectator))),
            spectator)
        spect_coupler = next(nm for nm in spect_span
                             if ctx.config.node(nm).kind == "coupler")
        rows = spectator_phase_report(
            ctx.config, qpair, spectator,
            coupler_fluxes={active_coupler: active_flux, spect_coupler: spectator_flux},
            drive_states=_parse_target(drive_states),
            gate_duration=gate_duration,
            levels=_parse_assignments(levels, int) or None)
        for r in rows:
            r["shift_khz"] = r["shift"] * 1e6
        write_csv(out(ctx, "spectator_report.csv"), rows)
        write_json(out(ctx, "spectator_report.json"), {"rows": rows})
        worst = max(r["phase_error"] for r in rows)
        click.echo(f"worst spectator phase error: {worst:.5f} rad")

    run_command(ctx, "spectator-report", params, body)


@main.command(name="cond-t1")
@click.option("--g", "g_value", type=float, required=True,
              help="Injected transverse coupling (rad/us).")
@click.option("--kappa-c", type=float, default=0.032)
@click.option("--kappa-t", type=float, default=0.008)
@click.option("--samples", type=int, default=200)
@click.pass_obj
def cond_t1(ctx: RunContext, g_value, kappa_c, kappa_t, samples):
    """Conditional-T1 transverse-coupling extraction on a synthetic pair."""
    params = {"g": g_value, "kappa_c": kappa_c, "kappa_t": kappa_t, "samples": samples}

    def body():
        res = conditional_t1_experiment(g_value, kappa_c, kappa_t, n_samples=samples)
        est = res["estimate"]
        rows = []
        for key in ("g", "e"):
            times, pop = res["traces"][key]
            rows.extend({"control_state": key, "time_us": float(t),
                         "target_population": float(p)}
                        for t, p in zip(times, pop))
        write_csv(out(ctx, "cond_t1_traces.csv"), rows)
        write_json(out(ctx, "cond_t1.json"), {
            "injected_g_rad_per_us": g_value,
            "recovered_g_rad_per_us": est.g_xx,
            "recovered_g_hz": est.g_xx_hz,
            "gamma_t_given_g": res["gamma_t_given_g"].rate,
            "gamma_t_given_e": res["gamma_t_given_e"].rate,
            "formula_rate": res["formula_rate"],
            "consistent": est.consistent,
            "message": est.message,
        })
        if ctx.plot:
            from .plotting import plot_decays, save_figure
            tg, pg = res["traces"]["g"]
            te, pe = res["traces"]["e"]
            fig = plot_decays(tg, {"control in g": pg},
                              xlabel="time (us)", ylabel="target population",
                              title="conditional T1")
            save_figure(fig, out(ctx, "cond_t1.png"))
        if est.g_xx is None:
            click.echo(f"inconsistent: {est.message}")
        else:
            click.echo(f"recovered g = {est.g_xx:.5f} rad/us "
                       f"({abs(est.g_xx - g_value) / g_value * 100:.1f}% off injected)")

    run_command(ctx, "cond-t1", params, body)


def _noise_from_options(f1, f2, eps) -> NoiseModel:
    return NoiseModel.from_fidelities(f1, f2, init_excited=eps)


@main.command()
@click.option("--n", "n_qubits", type=int, required=True)
@click.option("--shots", type=int, default=100000)
@click.option("--f1", type=float, default=0.9999, help="Single-qubit gate fidelity.")
@click.option("--f2", type=float, default=0.99, help="CZ gate fidelity.")
@click.option("--eps", type=float, default=0.0, help="Initialization excited probability.")
@click.option("--readout-error", type=float, default=0.0)
@click.pass_obj
def ghz(ctx: RunContext, n_qubits, shots, f1, f2, eps, readout_error):
    """Generate a GHZ state and write the Z-basis measurement record."""
    params = {"n": n_qubits, "shots": shots, "f1": f1, "f2": f2, "eps": eps,
              "readout_error": readout_error}

    def body():
        noise = _noise_from_options(f1, f2, eps)
        confusion = (ConfusionModel.uniform(n_qubits, readout_error)
                     if readout_error > 0 else None)
        record = ghz_record(n_qubits, noise, shots, seed=ctx.seed, confusion=confusion)
        record.save(out(ctx, "ghz.rec"))
        counts = record.counts()
        write_csv(out(ctx, "ghz_counts.csv"),
                  [{"bitstring": k, "count": v} for k, v in sorted(counts.items())])
        probs = record.probabilities()
        write_json(out(ctx, "ghz_summary.json"), {
            "n": n_qubits, "shots": shots,
            "p_ground": float(probs[0]), "p_excited": float(probs[-1]),
        })
        click.echo(f"GHZ({n_qubits}): P_g={probs[0]:.4f} P_e={probs[-1]:.4f}")

    run_command(ctx, "ghz", params, body)


@main.command()
@click.option("--n", "n_qubits", type=int, required=True)
@click.option("--points", type=int, default=None, help="Phase points (default 4n+8).")
@click.option("--shots-per-point", type=int, default=None)
@click.option("--f1", type=float, default=0.9999)
@click.option("--f2", type=float, default=0.99)
@click.option("--eps", type=float, default=0.0)
@click.option("--preselect/--no-preselect", default=False)
@click.option("--readout-error", type=float, default=0.0)
@click.option("--unfold-readout/--no-unfold-readout", default=True)
@click.pass_obj
def parity(ctx: RunContext, n_qubits, points, shots_per_point, f1, f2, eps,
           preselect, readout_error, unfold_readout):
    """GHZ parity oscillation, harmonic fit and fidelity estimate."""
    params = {"n": n_qubits, "points": points, "shots_per_point": shots_per_point,
              "f1": f1, "f2": f2, "eps": eps, "preselect": preselect,
              "readout_error": readout_error, "unfold_readout": unfold_readout}

    def body():
        pts = points or 4 * n_qubits + 8
        phases = np.linspace(0.0, 2.0 * np.pi, pts, endpoint=False)
        noise = _noise_from_options(f1, f2, eps)
        confusion = (ConfusionModel.uniform(n_qubits, readout_error)
                     if readout_error > 0 else None)
        res = ghz_experiment(n_qubits, phases, noise=noise,
                             shots_per_point=shots_per_point, seed=ctx.seed,
                             preselect=preselect, confusion=confusion,
                             unfold_readout=unfold_readout)
        write_csv(out(ctx, "parity.csv"),
                  [{"phase_rad": float(p), "parity": float(v)}
                   for p, v in zip(res.parity.phases, res.parity.parity)])
        write_json(out(ctx, "parity_fit.json"), {
            "n": n_qubits,
            "amplitudes": {str(m): a for m, a in res.parity.amplitudes.items()},
            "dominant_order": res.parity.dominant_order,
            "a_n": res.parity.a_n,
            "p_ground": res.p_ground,
            "p_excited": res.p_excited,
            "fidelity": res.fidelity,
            "retention": res.retention,
        })
        if ctx.plot:
            from .plotting import plot_parity, save_figure
            fig = plot_parity(res.parity.phases, res.parity.parity,
                              res.parity.amplitudes,
                              title=f"GHZ({n_qubits}) parity, F={res.fidelity:.3f}")
            save_figure(fig, out(ctx, "parity.png"))
        click.echo(f"dominant order {res.parity.dominant_order}, "
                   f"A_N={res.parity.a_n:.4f}, F={res.fidelity:.4f}")

    run_command(ctx, "parity", params, body)


@main.command()
@click.option("--qubits", "n_qubits", type=click.Choice(["1", "2"]), default="1")
@click.option("--lengths", default="1,3,7,15,31,63")
@click.option("--sequences", type=int, default=12)
@click.option("--p-clifford", type=float, default=0.0,
              help="Depolarizing probability applied once per Clifford.")
@click.option("--shots", type=int, default=None, help="Binomial shot noise per point.")
@click.option("--interleaved", default=None, type=click.Choice(["cz"]))
@click.pass_obj
def rb(ctx: RunContext, n_qubits, lengths, sequences, p_clifford, shots, interleaved):
    """Randomized benchmarking: sequence generation, simulation and fit."""
    params = {"qubits": n_qubits, "lengths": lengths, "sequences": sequences,
              "p_clifford": p_clifford, "shots": shots, "interleaved": interleaved}

    def body():
        nq = int(n_qubits)
        lens = [int(x) for x in lengths.split(",")]
        if p_clifford > 0:
            data = simulate_rb_depolarized(nq, lens, p_clifford,
                                           n_sequences=sequences, seed=ctx.seed,
                                           shots=shots)
        else:
            seqs = generate_rb(nq, lens, n_sequences=sequences,
                               interleaved=interleaved, seed=ctx.seed)
            data = {}
            for s in seqs:
                data.setdefault(s.length, []).append(rb_survival(s))
        rows = [{"length": l, "survival_mean": float(np.mean(v)),
                 "survival_std": float(np.std(v)), "n_sequences": len(v)}
                for l, v in sorted(data.items())]
        write_csv(out(ctx, "rb.csv"), rows)
        report = fit_rb(lens, data, d=2 ** nq)
        write_json(out(ctx, "rb_fit.json"), {
            "params": report.params, "stderr": report.stderr,
            "average_gate_fidelity": report.fidelity,
        })
        if ctx.plot:
            from .plotting import plot_decays, save_figure
            xs = np.array([r["length"] for r in rows], dtype=float)
            ys = np.array([r["survival_mean"] for r in rows])
            a, p, b = (report.params[k] for k in ("A", "p", "B"))
            fig = plot_decays(xs, {"survival": ys},
                              {"RB": lambda L: a * p ** L + b},
                              title=f"{nq}Q RB, F={report.fidelity:.5f}")
            save_figure(fig, out(ctx, "rb.png"))
        click.echo(f"p = {report.params['p']:.5f} +- {report.stderr['p']:.1e}, "
                   f"F = {report.fidelity:.5f}")

    run_command(ctx, "rb", params, body)


def _parse_pairs(spec: str) -> list[tuple[int, int]]:
    pairs = []
    for part in spec.split(","):
        a, _, b = part.partition("-")
        try:
            pairs.append((int(a), int(b)))
        except ValueError:
            raise click.UsageError(f"pairs must look like 0-1,2-3; got {spec!r}") from None
    return pairs


@main.command()
@click.option("--pairs", required=True, help="CZ pairs, e.g. 0-1,2-3.")
@click.option("--cycles", type=int, default=5)
@click.option("--shots", type=int, default=100000)
@click.pass_obj
def rcs(ctx: RunContext, pairs, cycles, shots):
    """One random circuit sampling instance: record plus ideal distribution."""
    params = {"pairs": pairs, "cycles": cycles, "shots": shots}

    def body():
        pair_list = _parse_pairs(pairs)
        circ = generate_rcs(pair_list, cycles, seed=ctx.seed)
        state = simulate_statevector(circ)
        p_th = np.abs(state) ** 2
        record = sample_record(p_th, shots, ctx.seed, circ.n_qubits)
        record.save(out(ctx, "rcs.rec"))
        write_json(out(ctx, "rcs_circuit.json"), circ.to_dict())
        write_csv(out(ctx, "rcs_ideal.csv"),
                  [{"bitstring": format(i, f"0{circ.n_qubits}b"), "p_ideal": float(p)}
                   for i, p in enumerate(p_th)])
        f = xeb_fidelity(record.probabilities(), p_th)
        write_json(out(ctx, "rcs_xeb.json"), {"f_seq": float(f), "cycles": cycles,
                                              "shots": shots})
        click.echo(f"RCS {cycles} cycles, XEB F_seq = {f:.4f}")

    run_command(ctx, "rcs", params, body)


@main.command()
@click.option("--pairs", required=True)
@click.option("--depths", default="1,2,4,8,16")
@click.option("--circuits", type=int, default=5)
@click.option("--shots", type=int, default=20000)
@click.option("--p1", type=float, default=0.0, help="Depolarizing per 1q gate.")
@click.option("--p2", type=float, default=0.0, help="Depolarizing per CZ.")
@click.pass_obj
def xeb(ctx: RunContext, pairs, depths, circuits, shots, p1, p2):
    """Cross-entropy benchmarking of random circuit sampling."""
    params = {"pairs": pairs, "depths": depths, "circuits": circuits,
              "shots": shots, "p1": p1, "p2": p2}

    def body():
        from .circuits import probabilities as circuit_probs
        pair_list = _parse_pairs(pairs)
        depth_list = [int(x) for x in depths.split(",")]
        rng = np.random.default_rng(ctx.seed)
        noise = NoiseModel(p1=p1, p2=p2)
        rows = []
        per_depth: dict[int, list[float]] = {d: [] for d in depth_list}
        for depth in depth_list:
            for k in range(circuits):
                circ_seed = rng.integers(2 ** 63)
                circ = generate_rcs(pair_list, depth, seed=circ_seed)
                p_ideal = np.abs(simulate_statevector(circ)) ** 2
                p_actual = (p_ideal if noise.is_trivial()
                            else circuit_probs(circ, noise))
                rec = sample_record(p_actual, shots, rng.integers(2 ** 63),
                                    circ.n_qubits)
                f = xeb_fidelity(rec.probabilities(), p_ideal)
                per_depth[depth].append(f)
                rows.append({"depth": depth, "circuit": k, "f_seq": float(f)})
        write_csv(out(ctx, "xeb.csv"), rows)
        n = 2 * len(pair_list)
        report = fit_rb(depth_list,
                        {d: per_depth[d] for d in depth_list}, d=2 ** n)
        p = report.params["p"]
        write_json(out(ctx, "xeb_fit.json"), {
            "params": report.params, "stderr": report.stderr,
            "error_per_cycle": error_per_cycle(n, p),
        })
        if ctx.plot:
            from .plotting import plot_decays, save_figure
            xs = np.array(depth_list, dtype=float)
            ys = np.array([np.mean(per_depth[d]) for d in depth_list])
            a, pp, b = (report.params[k] for k in ("A", "p", "B"))
            fig = plot_decays(xs, {"F_seq": ys}, {"XEB": lambda L: a * pp ** L + b},
                              xlabel="cycles", ylabel="XEB fidelity",
                              title=f"EPC = {error_per_cycle(n, p):.4f}")
            save_figure(fig, out(ctx, "xeb.png"))
        click.echo(f"p = {p:.5f}, EPC = {error_per_cycle(n, p):.5f}")

    run_command(ctx, "xeb", params, body)


@main.command()
@click.option("--record", "record_path", type=click.Path(exists=True), default=None,
              help="Measurement record to correct.")
@click.option("--distribution", type=click.Path(exists=True), default=None,
              help="JSON list of probabilities to correct.")
@click.option("--readout-error", type=float, default=None,
              help="Symmetric per-qubit assignment error.")
@click.option("--qubits", default=None,
              help="Config qubit names supplying the confusion model.")
@click.pass_obj
def mitigate(ctx: RunContext, record_path, distribution, readout_error, qubits):
    """Constrained-ML readout unfolding of a record or distribution."""
    params = {"record": record_path, "distribution": distribution,
              "readout_error": readout_error, "qubits": qubits}

    def body():
        if (record_path is None) == (distribution is None):
            raise ValidationError("give exactly one of --record / --distribution")
        if record_path is not None:
            rec = MeasurementRecord.load(record_path)
            measured = rec.probabilities()
            n = rec.n_qubits
        else:
            with open(distribution) as fh:
                measured = np.asarray(json.load(fh), dtype=float)
            n = int(np.round(np.log2(measured.size)))
        if qubits is not None:
            model = ConfusionModel.from_config(ctx.config, qubits.split(","))
        elif readout_error is not None:
            model = ConfusionModel.uniform(n, readout_error)
        else:
            raise ValidationError("give --readout-error or --qubits for the model")
        corrected = unfold(measured, model)
        write_json(out(ctx, "mitigated.json"),
                   {"n": n, "corrected": [float(x) for x in corrected]})
        write_csv(out(ctx, "mitigated.csv"),
                  [{"bitstring": format(i, f"0{n}b"),
                    "measured": float(m), "corrected": float(c)}
                   for i, (m, c) in enumerate(zip(measured, corrected))])
        click.echo(f"corrected distribution written (sum {corrected.sum():.9f})")

    run_command(ctx, "mitigate", params, body)


if __name__ == "__main__":
    main()
