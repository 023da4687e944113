"""Command-line front end.

Subcommands: `run` (execute a netlist's analyses), `neuron` (canned
integrate-and-fire experiment), `sweep`, `calibrate`, `check` (parse and
validate only) and `rerun` (replay a manifest).  Every output set is written
next to a manifest that records the exact command line, resolved
configuration and model provenance; replaying a manifest reproduces the CSV
outputs byte for byte.

Exit codes: 0 success, 1 input/flag errors, 2 solver failure, 3 calibration
budget exhausted.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .engine import (
    NoConvergence,
    SingularMatrix,
    SolverOptions,
    StepUnderflow,
    Waveform,
    dc_operating_point,
    transient,
)
from .model import DEFAULT_PARAMS, DeviceTemperature, SFedParams, load_params, save_params
from .netlist import NetlistError, OperatingPoint, Transient, parse_netlist, validate
from .neuron import DEFAULT_OUTPUT_INTERVAL, ConfigError, NeuronConfig, run_neuron
from .sweeps import (
    METRICS_CSV_HEADER,
    BudgetExhausted,
    calibrate,
    metrics_csv_row,
    parse_sweep_file,
    parse_targets_file,
    residual_report,
    run_sweep,
    sweep_csv,
)
from .units import parse_value

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_SOLVER = 2
EXIT_BUDGET = 3


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("SFEDSIM_OUT") or "sfedsim-out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(
    out_dir: Path,
    argv: list[str],
    config: dict,
    provenance: str,
    outputs: list[str],
    started: float,
) -> Path:
    manifest = {
        "tool": "sfedsim",
        "version": __version__,
        "command": argv,
        "config": config,
        "model_provenance": provenance,
        "outputs": outputs,
        "duration_s": time.time() - started,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    return path


def _svg_panel(title: str, xs, ys, width=640, height=170, color="#1f77b4") -> str:
    x0, x1 = float(min(xs)), float(max(xs))
    y0, y1 = float(min(ys)), float(max(ys))
    if y1 - y0 < 1e-12:
        y1 = y0 + 1.0
    pad = 42
    w, h = width - pad - 10, height - 34
    pts = []
    step = max(1, len(xs) // 2000)
    for k in range(0, len(xs), step):
        px = pad + (xs[k] - x0) / (x1 - x0) * w
        py = height - 24 - (ys[k] - y0) / (y1 - y0) * h
        pts.append(f"{px:.1f},{py:.1f}")
    return (
        f'<text x="{pad}" y="13" font-size="11" font-family="sans-serif">{title}'
        f' [{y0:.3g} .. {y1:.3g}]</text>'
        f'<rect x="{pad}" y="20" width="{w}" height="{h}" fill="none" '
        f'stroke="#999" stroke-width="0.5"/>'
        f'<polyline fill="none" stroke="{color}" stroke-width="1" '
        f'points="{" ".join(pts)}"/>'
    )


def write_fig_panels(wave: Waveform, out_dir: Path) -> Path:
    """Three stacked panels: synaptic current, spike node, membrane + output."""
    t = wave.times * 1e9
    panels = [
        _svg_panel("I_synaptic (A) vs t (ns)", t, wave.current("Isyn"), color="#2ca02c"),
        _svg_panel("spike node (V) vs t (ns)", t, wave.voltage("spike"), color="#ff7f0e"),
        _svg_panel("membrane (V) vs t (ns)", t, wave.voltage("mem")),
        _svg_panel("output spike (V) vs t (ns)", t, wave.voltage("out"), color="#d62728"),
    ]
    height = 180
    body = "".join(
        f'<g transform="translate(0,{i*height})">{p}</g>' for i, p in enumerate(panels)
    )
    svg = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="660" '
        f'height="{len(panels)*height}">{body}</svg>\n'
    )
    path = out_dir / "neuron_panels.svg"
    path.write_text(svg)
    return path


_PLOT_SCRIPT = """\
#!/usr/bin/env python3
\"\"\"Render the neuron run panels from waveform.csv (requires matplotlib).\"\"\"
import csv, sys
import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "waveform.csv"
with open(path) as fh:
    reader = csv.reader(fh)
    header = next(reader)
    rows = [[float(c) for c in row] for row in reader]
cols = {name: [r[i] for r in rows] for i, name in enumerate(header)}
t = [x * 1e9 for x in cols["time_s"]]
fig, axes = plt.subplots(3, 1, sharex=True, figsize=(8, 7))
axes[0].plot(t, cols["i:Isyn"]); axes[0].set_ylabel("I_syn (A)")
axes[1].plot(t, cols["v:spike"]); axes[1].set_ylabel("spike (V)")
axes[2].plot(t, cols["v:mem"], label="membrane")
axes[2].plot(t, cols["v:out"], label="output")
axes[2].set_ylabel("V (V)"); axes[2].set_xlabel("t (ns)"); axes[2].legend()
fig.tight_layout()
fig.savefig("neuron_panels.png", dpi=150)
print("wrote neuron_panels.png")
"""


def _load_model(args) -> tuple[SFedParams, str]:
    if getattr(args, "model", None):
        return load_params(args.model), "file"
    return DEFAULT_PARAMS, "default"


def cmd_run(args, argv) -> int:
    started = time.time()
    try:
        text = Path(args.netlist).read_text()
    except OSError as exc:
        print(f"error: no such file: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        circuit = parse_netlist(text)
    except NetlistError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    diags = validate(circuit)
    if diags:
        for d in diags:
            print(f"error: {d}", file=sys.stderr)
        return EXIT_INPUT

    out_dir = _out_dir(args)
    outputs: list[str] = []
    opts = SolverOptions()
    try:
        for k, analysis in enumerate(circuit.analyses):
            if isinstance(analysis, OperatingPoint):
                dc = dc_operating_point(circuit, opts)
                path = out_dir / f"op{k}.csv"
                lines = ["kind,name,value"]
                lines += [f"v,{n},{v:.17g}" for n, v in dc.node_voltages.items()]
                lines += [f"i,{n},{v:.17g}" for n, v in dc.branch_currents.items()]
                path.write_text("\n".join(lines) + "\n")
                outputs.append(path.name)
            elif isinstance(analysis, Transient):
                wave = transient(circuit, opts, analysis.t_stop, analysis.output_interval)
                path = out_dir / f"waveform{k}.csv"
                path.write_text(wave.to_csv())
                outputs.append(path.name)
    except (NoConvergence, SingularMatrix, StepUnderflow) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    _write_manifest(out_dir, argv, {"netlist": str(args.netlist)}, "default",
                    outputs, started)
    print(f"wrote {', '.join(outputs) or 'no analyses'} in {out_dir}")
    return EXIT_OK


def _config_from_flags(args) -> NeuronConfig:
    kwargs = {}
    if args.pw is not None:
        kwargs["pulse_width"] = parse_value(args.pw)
    if args.period is not None:
        kwargs["pulse_period"] = parse_value(args.period)
    if args.vdd is not None:
        kwargs["v_dd"] = parse_value(args.vdd)
    if args.vref1 is not None:
        kwargs["v_ref1"] = parse_value(args.vref1)
    if args.vref2 is not None:
        kwargs["v_ref2"] = parse_value(args.vref2)
    if args.vref3 is not None:
        kwargs["v_ref3"] = parse_value(args.vref3)
    if args.cmem is not None:
        kwargs["c_mem"] = parse_value(args.cmem)
    if args.isyn is not None:
        kwargs["i_syn_amplitude"] = parse_value(args.isyn)
    if args.length is not None:
        length = parse_value(args.length)
        kwargs["channel_length"] = length * 1e9 if length < 1e-6 else length
    if args.temp is not None:
        kwargs["temperature"] = DeviceTemperature.from_celsius(parse_value(args.temp))
    if args.npulses is not None:
        kwargs["n_pulses"] = args.npulses
    return NeuronConfig(**kwargs)


def cmd_neuron(args, argv) -> int:
    started = time.time()
    try:
        config = _config_from_flags(args)
        params, provenance = _load_model(args)
    except (ValueError, ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    out_dir = _out_dir(args)
    try:
        run = run_neuron(config, params)
    except (NoConvergence, SingularMatrix, StepUnderflow) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    wave_path = out_dir / "waveform.csv"
    wave_path.write_text(run.waveform.to_csv())
    metrics_path = out_dir / "metrics.csv"
    metrics_path.write_text(
        METRICS_CSV_HEADER + "\n" + metrics_csv_row("neuron", config, run.metrics) + "\n"
    )
    svg_path = write_fig_panels(run.waveform, out_dir)
    plot_path = out_dir / "plot_waveform.py"
    plot_path.write_text(_PLOT_SCRIPT)

    m = run.metrics
    print(
        f"spikes={len(m.spike_times)} spikes_to_fire={m.spikes_to_fire} "
        f"threshold={m.firing_threshold_measured:.4g} V "
        f"energy={m.energy_per_spike:.4g} J/spike "
        f"power={m.static_power:.4g} W freq={m.spiking_frequency:.4g} Hz"
    )
    cfg_dict = {k: str(v) for k, v in asdict(config).items()}
    _write_manifest(
        out_dir, argv, cfg_dict, provenance,
        [wave_path.name, metrics_path.name, svg_path.name, plot_path.name], started,
    )
    return EXIT_OK


def cmd_sweep(args, argv) -> int:
    started = time.time()
    try:
        text = Path(args.spec).read_text()
        spec = parse_sweep_file(text)
        params, provenance = _load_model(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    out_dir = _out_dir(args)
    rows = run_sweep(spec, params, jobs=args.jobs)
    csv_path = out_dir / "sweep.csv"
    csv_path.write_text(sweep_csv(spec, rows))

    summary = [f"sweep over {spec.parameter.value}: {len(rows)} points"]
    for row in rows:
        vals = row.values(spec.tracked_metrics)
        stat = row.error or " ".join(
            f"{k}={vals[k]:.6g}" for k in spec.tracked_metrics
        )
        summary.append(f"  {row.point}: {stat}")
    summary_path = out_dir / "summary.txt"
    summary_path.write_text("\n".join(summary) + "\n")
    print("\n".join(summary))
    _write_manifest(out_dir, argv, {"spec": str(args.spec)}, provenance,
                    [csv_path.name, summary_path.name], started)
    return EXIT_OK


def cmd_calibrate(args, argv) -> int:
    started = time.time()
    try:
        text = Path(args.targets).read_text()
        targets = parse_targets_file(text)
        params, provenance = _load_model(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    out_dir = _out_dir(args)
    exhausted = False
    try:
        fitted, residual = calibrate(params, targets, budget=args.budget)
    except BudgetExhausted as exc:
        fitted, residual = params, exc.best_residual
        exhausted = True
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    params_path = out_dir / "calibrated_params.txt"
    save_params(str(params_path), fitted)
    _, detail = residual_report(fitted, targets)
    summary = [f"residual {residual:.6f} ({'budget exhausted' if exhausted else 'ok'})"]
    for tgt, value, err in detail:
        summary.append(
            f"  {tgt.metric}{tgt.qualifiers or ''}: value {value:.6g} "
            f"target {tgt.target:.6g} rel.err {err:.4f} tol {tgt.tolerance:.4f}"
        )
    summary_path = out_dir / "summary.txt"
    summary_path.write_text("\n".join(summary) + "\n")
    print("\n".join(summary))
    _write_manifest(out_dir, argv, {"targets": str(args.targets)}, "calibrated",
                    [params_path.name, summary_path.name], started)
    return EXIT_BUDGET if exhausted else EXIT_OK


def cmd_check(args, argv) -> int:
    try:
        text = Path(args.netlist).read_text()
    except OSError as exc:
        print(f"error: no such file: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        circuit = parse_netlist(text)
    except NetlistError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    diags = validate(circuit)
    for d in diags:
        print(str(d))
    if diags:
        return EXIT_INPUT
    print(
        f"ok: {len(circuit.devices)} devices, {len(circuit.node_names())} nodes, "
        f"{len(circuit.analyses)} analyses"
    )
    return EXIT_OK


def cmd_rerun(args, argv) -> int:
    try:
        manifest = json.loads(Path(args.manifest).read_text())
        command = manifest["command"]
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: bad manifest: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return main(command)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sfedsim",
        description="behavioral S-FED circuit simulator and neuron test bench",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="parse, validate and execute a netlist")
    p.add_argument("netlist")
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("neuron", help="run the integrate-and-fire neuron")
    p.add_argument("--pw", help="pulse width, e.g. 1n")
    p.add_argument("--period", help="pulse period, default 10n")
    p.add_argument("--vdd")
    p.add_argument("--vref1")
    p.add_argument("--vref2")
    p.add_argument("--vref3")
    p.add_argument("--cmem")
    p.add_argument("--isyn")
    p.add_argument("--length", help="channel length, e.g. 10n (metres) or 10 (nm)")
    p.add_argument("--temp", help="temperature in Celsius")
    p.add_argument("--npulses", type=int)
    p.add_argument("--model", help="model parameter file")
    p.add_argument("--out")
    p.set_defaults(func=cmd_neuron)

    p = sub.add_parser("sweep", help="run a sweep spec file")
    p.add_argument("spec")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--model")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate", help="fit model parameters to targets")
    p.add_argument("targets")
    p.add_argument("--budget", type=int, default=500)
    p.add_argument("--model")
    p.add_argument("--out")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("check", help="parse and validate a netlist")
    p.add_argument("netlist")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("rerun", help="replay a manifest's command")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_rerun)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else 0
    return args.func(args, argv)


if __name__ == "__main__":
    sys.exit(main())
