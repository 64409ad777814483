"""Command-line entry points.

Subcommands: analytic | mesh | modal | static | transient | synth |
identify | freq.  Every command is a pure function of the config file, the
input files and the seed; reruns produce byte-identical outputs.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .assembly import apply_constraints, assemble, nodal_von_mises
from .config import RunConfig, atomic_write_text
from .errors import ConfigError, MeshError, NumericalError
from .identify import (ForwardModel, identify_cmaes, identify_sequential,
                       objective)
from .materials import (bernoulli_first_frequency, cantilever_tip_deflection,
                        longitudinal_wave_speed, modulus_from_wave_speed)
from .measurements import MeasurementSet, add_measurement_noise
from .mesh import export_vtk, generate_assembly_mesh, save_mesh
from .signalproc import dominant_frequency
from .solvers import run_transient, solve_modal, solve_static


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pzbeam",
        description="Cantilever-with-piezo-disc simulator and "
                    "parameter-identification toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config with overrides")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--quiet", action="store_true")
        return p

    common(sub.add_parser("analytic", help="closed-form beam oracles"))
    common(sub.add_parser("mesh", help="generate and save the tagged mesh"))
    p = common(sub.add_parser("modal", help="natural frequencies and modes"))
    p.add_argument("--n-modes", type=int, help="override modal.n_modes")
    common(sub.add_parser("static", help="static preload solve"))
    p = common(sub.add_parser("transient", help="release transient"))
    p.add_argument("--snapshots", type=int, default=0,
                   help="write a VTK displacement snapshot every N steps")
    common(sub.add_parser("synth", help="synthesize a measurement CSV"))
    p = common(sub.add_parser("identify", help="parameter identification"))
    p.add_argument("--measurements", required=True,
                   help="measurement CSV (t,vz,V)")
    p = common(sub.add_parser("freq", help="dominant frequency of a series"))
    p.add_argument("--input", required=True, help="CSV with a time column")
    p.add_argument("--column", default="vz_L",
                   help="column to analyze (default vz_L)")
    return parser


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig.from_overrides()
    if args.seed is not None:
        cfg.doc["identification"]["seed"] = args.seed
        cfg.doc["synth"]["seed"] = args.seed
    return cfg


def _say(args, text):
    if not args.quiet:
        print(text)


def _build_system(cfg: RunConfig):
    mesh = generate_assembly_mesh(cfg.assembly_geometry(),
                                  cfg.mesh_resolution(), cfg.mesh_order())
    piezo = cfg.piezo_material() if cfg.assembly_geometry().has_disc else None
    system = assemble(mesh, cfg.beam_material(), piezo=piezo,
                      damping=cfg.damping(),
                      gamma_factor=cfg.doc["nitsche_gamma_factor"],
                      gravity=cfg.doc["load"]["gravity"],
                      tip_force=cfg.doc["load"]["tip_force"])
    return mesh, system, apply_constraints(system)


def _write_json(path, doc) -> None:
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def cmd_analytic(args) -> int:
    cfg = _load_config(args)
    geom = cfg.beam_geometry()
    mat = cfg.beam_material()
    c1 = longitudinal_wave_speed(mat)
    f1 = bernoulli_first_frequency(geom, mat)
    tip = cantilever_tip_deflection(geom, mat, cfg.doc["load"]["tip_force"])
    report = {
        "first_frequency_hz": f1,
        "longitudinal_wave_speed_m_per_s": c1,
        "young_modulus_from_wave_speed_pa": modulus_from_wave_speed(
            c1, mat.poisson_ratio, mat.density),
        "tip_deflection_m": tip,
        "tip_force_n": cfg.doc["load"]["tip_force"],
    }
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "analytic.json"), report)
    _say(args, f"f1 = {f1:.2f} Hz")
    _say(args, f"c1 = {c1:.1f} m/s")
    _say(args, f"tip deflection = {tip * 1e3:.4f} mm")
    return 0


def cmd_mesh(args) -> int:
    cfg = _load_config(args)
    mesh = generate_assembly_mesh(cfg.assembly_geometry(),
                                  cfg.mesh_resolution(), cfg.mesh_order())
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "assembly.pzmesh")
    save_mesh(mesh, path)
    export_vtk(mesh, {}, os.path.join(args.out, "assembly.vtk"))
    _say(args, f"{mesh.n_nodes} nodes, {mesh.n_cells} cells -> {path}")
    return 0


def cmd_modal(args) -> int:
    cfg = _load_config(args)
    n_modes = args.n_modes or cfg.doc["modal"]["n_modes"]
    mesh, system, sysc = _build_system(cfg)
    freqs, modes = solve_modal(sysc, n_modes=n_modes,
                               include_piezo=cfg.doc["modal"]["include_piezo"])
    os.makedirs(args.out, exist_ok=True)
    lines = ["mode,f_hz"]
    lines += [f"{i + 1},{f:.17g}" for i, f in enumerate(freqs)]
    atomic_write_text(os.path.join(args.out, "frequencies.csv"),
                      "\n".join(lines) + "\n")
    for i in range(modes.shape[1]):
        u_full = sysc.expand_u(modes[:, i])
        fields = {"u": u_full.reshape(-1, 3),
                  "von_mises": nodal_von_mises(system, u_full)}
        export_vtk(mesh, fields, os.path.join(args.out, f"mode_{i + 1}.vtk"))
    _say(args, "f1 = %.2f Hz (modes written to %s)" % (freqs[0], args.out))
    return 0


def cmd_static(args) -> int:
    cfg = _load_config(args)
    mesh, system, sysc = _build_system(cfg)
    state = solve_static(sysc)
    u_full = sysc.expand_u(state.u)
    os.makedirs(args.out, exist_ok=True)
    fields = {"u": u_full.reshape(-1, 3),
              "von_mises": nodal_von_mises(system, u_full)}
    if sysc.has_piezo:
        phi = np.zeros(mesh.n_nodes)
        phi[system.p_space.nodes] = sysc.expand_p(state.p)
        fields["phi"] = phi
    export_vtk(mesh, fields, os.path.join(args.out, "static.vtk"))
    w_dof = sysc.reduced_u_dof(mesh.point_tags["W"], 2)
    report = {"tip_deflection_m": float(state.u[w_dof]),
              "electrode_potential_v": state.p_bar}
    _write_json(os.path.join(args.out, "static.json"), report)
    _say(args, f"tip deflection = {state.u[w_dof] * 1e3:.4f} mm")
    return 0


def cmd_transient(args) -> int:
    cfg = _load_config(args)
    mesh, system, sysc = _build_system(cfg)
    grid = cfg.time_grid()
    initial = solve_static(sysc)
    rec = run_transient(sysc, grid, initial, circuit=cfg.circuit(),
                        damping=cfg.damping())
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "transient.csv")
    tmp = path + f".tmp.{os.getpid()}"
    rec.to_csv(tmp)
    os.replace(tmp, path)
    if args.snapshots:
        _say(args, "snapshot export rerun")
        state = initial.copy()
        from .solvers import TransientOperator
        op = TransientOperator(sysc, grid, cfg.circuit(), cfg.damping(),
                               load=sysc.body_load)
        state.u_ddot = op.initial_acceleration(state)
        for i in range(1, grid.n_steps + 1):
            state = op.step(state, i)
            if i % args.snapshots == 0:
                u_full = sysc.expand_u(state.u)
                export_vtk(mesh, {"u": u_full.reshape(-1, 3)},
                           os.path.join(args.out, f"snapshot_{i:06d}.vtk"))
    _say(args, f"{rec.n_samples} samples -> {path}")
    return 0


def cmd_synth(args) -> int:
    cfg = _load_config(args)
    mesh, system, sysc = _build_system(cfg)
    grid = cfg.time_grid()
    theta = cfg.scenario_parameters()
    model = ForwardModel(sysc, grid)
    t, vz, pbar = model.run(theta)
    stride = cfg.doc["identification"]["measurement_stride"]
    idx = np.arange(1, grid.n_steps + 1, stride)
    clean = MeasurementSet.with_auto_scaling(t[idx], vz[idx], pbar[idx])
    noisy = add_measurement_noise(clean, cfg.doc["synth"]["noise_level"],
                                  cfg.doc["synth"]["seed"])
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "measurements.csv")
    tmp = path + f".tmp.{os.getpid()}"
    noisy.save_csv(tmp)
    os.replace(tmp, path)
    _say(args, f"{noisy.n_samples} samples -> {path}")
    return 0


def cmd_identify(args) -> int:
    cfg = _load_config(args)
    measurements = MeasurementSet.load_csv(args.measurements)
    theta0 = cfg.initial_parameters()
    mesh, system, sysc = _build_system(cfg)
    grid = cfg.time_grid()
    if measurements.times[-1] > grid.t_end + 1e-12:
        raise ConfigError("simulation horizon shorter than the measurements")
    model = ForwardModel(sysc, grid)
    ident = cfg.doc["identification"]
    if ident["strategy"] == "sequential":
        result = identify_sequential(theta0, measurements, model,
                                     jacobian=ident["jacobian"],
                                     passes=ident["passes"])
    else:
        result = identify_cmaes(theta0, measurements, model,
                                population=ident["population"],
                                generations=ident["generations"],
                                seed=ident["seed"])
    os.makedirs(args.out, exist_ok=True)
    report = result.report(theta0=theta0, config_hash=cfg.config_hash())
    _write_json(os.path.join(args.out, "identification.json"), report)
    _say(args, f"strategy={result.strategy} F={result.f_total:.6g} "
               f"evaluations={result.n_evaluations}")
    for name, value in report["theta"].items():
        _say(args, f"  {name} = {value:.6g}")
    return 0


def cmd_freq(args) -> int:
    cfg = _load_config(args)
    del cfg
    with open(args.input) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if "t" not in header or args.column not in header:
        raise ConfigError(f"input must have 't' and {args.column!r} columns")
    t = data[:, header.index("t")]
    series = data[:, header.index(args.column)]
    dts = np.diff(t)
    if not np.allclose(dts, dts[0], rtol=1e-6):
        raise ConfigError("freq requires uniformly sampled input")
    f = dominant_frequency(series, float(dts[0]))
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "frequency.json"),
                {"column": args.column, "dominant_frequency_hz": f})
    _say(args, f"dominant frequency = {f:.2f} Hz")
    return 0


COMMANDS = {
    "analytic": cmd_analytic,
    "mesh": cmd_mesh,
    "modal": cmd_modal,
    "static": cmd_static,
    "transient": cmd_transient,
    "synth": cmd_synth,
    "identify": cmd_identify,
    "freq": cmd_freq,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, MeshError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
