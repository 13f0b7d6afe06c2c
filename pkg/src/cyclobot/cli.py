"""The `cyclobot` command line tool.

Subcommands: dyno (bench procedures), bench (robot comparison), bus
(feasibility analysis), ctrl (control loop runs), teleop (pose stream
replay), validate (config checking).  Every run writes its outputs plus
a manifest.json with content hashes into the output directory; rerunning
with the same arguments and seed reproduces every file byte for byte.

Exit codes: 0 success, 1 configuration/validation error, 2 runtime
error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, benchmark, control, dyno, fieldbus, reports, teleop
from .actuator import actuator_from_dict, load_actuator
from .errors import ConfigError, SimulationError
from .kinematics import chain_from_dict, forward_kinematics, load_chain

DEFAULT_SEED = 20240422
_OUT_ENV = "CYCLOBOT_OUT_DIR"


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 (not 2) on bad usage, per the CLI contract."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _resource_text(rel: str, what: str, name: str) -> str:
    ref = resources.files("cyclobot").joinpath(rel)
    if not ref.is_file():
        raise ConfigError(f"unknown {what} preset {name!r}")
    return ref.read_text()


def _load_setup(source: str) -> control.RobotSetup:
    if Path(source).suffix:
        return control.load_setup(source)
    cfg = json.loads(_resource_text(
        f"configs/control/{source}.json", "robot setup", source))
    return control.setup_from_dict(cfg)


def _load_policy(source: str) -> control.MlpPolicy:
    if Path(source).suffix:
        return control.load_policy(source)
    cfg = json.loads(_resource_text(
        f"configs/control/{source}.json", "policy", source))
    return control.policy_from_dict(cfg)


def _load_stream(source: str) -> teleop.PoseStream:
    if Path(source).suffix:
        return teleop.load_pose_stream(source)
    return teleop.parse_pose_stream(
        _resource_text(f"configs/teleop/{source}.csv", "pose stream", source),
        name=source)


def _out_dir(args) -> Path:
    out = Path(args.out_dir or os.environ.get(_OUT_ENV, "cyclobot-out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finish(args, subcommand: str, config: dict, outputs: list[Path],
            seed: int | None = None) -> int:
    out = outputs[0].parent
    manifest = reports.write_manifest(
        out, __version__, subcommand, config,
        DEFAULT_SEED if seed is None else seed, outputs)
    for p in [*outputs, manifest]:
        print(p)
    return 0


# dyno ------------------------------------------------------------------

def _cmd_dyno_efficiency(args) -> int:
    spec = load_actuator(args.actuator)
    out = _out_dir(args)
    emap = dyno.run_efficiency_map(
        spec, settle=args.settle, window=args.window,
        noise_sigma=args.noise, seed=args.seed)
    rows = [(c.torque, c.speed, c.mech_power, c.mech_power_integrated,
             c.elec_power, c.mech_efficiency, c.total_efficiency,
             int(c.valid)) for c in emap.cells]
    f = reports.write_csv(
        out / "efficiency_map.csv",
        ["torque", "speed", "mech_power", "mech_power_integrated",
         "elec_power", "mech_efficiency", "total_efficiency", "valid"],
        rows)
    config = {"actuator": asdict(spec), "settle": emap.settle,
              "window": emap.window, "noise_sigma": args.noise,
              "torque_grid": list(emap.torque_grid),
              "speed_grid": list(emap.speed_grid)}
    return _finish(args, "dyno efficiency", config, [f], args.seed)


def _cmd_dyno_stiffness(args) -> int:
    spec = load_actuator(args.actuator)
    out = _out_dir(args)
    res = dyno.run_stiffness_test(
        spec, max_torque=args.max_torque, resolution=args.resolution,
        fit_range=(args.fit_lo, args.fit_hi))
    ramp = reports.write_csv(
        out / "stiffness_ramp.csv", ["torque", "deflection"],
        zip(res.torques.tolist(), res.deflections.tolist()))
    summary = reports.write_csv(
        out / "stiffness_summary.csv",
        ["stiffness", "slope_positive", "slope_negative",
         "fit_lo", "fit_hi", "max_residual"],
        [(res.stiffness, res.slope_positive, res.slope_negative,
          res.fit_range[0], res.fit_range[1], res.max_residual)])
    config = {"actuator": asdict(spec), "max_torque": args.max_torque,
              "resolution": args.resolution,
              "fit_range": [args.fit_lo, args.fit_hi]}
    return _finish(args, "dyno stiffness", config, [ramp, summary])


def _cmd_dyno_backlash(args) -> int:
    spec = load_actuator(args.actuator)
    out = _out_dir(args)
    m = dyno.measure_backlash(spec, probe_torque=args.probe_torque)
    f = reports.write_csv(
        out / "backlash.csv", ["backlash", "travel", "probe_torque"],
        [(m.backlash, m.travel, m.probe_torque)])
    config = {"actuator": asdict(spec), "probe_torque": args.probe_torque}
    return _finish(args, "dyno backlash", config, [f])


def _cmd_dyno_durability(args) -> int:
    spec = load_actuator(args.actuator)
    out = _out_dir(args)
    log = dyno.run_durability(spec, hours=args.hours, seed=args.seed)
    rows = [(r.hour, r.cycles, r.backlash_measured, r.backlash_model,
             r.mech_efficiency, r.total_efficiency) for r in log.rows]
    trace = reports.write_csv(
        out / "durability.csv",
        ["hour", "cycles", "backlash_measured", "backlash_model",
         "mech_efficiency", "total_efficiency"], rows)
    summary = reports.write_csv(
        out / "durability_summary.csv",
        ["peak_torque", "tracking_rms", "hours"],
        [(log.peak_torque, log.tracking_rms, args.hours)])
    config = {"actuator": asdict(spec), "hours": args.hours}
    return _finish(args, "dyno durability", config, [trace, summary],
                   args.seed)


def _cmd_dyno_consistency(args) -> int:
    spec = load_actuator(args.actuator)
    out = _out_dir(args)
    rep = dyno.run_consistency(
        spec, n_units=args.units, speed=args.speed, seed=args.seed)
    cells = []
    for u in range(args.units):
        for p, tau in enumerate(rep.torque_grid):
            cells.append((u, tau, rep.torque_errors[u, p],
                          rep.mech_efficiency[u, p]))
    cell_f = reports.write_csv(
        out / "consistency_cells.csv",
        ["unit", "torque_desired", "torque_error", "mech_efficiency"],
        cells)
    unit_f = reports.write_csv(
        out / "consistency_units.csv", ["unit", "backlash"],
        [(u, rep.backlash[u]) for u in range(args.units)])
    summary = reports.write_csv(
        out / "consistency_summary.csv",
        ["max_torque_error", "efficiency_spread", "backlash_sigma"],
        [(rep.max_torque_error, rep.efficiency_spread, rep.backlash_sigma)])
    config = {"actuator": asdict(spec), "n_units": args.units,
              "speed": args.speed}
    return _finish(args, "dyno consistency", config,
                   [cell_f, unit_f, summary], args.seed)


def _cmd_dyno_reach(args) -> int:
    spec = load_actuator(args.actuator)
    chain = load_chain(args.chain)
    out = _out_dir(args)
    rep = dyno.run_reach_repeatability(
        chain, spec, reps=args.reps, seed=args.seed, backlash=args.backlash)
    points = []
    for ti, name in enumerate(rep.target_names):
        for r in range(args.reps):
            points.append((name, r, *rep.positions[ti, r].tolist()))
    pts_f = reports.write_csv(
        out / "reach_points.csv", ["target", "rep", "x", "y", "z"], points)
    sig_rows = [(name, float(rep.sigmas[i]))
                for i, name in enumerate(rep.target_names)]
    sig_rows.append(("pooled", rep.pooled_sigma))
    sig_f = reports.write_csv(
        out / "reach_sigmas.csv", ["target", "sigma"], sig_rows)
    config = {"actuator": asdict(spec), "chain": chain.name,
              "reps": args.reps, "backlash": args.backlash}
    return _finish(args, "dyno reach", config, [pts_f, sig_f], args.seed)


# bench -----------------------------------------------------------------

def _packaged_robot_paths() -> list:
    root = resources.files("cyclobot").joinpath("configs/robots")
    return sorted((p for p in root.iterdir() if p.name.endswith(".json")),
                  key=lambda p: p.name)


def _cmd_bench_compare(args) -> int:
    if args.specs:
        specs = [benchmark.load_robot(p) for p in args.specs]
    else:
        specs = [benchmark.robot_from_dict(json.loads(p.read_text()))
                 for p in _packaged_robot_paths()]
    out = _out_dir(args)
    rep = benchmark.compare(specs, weight_mode=args.weight_mode)
    csv_f = reports.write_text(out / "comparison.csv", rep.to_csv())
    txt_f = reports.write_text(out / "comparison.txt", rep.to_text())
    config = {"specs": [s.name for s in specs],
              "weight_mode": args.weight_mode}
    return _finish(args, "bench compare", config, [csv_f, txt_f])


# bus -------------------------------------------------------------------

def _cmd_bus_analyze(args) -> int:
    out = _out_dir(args)
    bus = fieldbus.BusConfig(
        n_devices=args.devices, bitrate=args.bitrate,
        cycle_rate=args.rate, frames_per_device=args.frames_per_device,
        payload_dlc=args.dlc)
    rep = fieldbus.cycle_feasibility(bus)
    text = [
        "# per-cycle feasibility, worst-case stuffing; assumes "
        f"{bus.frames_per_device} frames per device per cycle "
        "(one command, one feedback)",
        rep.describe(),
    ]
    txt_f = reports.write_text(out / "bus_report.txt", "\n".join(text))
    rows = [(d, fieldbus.frame_bit_length(d, worst_case=False),
             fieldbus.frame_bit_length(d, worst_case=True))
            for d in range(9)]
    csv_f = reports.write_csv(
        out / "bus_frames.csv", ["dlc", "base_bits", "worst_case_bits"],
        rows)
    config = {"bus": asdict(bus)}
    return _finish(args, "bus analyze", config, [txt_f, csv_f])


# ctrl ------------------------------------------------------------------

def _cmd_ctrl_run(args) -> int:
    setup = _load_setup(args.setup)
    policy = _load_policy(args.policy)
    out = _out_dir(args)
    command = np.array(args.command, dtype=float)
    log = control.run_loop(setup, policy, args.duration, command=command)

    names = log.joint_names
    header = (["t", "policy_tick", "electrical_power"]
              + [f"bus{b}_utilization" for b in range(len(setup.buses))]
              + [f"set_{n}" for n in names] + [f"pos_{n}" for n in names]
              + [f"vel_{n}" for n in names] + [f"tau_{n}" for n in names])
    rows = []
    for k in range(log.n_low_ticks):
        rows.append([
            log.times[k], int(log.policy_tick[k]),
            float(log.electrical_power[k]),
            *[float(v) for v in log.bus_utilization[k]],
            *[float(v) for v in log.setpoints[k]],
            *[float(v) for v in log.positions[k]],
            *[float(v) for v in log.velocities[k]],
            *[float(v) for v in log.torques[k]],
        ])
    log_f = reports.write_csv(out / "loop_log.csv", header, rows)
    summary = reports.write_csv(
        out / "loop_summary.csv",
        ["n_low_ticks", "n_policy_ticks", "layout_checksum",
         "max_torque_headroom", "max_bus_utilization"],
        [(log.n_low_ticks, log.n_policy_ticks, log.layout_checksum,
          float(np.max(log.torque_headroom())),
          float(np.max(log.bus_utilization)))])
    config = {"setup": args.setup, "policy": args.policy,
              "duration": args.duration, "command": list(args.command),
              "n_joints": setup.n_joints}
    return _finish(args, "ctrl run", config, [log_f, summary], args.seed)


# teleop ----------------------------------------------------------------

def _cmd_teleop_replay(args) -> int:
    stream = _load_stream(args.stream)
    chain = load_chain(args.chain)
    out = _out_dir(args)
    if args.q0 is not None and len(args.q0) != chain.n_joints:
        raise ConfigError(
            f"--q0 needs {chain.n_joints} values for chain "
            f"{chain.name!r}")
    q0 = (np.asarray(args.q0, dtype=float) if args.q0 is not None
          else np.full(chain.n_joints, 0.2))
    log = teleop.replay(stream, chain, q0, mode=args.mode,
                        tick_rate=args.rate)

    header = (["t", "clutch", "gripper", "singular"]
              + [f"q_{j}" for j in chain.joint_names()]
              + ["target_px", "target_py", "target_pz",
                 "target_qw", "target_qx", "target_qy", "target_qz",
                 "achieved_px", "achieved_py", "achieved_pz"])
    rows = []
    for k in range(len(log.times)):
        tgt = log.targets[k]
        ach = log.achieved[k]
        rows.append([
            log.times[k], int(log.clutch[k]), float(log.gripper[k]),
            int(log.singular[k]),
            *[float(v) for v in log.joint_angles[k]],
            *[float(v) for v in tgt.position],
            *[float(v) for v in tgt.orientation],
            *[float(v) for v in ach.position],
        ])
    traj = reports.write_csv(out / "trajectory.csv", header, rows)
    summary = reports.write_csv(
        out / "replay_summary.csv",
        ["ticks", "engages", "max_engage_jump", "singular_ticks"],
        [(len(log.times), len(log.engage_jumps), log.max_engage_jump,
          int(np.sum(log.singular)))])
    config = {"stream": args.stream, "chain": chain.name,
              "mode": args.mode, "tick_rate": args.rate,
              "q0": [float(v) for v in q0]}
    return _finish(args, "teleop replay", config, [traj, summary])


# validate --------------------------------------------------------------

_VALIDATORS = {
    "actuator": actuator_from_dict,
    "robot": benchmark.robot_from_dict,
    "policy": control.policy_from_dict,
    "robot_setup": control.setup_from_dict,
    "chain": chain_from_dict,
}


def validate_file(path: str) -> str:
    """Parse one config file; returns its kind or raises ConfigError."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"no such file: {path}")
    if p.suffix == ".csv":
        teleop.load_pose_stream(p)
        return "pose_stream"
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON ({e})") from e
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    kind = cfg.get("kind")
    checker = _VALIDATORS.get(kind)
    if checker is None:
        raise ConfigError(
            f"{path}: unknown config kind {kind!r}; expected one of "
            f"{sorted(_VALIDATORS)}")
    checker(cfg)
    return kind


def _cmd_validate(args) -> int:
    failures = 0
    for path in args.files:
        try:
            kind = validate_file(path)
        except ConfigError as e:
            print(f"FAIL {path}: {e}")
            failures += 1
        else:
            print(f"ok   {path} ({kind})")
    return 1 if failures else 0


# parser ----------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser, seed: bool = True) -> None:
    p.add_argument("--out-dir", default=None,
                   help=f"output directory (default: ${_OUT_ENV} or "
                        "./cyclobot-out)")
    if seed:
        p.add_argument("--seed", type=int, default=DEFAULT_SEED,
                       help="master seed (fixed default, never wall clock)")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cyclobot",
                description="cycloidal-actuator robot evaluation tool")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    dyno_p = sub.add_parser("dyno", help="virtual dynamometer procedures")
    dsub = dyno_p.add_subparsers(dest="proc", required=True,
                                 parser_class=_Parser)

    d = dsub.add_parser("efficiency", help="torque/speed efficiency map")
    d.add_argument("--actuator", default="6512")
    d.add_argument("--settle", type=float, default=1.0)
    d.add_argument("--window", type=float, default=0.5)
    d.add_argument("--noise", type=float, default=0.01)
    _add_common(d)
    d.set_defaults(func=_cmd_dyno_efficiency)

    d = dsub.add_parser("stiffness", help="locked-output torque ramp")
    d.add_argument("--actuator", default="6512")
    d.add_argument("--max-torque", type=float, default=20.0)
    d.add_argument("--resolution", type=float, default=1.0)
    d.add_argument("--fit-lo", type=float, default=4.0)
    d.add_argument("--fit-hi", type=float, default=10.0)
    _add_common(d, seed=False)
    d.set_defaults(func=_cmd_dyno_stiffness, seed=None)

    d = dsub.add_parser("backlash", help="free-travel probe")
    d.add_argument("--actuator", default="6512")
    d.add_argument("--probe-torque", type=float, default=0.2)
    _add_common(d, seed=False)
    d.set_defaults(func=_cmd_dyno_backlash, seed=None)

    d = dsub.add_parser("durability", help="accelerated endurance campaign")
    d.add_argument("--actuator", default="6512")
    d.add_argument("--hours", type=float, default=60.0)
    _add_common(d)
    d.set_defaults(func=_cmd_dyno_durability)

    d = dsub.add_parser("consistency", help="multi-unit variation study")
    d.add_argument("--actuator", default="6512")
    d.add_argument("--units", type=int, default=6)
    d.add_argument("--speed", type=float, default=1.0)
    _add_common(d)
    d.set_defaults(func=_cmd_dyno_consistency)

    d = dsub.add_parser("reach", help="arm-level reach repeatability")
    d.add_argument("--actuator", default="6512")
    d.add_argument("--chain", default="arm5")
    d.add_argument("--reps", type=int, default=100)
    d.add_argument("--backlash", type=float, default=None,
                   help="override output backlash (rad)")
    _add_common(d)
    d.set_defaults(func=_cmd_dyno_reach)

    bench_p = sub.add_parser("bench", help="robot comparison metrics")
    bsub = bench_p.add_subparsers(dest="proc", required=True,
                                  parser_class=_Parser)
    b = bsub.add_parser("compare", help="rank robot specs by price-performance")
    b.add_argument("specs", nargs="*",
                   help="robot spec JSON files (default: packaged examples)")
    b.add_argument("--weight-mode", choices=("mg", "m"), default="mg")
    _add_common(b, seed=False)
    b.set_defaults(func=_cmd_bench_compare, seed=None)

    bus_p = sub.add_parser("bus", help="fieldbus analysis")
    usub = bus_p.add_subparsers(dest="proc", required=True,
                                parser_class=_Parser)
    u = usub.add_parser("analyze", help="cycle feasibility and frame sizes")
    u.add_argument("--devices", type=int, default=6)
    u.add_argument("--bitrate", type=float, default=1_000_000.0)
    u.add_argument("--rate", type=float, default=250.0)
    u.add_argument("--frames-per-device", type=int, default=2)
    u.add_argument("--dlc", type=int, default=8)
    _add_common(u, seed=False)
    u.set_defaults(func=_cmd_bus_analyze, seed=None)

    ctrl_p = sub.add_parser("ctrl", help="two-rate control loop")
    csub = ctrl_p.add_subparsers(dest="proc", required=True,
                                 parser_class=_Parser)
    c = csub.add_parser("run", help="run the loop with a policy")
    c.add_argument("--setup", default="biped22",
                   help="robot setup preset or JSON path")
    c.add_argument("--policy", default="hold_policy",
                   help="policy preset or JSON path")
    c.add_argument("--duration", type=float, default=2.0)
    c.add_argument("--command", type=float, nargs=3,
                   default=(0.0, 0.0, 0.0), metavar=("VX", "VY", "WZ"))
    _add_common(c)
    c.set_defaults(func=_cmd_ctrl_run)

    tele_p = sub.add_parser("teleop", help="pose stream replay")
    tsub = tele_p.add_subparsers(dest="proc", required=True,
                                 parser_class=_Parser)
    t = tsub.add_parser("replay", help="replay a pose stream through IK")
    t.add_argument("--stream", default="square_path",
                   help="pose stream preset or CSV path")
    t.add_argument("--chain", default="arm5")
    t.add_argument("--mode", choices=("headless", "vr"), default="headless")
    t.add_argument("--rate", type=float, default=250.0)
    t.add_argument("--q0", type=float, nargs="+", default=None)
    _add_common(t, seed=False)
    t.set_defaults(func=_cmd_teleop_replay, seed=None)

    v = sub.add_parser("validate", help="check config files against schemas")
    v.add_argument("files", nargs="+")
    v.set_defaults(func=_cmd_validate)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (SimulationError, OSError) as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
