"""Command-line entry point.

Every subcommand reads one config file (TOML or JSON), applies ``--set``
overrides and writes ``summary.json`` plus CSV series into ``--out``.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import measure_circumvention, pursuit_asymptotics
from .config import (ConfigError, RunConfig, apply_overrides, kappa0_or_none, load_mapping,
                     validate_mapping)
from .errors import GuidanceError
from .feedback import run_feedback, run_path
from .integrator import Schedule, simulate
from .openloop import (StepControl, cost_curve, deviation_angle, shoot_step_control,
                       shoot_window_off, optimize_window)

COMMANDS = ("simulate", "asymptotics", "shoot0", "shoot1", "feedback", "path", "cost-curve")


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, (str, bool, int, np.integer)) else _fmt(v)
                        for v in row])


def _clean(obj):
    """JSON-safe copy: non-finite floats become null, tuples become lists."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _speed_series(traj, out: Path) -> str:
    path = out / "speed.csv"
    _write_rows(path, ("t", "speed_d", "speed_e", "r"),
                zip(traj.times, traj.speed("d"), traj.speed("e"), traj.separation()))
    return path.name


# commands -------------------------------------------------------------------

def cmd_simulate(cfg: RunConfig, out: Path) -> dict:
    sc = cfg.scenario_obj()
    sim = cfg.simulate
    control = Schedule(sim.schedule) if sim.schedule else sim.kappa
    traj = simulate(sc, control, cfg.stepper_obj())
    traj.write_csv(out / "trajectory.csv")
    files = ["trajectory.csv", _speed_series(traj, out)]
    return {"events": traj.events.to_dict(), "final_separation": float(traj.separation()[-1]),
            "final_speed_e": float(traj.speed("e")[-1]), "files": files}


def cmd_asymptotics(cfg: RunConfig, out: Path) -> dict:
    sc = cfg.scenario_obj()
    st = cfg.stepper_obj()
    eq = pursuit_asymptotics(sc.params)
    pursuit = simulate(sc, 0, st)
    speed = pursuit.speed("e")
    above = np.nonzero(speed >= cfg.asymptotics.speed_threshold)[0]
    circ = simulate(sc, 1, st)
    try:
        meas = measure_circumvention(circ, cfg.asymptotics.window_start).to_dict()
    except GuidanceError as exc:
        meas = {"error": str(exc)}
    pursuit.write_csv(out / "trajectory.csv")
    _speed_series(pursuit, out)
    circ.write_csv(out / "circumvention.csv")
    return {
        "delta_as": eq.delta_as, "v_as": eq.v_as,
        "measured": {"separation": float(pursuit.separation()[-1]),
                     "speed_e": float(speed[-1]),
                     "speed_threshold_time": float(pursuit.times[above[0]]) if len(above) else None},
        "circumvention": meas,
        "files": ["trajectory.csv", "speed.csv", "circumvention.csv"],
    }


def cmd_shoot0(cfg: RunConfig, out: Path) -> dict:
    sc = cfg.scenario_obj()
    sec = cfg.shoot0
    res = shoot_step_control(sc, kappa0_or_none(sec.kappa0), cfg.shoot_config(sec))
    res.trajectory.write_csv(out / "trajectory.csv")
    files = ["trajectory.csv"]
    summary = {"tau_star": res.switch_time, "cost": res.cost.c_active, "n_ig": res.cost.n_ig,
               "iterations": res.iterations, "detail": res.to_dict()}
    if sec.deviation_taus:
        k0 = res.control.kappa0
        rows, angles = [], {}
        for tau in sec.deviation_taus:
            traj = simulate(sc, StepControl(k0, tau).schedule(sc.t0), cfg.stepper_obj())
            rows += [(tau, t, y[2], y[3]) for t, y in zip(traj.times, traj.states)]
            angles[_fmt(tau)] = deviation_angle(sc, tau, k0, cfg.stepper_obj())
        _write_rows(out / "evader_by_tau.csv", ("tau", "t", "uex", "uey"), rows)
        files.append("evader_by_tau.csv")
        summary["deviation_angles"] = angles
    summary["files"] = files
    return summary


def cmd_shoot1(cfg: RunConfig, out: Path) -> dict:
    sc = cfg.scenario_obj()
    sec = cfg.shoot1
    k0 = kappa0_or_none(sec.kappa0)
    scfg = cfg.shoot_config(sec)
    if sec.t_on is not None:
        res = shoot_window_off(sc, sec.t_on, k0, scfg)
        t_on, t_off, cost = sec.t_on, res.switch_time, res.cost
        traj, extra = res.trajectory, {"complete": res.complete, "reached": res.reached,
                                       "iterations": res.iterations}
    else:
        cc = cfg.cost_curve
        opt = optimize_window(sc, scfg, k0, grid_step=cc.step,
                              t_on_range=(cc.start, min(cc.stop, sc.tf - cc.step)),
                              workers=cc.workers or 1)
        t_on, t_off, cost = opt.control.t_on, opt.control.t_off, opt.cost
        traj = simulate(sc, opt.control.schedule(sc.t0), cfg.stepper_obj())
        extra = {"plateau": dict(zip(("start", "value"), opt.curve.plateau()))}
    traj.write_csv(out / "trajectory.csv")
    return {"t_on_star": t_on, "t_off_star": t_off, "cost": cost.c_active, "n_ig": cost.n_ig,
            **extra, "files": ["trajectory.csv"]}


def cmd_cost_curve(cfg: RunConfig, out: Path) -> dict:
    sc = cfg.scenario_obj()
    cc = cfg.cost_curve
    grid = np.arange(cc.start, cc.stop + 1e-9, cc.step)
    curve = cost_curve(sc, grid, cfg.shoot_config(cc), kappa0_or_none(cc.kappa0),
                       workers=cc.workers or min(8, os.cpu_count() or 1))
    _write_rows(out / "cost_curve.csv", ("t_on", "cost", "complete"),
                [(p.t_on, p.cost, int(p.complete)) for p in curve.points])
    try:
        start, value = curve.plateau()
        plateau = {"start": start, "value": value}
    except GuidanceError as exc:
        plateau = {"error": str(exc)}
    return {"points": [p.__dict__ for p in curve.points], "plateau": plateau,
            "files": ["cost_curve.csv"]}


def _feedback_summary(res) -> dict:
    d = res.to_dict()
    d["n_ig"] = res.cost.n_ig
    d["cost_active"] = res.cost.c_active
    return d


def cmd_feedback(cfg: RunConfig, out: Path) -> dict:
    res = run_feedback(cfg.scenario_obj(), cfg.feedback_config(), cfg.stepper_obj())
    res.trajectory.write_csv(out / "trajectory.csv")
    return {**_feedback_summary(res), "files": ["trajectory.csv"]}


def cmd_path(cfg: RunConfig, out: Path) -> dict:
    targets = cfg.path_targets()
    res = run_path(cfg.scenario_obj(), targets, cfg.feedback_config(), cfg.stepper_obj())
    res.trajectory.write_csv(out / "trajectory.csv")
    _write_rows(out / "targets.csv", ("index", "x", "y"),
                [(i, t.x, t.y) for i, t in enumerate(targets)])
    summary = {**_feedback_summary(res), "targets": [list(t) for t in targets],
               "files": ["trajectory.csv", "targets.csv"]}
    if cfg.path.kind == "sine":
        dev = cfg.sine_path().distance(res.trajectory.states[:, 2:4])
        summary["max_path_deviation"] = float(dev.max())
    return summary


HANDLERS = {"simulate": cmd_simulate, "asymptotics": cmd_asymptotics, "shoot0": cmd_shoot0,
            "shoot1": cmd_shoot1, "feedback": cmd_feedback, "path": cmd_path,
            "cost-curve": cmd_cost_curve}


def run_command(cfg: RunConfig, command: str, out: Path, provenance=None) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    result = HANDLERS[command](cfg, out)
    summary = _clean({"command": command, "version": __version__,
                      "config": cfg.model_dump(mode="json"),
                      "overrides": provenance or [], "result": result})
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="repulsion-guidance",
                                 description="Simulate and control the driver-evader system.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="TOML or JSON config file ('-' for stdin)")
        p.add_argument("-o", "--out", default="out", help="output directory (default: out)")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config key, e.g. scenario.tf=60")
        p.add_argument("--format", choices=("auto", "toml", "json"), default="auto")
    return ap


def _error_payload(exc: BaseException, code: int) -> dict:
    return {"error": type(exc).__name__, "message": str(exc), "exit_code": code}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        text = sys.stdin.read() if args.config == "-" else Path(args.config).read_text("utf-8")
        data = load_mapping(text, args.format)
        data, provenance = apply_overrides(data, args.overrides)
        cfg = validate_mapping(data)
        summary = run_command(cfg, args.command, out, provenance)
    except OSError as exc:
        err = ConfigError(str(exc))
        print(json.dumps(_error_payload(err, err.exit_code)), file=sys.stderr)
        return err.exit_code
    except GuidanceError as exc:
        payload = _error_payload(exc, exc.exit_code)
        print(json.dumps(payload), file=sys.stderr)
        if out.is_dir():
            (out / "error.json").write_text(json.dumps(payload, indent=2) + "\n")
        return exc.exit_code
    print(json.dumps(summary["result"], indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
