"""Command-line entry point.

Every subcommand takes ``--config`` (one YAML document, see :mod:`tdmtrap.config`)
and ``--out`` (output directory). Reports are JSON with the SHA-256 of the
config file embedded; files are written atomically. Validation failures exit
with status 2 and a one-line JSON error on stderr. Log verbosity comes from
the ``TDMTRAP_LOG`` environment variable (``DEBUG``, ``INFO``, ``WARNING``...).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (AnalysisError, compare, first_order_sigma, fit_clipped_sine,
                       fit_exponential, measure_slew, nominal_output, propagate_tolerances,
                       rise_time_10_90)
from .chain import SimulationError, pick, simulate
from .compiler import CompileError, compile_groups, max_multiplexing_factor, select_line_count
from .config import ConfigError, RunConfig
from .io import file_hash, read_trace_csv, write_json, write_schedule_csv, write_trace_csv, atomic_write_text
from .trap.dynamics import integrate_motion, micromotion_split, secular_energy
from .trap.model import (SaddleError, SurfaceTrap, TrapError, find_minimum, grid_scan_minimum,
                         secular_frequencies)

log = logging.getLogger("tdmtrap")

EXIT_VALIDATION = 2


def format_uncertainty(value: float, sigma: float) -> str:
    """``-7.86, 0.33 -> '-7.9(3)'``: one significant digit of uncertainty."""
    if sigma <= 0 or not math.isfinite(sigma):
        return f"{value:g}"
    exp = math.floor(math.log10(sigma))
    digit = round(sigma / 10**exp)
    if digit == 10:
        digit, exp = 1, exp + 1
    decimals = max(0, -exp)
    v = round(value, -exp)
    unc = digit if exp <= 0 else digit * 10**exp
    return f"{v:.{decimals}f}({unc})"


def _provenance(args, cfg: RunConfig, command: str) -> dict:
    return {
        "command": command,
        "config_hash": file_hash(cfg.path) if cfg.path else None,
        "seed": args.seed,
        "version": __version__,
    }


def _frame_sim_dt(args, cfg: RunConfig, frame: float) -> float:
    if args.sim_dt is not None:
        return args.sim_dt
    return float(cfg.section("simulate").get("sim_dt", frame / 100))


def _compile(cfg: RunConfig):
    group_size, encoding = cfg.compile_options()
    waveforms = cfg.waveforms()
    return waveforms, compile_groups(waveforms, cfg.dac(), cfg.gain(), group_size, encoding), group_size


def cmd_compile(args, cfg: RunConfig) -> dict:
    _, groups, group_size = _compile(cfg)
    out = Path(args.out)
    reports = []
    for g, (schedule, report) in enumerate(groups):
        write_schedule_csv(out / f"schedule_dac{g}.csv", schedule)
        write_json(out / f"schedule_dac{g}.json", schedule.to_dict())
        reports.append({"dac": g, "first_channel": g * group_size, **report.to_dict()})
        if report.total_clamps:
            log.warning("DAC %d: %d samples clamped to the DAC range", g, report.total_clamps)
    result = {**_provenance(args, cfg, "compile"), "groups": reports,
              "total_clamps": sum(r["total_clamps"] for r in reports)}
    write_json(out / "compile_report.json", result)
    return result


def _simulate_groups(args, cfg: RunConfig, initial: str | None = None, duration: float | None = None,
                     sim_dt: float | None = None):
    waveforms, groups, group_size = _compile(cfg)
    params = cfg.chain()
    sec = cfg.section("simulate")
    initial = initial or str(sec.get("initial", "zero"))
    results = []
    for g, (schedule, report) in enumerate(groups):
        step = sim_dt or _frame_sim_dt(args, cfg, schedule.frame_period)
        dur = duration or float(sec.get("duration", waveforms[0].total_duration))
        traces = simulate(schedule, params, step, dur, initial)
        results.append((g, schedule, report, traces))
    return waveforms, params, group_size, results


def cmd_simulate(args, cfg: RunConfig) -> dict:
    _, params, group_size, results = _simulate_groups(args, cfg)
    out = Path(args.out)
    files = []
    channels = []
    for g, schedule, report, traces in results:
        for tr in traces:
            if tr.node == "dac_out":
                name = f"traces/dac{g}_dac_out.csv"
            else:
                name = f"traces/{tr.node}_ch{g * group_size + tr.channel}.csv"
            write_trace_csv(out / name, tr)
            files.append(name)
        for c in range(schedule.n_channels):
            amp = pick(traces, "amp_out", c).samples
            channels.append({"channel": g * group_size + c, "dac": g,
                             "amp_out_min": float(amp.min()), "amp_out_max": float(amp.max()),
                             "amp_out_final": float(amp[-1])})
    result = {**_provenance(args, cfg, "simulate"), "files": files, "channels": channels,
              "sim_dt": results[0][3][0].dt, "n_samples": len(results[0][3][0])}
    write_json(out / "simulate_report.json", result)
    return result


def _run_task(task: dict, cfg: RunConfig, out: Path) -> dict:
    kind = task.get("kind")
    if "trace" not in task:
        raise ConfigError(f"analysis task {kind!r} needs a trace file")
    trace = read_trace_csv(cfg.resolve(task["trace"], out))
    if kind == "exponential":
        window = tuple(task["window"]) if "window" in task else None
        tau, sigma = fit_exponential(trace, window)
        return {"tau": tau, "tau_sigma": sigma, "formatted_ms": format_uncertainty(tau * 1e3, sigma * 1e3)}
    if kind == "clipped_sine":
        fit = fit_clipped_sine(trace, float(task.get("clip_high", cfg.chain().clip_high)),
                               task.get("clip_low"), float(task.get("guard_fraction", 0.02)))
        return fit.to_dict()
    if kind == "slew":
        rise, swing = rise_time_10_90(trace)
        return {"slew_rate": measure_slew(trace), "rise_10_90": rise, "swing": swing}
    if kind == "compare":
        channel = int(task.get("channel", trace.channel))
        target = {w.channel_id: w for w in cfg.waveforms()}[channel]
        group_size, _ = cfg.compile_options()
        n = min(group_size, len(cfg.waveforms()) - (channel // group_size) * group_size)
        cycle = n / cfg.dac().update_rate
        params = cfg.chain()
        rep = compare(target, trace, params.gain, cycle_period=cycle,
                      settle_time=float(task.get("settle_time", 2 * cycle)),
                      rails=(params.clip_low, params.clip_high) if trace.node == "amp_out" else None)
        return rep.to_dict()
    raise ConfigError(f"unknown analysis task kind {kind!r}")


def cmd_analyze(args, cfg: RunConfig) -> dict:
    tasks = cfg.section("analyze", required=True).get("tasks") or []
    if not tasks:
        raise ConfigError("analyze section has no tasks")
    out = Path(args.out)
    results = []
    for task in tasks:
        results.append({"task": task, "result": _run_task(dict(task), cfg, out)})
    result = {**_provenance(args, cfg, "analyze"), "results": results}
    write_json(out / "analysis_report.json", result)
    return result


def cmd_tolerances(args, cfg: RunConfig) -> dict:
    sec = cfg.section("tolerances")
    g = cfg.gain()
    lo = float(sec.get("v_in_low", 0.26))
    hi = float(sec.get("v_in_high", 2.79))
    tol = float(sec.get("rel_tol", 0.05))
    res = propagate_tolerances(lo, hi, g, tol, int(sec.get("n_samples", 1_000_000)), args.seed)
    result = {
        **_provenance(args, cfg, "tolerances"),
        "inputs": {"v_in_low": lo, "v_in_high": hi, "rel_tol": tol},
        "monte_carlo": res.to_dict(),
        "nominal": {"v_low": nominal_output(lo, g), "v_high": nominal_output(hi, g)},
        "first_order_sigma": {"v_low": first_order_sigma(lo, g, tol), "v_high": first_order_sigma(hi, g, tol)},
        "summary": f"{format_uncertainty(res.v_low_mean, res.v_low_sigma)} V to "
                   f"{format_uncertainty(res.v_high_mean, res.v_high_sigma)} V",
    }
    write_json(Path(args.out) / "tolerance_report.json", result)
    return result


def cmd_feasibility(args, cfg: RunConfig) -> dict:
    sec = dict(cfg.section("feasibility"))
    rate = float(sec.pop("per_channel_rate", 0.5e6))
    budget = {k: float(v) for k, v in sec.items()}
    try:
        n_max = max_multiplexing_factor(rate, **budget)
    except TypeError as exc:
        raise ConfigError(f"feasibility section: {exc}") from None
    result = {**_provenance(args, cfg, "feasibility"), "per_channel_rate": rate, "budget": budget,
              "n_max": n_max,
              "select_lines": {"one-hot": select_line_count(max(n_max, 1), "one-hot"),
                               "binary": select_line_count(max(n_max, 1), "binary")}}
    write_json(Path(args.out) / "feasibility_report.json", result)
    return result


def _solve_trap(cfg: RunConfig, drive=None):
    trap = SurfaceTrap(cfg.geometry(), drive or cfg.drive())
    sec = cfg.section("trap")
    start = sec.get("initial")
    if start is None:
        start = [0.0, 0.0, trap.rf_null_height()]
    r = find_minimum(trap, start)
    return trap, r


def cmd_trap_solve(args, cfg: RunConfig) -> dict:
    trap, r = _solve_trap(cfg)
    hw = float(cfg.section("trap").get("scan_half_width", 20e-6))
    r_grid, cell = grid_scan_minimum(trap, r, hw)
    try:
        modes = secular_frequencies(trap, r)
        pd, freqs, axes = True, modes.frequencies, modes.axes
        axial = modes.along([1, 0, 0])
    except SaddleError:
        pd, freqs, axes, axial = False, None, None, None
    result = {
        **_provenance(args, cfg, "trap-solve"),
        "minimum": r, "height": float(r[2]),
        "rf_null_height": trap.rf_null_height(float(r[0]), float(r[1])),
        "grid_minimum": r_grid, "grid_cell": cell,
        "grid_agrees": bool(np.all(np.abs(r_grid - r) <= cell)),
        "positive_definite": pd,
        "secular_frequencies": freqs, "principal_axes": axes, "axial_frequency": axial,
    }
    write_json(Path(args.out) / "trap_report.json", result)
    return result


def cmd_field_map(args, cfg: RunConfig) -> dict:
    trap, r = _solve_trap(cfg)
    sec = cfg.section("trap").get("field_map", {})
    hw = float(sec.get("half_width", 50e-6))
    n = int(sec.get("n", 21))
    axes = [np.linspace(r[i] - hw, r[i] + hw, n) for i in range(3)]
    axes[2] = axes[2][axes[2] > 0]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    phi = trap.energy(pts) / trap.charge
    lines = ["x,y,z,phi"] + [f"{x!r},{y!r},{z!r},{p!r}" for (x, y, z), p in zip(pts.tolist(), phi.tolist())]
    atomic_write_text(Path(args.out) / "field_map.csv", "\n".join(lines) + "\n")
    result = {**_provenance(args, cfg, "field-map"), "points": len(pts), "center": r,
              "units": "phi is the effective potential energy per charge, volts"}
    write_json(Path(args.out) / "field_map_report.json", result)
    return result


def cmd_trap_dynamics(args, cfg: RunConfig) -> dict:
    sec = cfg.section("dynamics")
    t_end = float(sec.get("t_end", 1e-3))
    steps_per_rf = int(sec.get("steps_per_rf", 20))
    cmap = cfg.channel_map()
    step = args.sim_dt or (float(sec["sim_dt"]) if "sim_dt" in sec else None)
    _, params, group_size, results = _simulate_groups(args, cfg, "settled", t_end, step)
    node = "filtered" if params.lpf_cutoff is not None else "amp_out"
    sources = {}
    cycle = None
    for g, schedule, _, traces in results:
        cycle = schedule.cycle_period if cycle is None else min(cycle, schedule.cycle_period)
        for c in range(schedule.n_channels):
            ch = g * group_size + c
            if ch in cmap:
                sources[cmap[ch]] = pick(traces, node, c)
    constants = {eid: float(tr.samples[0]) for eid, tr in sources.items()}
    drive = cfg.drive().with_voltages(constants)
    trap, r_min = _solve_trap(cfg, drive)
    dt = 1.0 / (drive.rf_frequency * steps_per_rf)
    r0 = r_min + np.asarray(sec.get("initial_offset", [0.0, 0.0, 0.0]), dtype=float)
    runs = {}
    for label, volts in (("constant", None), ("reconstructed", sources)):
        traj = integrate_motion(trap, r0, np.zeros(3), t_end, dt, volts, cycle_period=cycle)
        _, energy = secular_energy(trap, traj, steps_per_rf, r_min)
        sec_r, fast = micromotion_split(traj, steps_per_rf)
        runs[label] = {
            "max_displacement": float(np.max(np.linalg.norm(traj.r - r_min, axis=-1))),
            "secular_energy_mean": float(energy.mean()),
            "secular_energy_max": float(energy.max()),
            "secular_amplitude": float(np.max(np.linalg.norm(sec_r - r_min, axis=-1))),
            "micromotion_amplitude": float(np.max(np.linalg.norm(fast, axis=-1))),
        }
        if label == "reconstructed":
            step = max(1, len(traj.t) // 5000)
            lines = ["t,x,y,z,vx,vy,vz"] + [",".join(repr(v) for v in row) for row in
                                           np.column_stack([traj.t, traj.r, traj.v])[::step].tolist()]
            atomic_write_text(Path(args.out) / "trajectory.csv", "\n".join(lines) + "\n")
    e_c = runs["constant"]["secular_energy_mean"]
    e_r = runs["reconstructed"]["secular_energy_mean"]
    result = {**_provenance(args, cfg, "trap-dynamics"), "t_end": t_end, "dt": dt, "minimum": r_min,
              "voltages_at_start": constants, "runs": runs,
              "energy_relative_difference": abs(e_r - e_c) / e_c if e_c > 0 else None}
    write_json(Path(args.out) / "dynamics_report.json", result)
    return result


COMMANDS = {
    "compile": cmd_compile,
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "tolerances": cmd_tolerances,
    "feasibility": cmd_feasibility,
    "trap-solve": cmd_trap_solve,
    "trap-dynamics": cmd_trap_dynamics,
    "field-map": cmd_field_map,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tdmtrap", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML configuration document")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--sim-dt", type=float, default=None, help="simulation step, seconds")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("TDMTRAP_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config)
        result = COMMANDS[args.command](args, cfg)
    except (ConfigError, CompileError, SimulationError, AnalysisError, TrapError,
            ValueError, KeyError, OSError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        sys.stderr.write(json.dumps(err) + "\n")
        return EXIT_VALIDATION
    summary = {k: v for k, v in result.items() if k in ("n_max", "summary", "total_clamps", "axial_frequency",
                                                        "energy_relative_difference")}
    if summary:
        log.info("%s: %s", args.command, summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
