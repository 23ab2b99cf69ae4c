#!/usr/bin/env python3
"""Ion motion under multiplexed electrode voltages versus ideal constants.

Compares the secular energy of an ion held by reconstructed voltages (with
and without the 2 kHz output filters) against constant voltages.
"""

import argparse
from pathlib import Path

import numpy as np

from tdmtrap.chain import ChainParams, pick, simulate
from tdmtrap.compiler import DacSpec, GainStage, compile_groups
from tdmtrap.io import write_json
from tdmtrap.trap import SurfaceTrap, TrapDrive, find_minimum, representative_geometry
from tdmtrap.trap.dynamics import integrate_motion, secular_energy
from tdmtrap.trap.model import SIDE_VOLTAGES
from tdmtrap.waveform import constant_waveform


def electrode_traces(params: ChainParams, t_end: float):
    ids = [f"s{j + 1}" for j in range(10)]
    waves = [constant_waveform(j, SIDE_VOLTAGES[e], t_end) for j, e in enumerate(ids)]
    node = "filtered" if params.lpf_cutoff else "amp_out"
    out, cycle = {}, None
    for g, (sched, _) in enumerate(compile_groups(waves, params.spec, GainStage(), 5)):
        cycle = sched.cycle_period
        traces = simulate(sched, params, sched.frame_period / 10, t_end, initial="settled")
        for c in range(sched.n_channels):
            out[ids[5 * g + c]] = pick(traces, node, c)
    return out, cycle


def run(traces, cycle, t_end, steps):
    start = {e: float(tr.samples[0]) for e, tr in traces.items()}
    trap = SurfaceTrap(representative_geometry(), TrapDrive.demonstration().with_voltages(start))
    r0 = find_minimum(trap, [0.0, 0.0, trap.rf_null_height()])
    dt = 1 / (trap.drive.rf_frequency * steps)
    res = {}
    for label, volts in (("constant", None), ("reconstructed", traces)):
        traj = integrate_motion(trap, r0, np.zeros(3), t_end, dt, volts, sample_every=1, cycle_period=cycle)
        _, e = secular_energy(trap, traj, steps, r0)
        res[label] = {"energy_mean": float(e.mean()), "energy_max": float(e.max()),
                      "max_excursion": float(np.max(np.linalg.norm(traj.r - r0, axis=1)))}
    res["relative_energy_change"] = res["reconstructed"]["energy_mean"] / res["constant"]["energy_mean"] - 1
    return res


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("results/ripple"))
    ap.add_argument("--t-end", type=float, default=1e-3)
    ap.add_argument("--steps-per-rf", type=int, default=20)
    args = ap.parse_args()
    summary = {}
    for label, lpf in (("filtered", 2e3), ("unfiltered", None)):
        params = ChainParams(spec=DacSpec(), lpf_cutoff=lpf)
        traces, cycle = electrode_traces(params, args.t_end)
        summary[label] = run(traces, cycle, args.t_end, args.steps_per_rf)
        print(f"{label:>10}: secular energy change {summary[label]['relative_energy_change']:+.2e}")
    write_json(args.out / "ripple_dynamics.json", summary)


if __name__ == "__main__":
    main()
