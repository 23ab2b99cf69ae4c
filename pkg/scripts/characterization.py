#!/usr/bin/env python3
"""Output-channel characterization: clipped full-range sine, hold decay, slew.

Simulates one channel and runs the same fits used on oscilloscope captures.
Writes traces and a JSON summary to --out.
"""

import argparse
import math
from pathlib import Path

import numpy as np

from tdmtrap.analysis import fit_clipped_sine, fit_exponential, measure_slew, rise_time_10_90
from tdmtrap.chain import ChainParams, Trace, pick, simulate
from tdmtrap.compiler import GainStage, TdmSchedule, compile_schedule
from tdmtrap.io import write_json, write_trace_csv
from tdmtrap.waveform import ChannelWaveform, Segment

FRAME = 1 / 30e6


def clipped_sine(r0: float, out: Path) -> dict:
    p = ChainParams(gain=GainStage(r0=r0), lpf_cutoff=None)
    wave = ChannelWaveform(0, [Segment.sine(1.25, 11.5, 10e3, 200e-6)])
    sched, _ = compile_schedule([wave], p.spec, GainStage())
    amp = pick(simulate(sched, p, FRAME / 10), "amp_out", 0)
    write_trace_csv(out / "clipped_sine.csv", amp)
    fit = fit_clipped_sine(amp, p.clip_high, p.clip_low)
    return {"r0": r0, **fit.to_dict(), "trace_max": float(amp.samples.max()),
            "trace_min": float(amp.samples.min())}


def hold_decay(noise: float, seed: int, out: Path) -> dict:
    # switch opened at t = 0; the capacitor then leaks through the amplifier input
    t = np.linspace(-45e-3, 300e-3, 3451)
    v = 12.0 * np.exp(-t / 0.233) + noise * 12.0 * np.random.default_rng(seed).standard_normal(len(t))
    tr = Trace("amp_out", 0, t[0], t[1] - t[0], v)
    write_trace_csv(out / "hold_decay.csv", tr)
    tau, sigma = fit_exponential(tr, (-45e-3, 300e-3))
    return {"noise_fraction": noise, "tau": tau, "tau_sigma": sigma}


def slew(out: Path) -> dict:
    p = ChainParams().with_(lpf_cutoff=None)
    sched = TdmSchedule(1, FRAME, np.repeat([0, 16383, 0], 12))
    amp = pick(simulate(sched, p, FRAME / 20), "amp_out", 0)
    write_trace_csv(out / "step.csv", amp)
    rising = Trace("amp_out", 0, 0.0, amp.dt, amp.samples[: len(amp) // 2])
    rise, swing = rise_time_10_90(rising)
    return {"slew_rate": measure_slew(rising), "rise_10_90": rise, "swing": swing,
            "expected_rise": 0.8 * swing / p.slew_rate}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("results/characterization"))
    ap.add_argument("--r0", type=float, default=(15.8 - 2.79) / (2.79 - 1.25) * 1e3,
                    help="as-built feedback resistor, ohms")
    ap.add_argument("--noise", type=float, default=0.005)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    summary = {"clipped_sine": clipped_sine(args.r0, args.out),
               "clipped_sine_nominal_gain": clipped_sine(8.2e3, args.out / "nominal"),
               "hold_decay": hold_decay(args.noise, args.seed, args.out),
               "slew": slew(args.out)}
    write_json(args.out / "summary.json", summary)
    s = summary
    print(f"sine peak {s['clipped_sine']['peak']:.2f} V (nominal gain {s['clipped_sine_nominal_gain']['peak']:.2f} V)")
    print(f"hold tau {1e3 * s['hold_decay']['tau']:.1f} +- {1e3 * s['hold_decay']['tau_sigma']:.1f} ms")
    print(f"slew {s['slew']['slew_rate'] / 1e6:.1f} V/us, 10-90 {1e9 * s['slew']['rise_10_90']:.1f} ns")
    assert math.isfinite(s["slew"]["slew_rate"])


if __name__ == "__main__":
    main()
