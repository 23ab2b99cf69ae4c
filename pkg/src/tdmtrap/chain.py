"""Behavioral model of the DAC -> switch/capacitor -> amplifier -> filter chain.

The capacitor node is piecewise exponential: during its slot a channel charges
toward the DAC output through the switch, otherwise it leaks toward 0 V. Both
phases are integrated in closed form, so capacitor traces do not depend on the
simulation step. Slew limiting at the amplifier output is inherently stepwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import lfilter

from .compiler import DacSpec, GainStage, TdmSchedule, amplifier

NODES = ("dac_out", "cap", "amp_out", "filtered")

# Trace.channel value used for the shared DAC bus trace.
BUS = -1


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class ChainParams:
    spec: DacSpec = field(default_factory=DacSpec)
    gain: GainStage = field(default_factory=GainStage)
    r_on: float = 9.0
    c_hold: float = 33e-12
    tau_hold: float = 0.233
    input_offset_low: float = 0.26
    input_offset_high: float = 2.79
    clip_low: float = -7.5
    clip_high: float = 14.2
    slew_rate: float = 193e6
    lpf_cutoff: float | None = 2e3

    def __post_init__(self):
        if not (self.r_on > 0 and self.c_hold > 0 and self.tau_hold > 0):
            raise ValueError("r_on, c_hold and tau_hold must be positive")
        if not self.clip_high > self.clip_low:
            raise ValueError("clip_high must exceed clip_low")
        if not self.slew_rate > 0:
            raise ValueError("slew rate must be positive")
        if self.lpf_cutoff is not None and not self.lpf_cutoff > 0:
            raise ValueError("LPF cutoff must be positive")

    @property
    def tau_charge(self) -> float:
        return self.r_on * self.c_hold

    @classmethod
    def ideal(cls, spec: DacSpec | None = None, gain: GainStage | None = None) -> "ChainParams":
        """No offset, no leakage, no clipping or slew, no filter."""
        spec = spec or DacSpec()
        return cls(spec=spec, gain=gain or GainStage(), tau_hold=math.inf,
                   input_offset_low=spec.input_range_low,
                   input_offset_high=spec.input_range_high,
                   clip_low=-1e9, clip_high=1e9, slew_rate=1e30, lpf_cutoff=None)

    def with_(self, **changes) -> "ChainParams":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class Trace:
    node: str
    channel: int
    t0: float
    dt: float
    samples: np.ndarray

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        if not self.dt > 0:
            raise ValueError("trace dt must be positive")
        if s.ndim != 1 or not np.all(np.isfinite(s)):
            raise ValueError("trace samples must be a finite 1-D array")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.samples))

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (len(self.samples) - 1)

    def __len__(self):
        return len(self.samples)


def dac_output(code, p: ChainParams):
    """DAC output voltage, ideal transfer remapped onto the measured offset span."""
    c = np.asarray(code)
    if np.any(c < 0) or np.any(c > p.spec.max_code):
        raise ValueError(f"DAC code outside [0, {p.spec.max_code}]")
    v = p.input_offset_low + c / p.spec.max_code * (p.input_offset_high - p.input_offset_low)
    return float(v) if np.ndim(v) == 0 else v


def rc_charge(v_cap, v_drive, dt, p: ChainParams):
    if np.any(np.asarray(dt) < 0):
        raise ValueError("dt must be >= 0")
    return v_drive + (v_cap - v_drive) * np.exp(-np.asarray(dt) / p.tau_charge)


def hold_decay(v_cap, dt, p: ChainParams):
    if np.any(np.asarray(dt) < 0):
        raise ValueError("dt must be >= 0")
    return v_cap * np.exp(-np.asarray(dt) / p.tau_hold)


def clip_slew(v_target: float, v_prev: float, dt: float, p: ChainParams) -> float:
    if not dt > 0:
        raise ValueError("dt must be positive")
    v = min(max(v_target, p.clip_low), p.clip_high)
    step = p.slew_rate * dt
    return min(max(v, v_prev - step), v_prev + step)


def lpf_step(v_out_prev: float, v_in: float, dt: float, cutoff: float) -> float:
    """First-order low-pass update for an input held constant over ``dt``."""
    if not (dt > 0 and cutoff > 0):
        raise ValueError("dt and cutoff must be positive")
    return v_in + (v_out_prev - v_in) * math.exp(-dt * 2 * math.pi * cutoff)


def lpf_filter(x: np.ndarray, dt: float, cutoff: float, y0: float | None = None) -> np.ndarray:
    """Apply :func:`lpf_step` along ``x``; ``y[0] = y0`` (defaults to ``x[0]``)."""
    x = np.asarray(x, dtype=float)
    a = math.exp(-dt * 2 * math.pi * cutoff)
    y0 = x[0] if y0 is None else y0
    y = np.empty_like(x)
    y[0] = y0
    if len(x) > 1:
        y[1:] = lfilter([1 - a], [1, -a], x[:-1], zi=[a * y0])[0]
    return y


def slew_limit(target: np.ndarray, dt: float, p: ChainParams, v0: float | None = None) -> np.ndarray:
    """Run :func:`clip_slew` along a sampled target; ``v0`` defaults to the clipped first sample."""
    v = np.clip(np.asarray(target, dtype=float), p.clip_low, p.clip_high)
    step = p.slew_rate * dt
    first = v[0] if v0 is None else v0
    diffs = np.diff(np.concatenate([[first], v[1:]]))
    if v0 is None and np.all(np.abs(diffs) <= step):
        return v
    out = v.tolist()
    prev = first
    for j, val in enumerate(out):
        if j == 0 and v0 is None:
            prev = val
            continue
        if val > prev + step:
            val = prev + step
        elif val < prev - step:
            val = prev - step
        out[j] = val
        prev = val
    return np.asarray(out)


def slot_boundaries(codes: np.ndarray, n_channels: int, channel: int, n_slots: int,
                    frame: float, p: ChainParams, v0: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Capacitor voltage at the start and end of each of the channel's first ``n_slots`` slots.

    ``codes`` are this channel's codes in playback order (cycled if shorter).
    Returns ``(start, end, drive)`` arrays of length ``n_slots``.
    """
    drive = dac_output(np.resize(codes, n_slots), p)
    e_rc = math.exp(-frame / p.tau_charge)
    e_hold = math.exp(-(n_channels - 1) * frame / p.tau_hold)
    s0 = v0 * math.exp(-channel * frame / p.tau_hold)
    a = e_hold * e_rc
    u = e_hold * (1 - e_rc) * drive
    start = np.empty(n_slots)
    start[0] = s0
    if n_slots > 1:
        start[1:] = lfilter([1.0], [1.0, -a], u[:-1], zi=[a * s0])[0]
    end = drive + (start - drive) * e_rc
    return start, end, drive


def _cap_voltage(t: np.ndarray, codes: np.ndarray, n_channels: int, channel: int,
                 frame: float, p: ChainParams, v0: float) -> np.ndarray:
    k = np.floor(t / frame).astype(np.int64)
    q = k - channel
    n_slots = int(max(q.max(), 0) // n_channels) + 1
    start, end, drive = slot_boundaries(codes, n_channels, channel, n_slots, frame, p, v0)
    out = np.empty_like(t)

    before = q < 0
    out[before] = v0 * np.exp(-t[before] / p.tau_hold)

    qa = np.where(before, 0, q)
    n = qa // n_channels
    charging = ~before & (qa % n_channels == 0)
    holding = ~before & ~charging

    slot_start = (n * n_channels + channel) * frame
    loc = np.maximum(t - slot_start, 0.0)
    out[charging] = drive[n[charging]] + (start[n[charging]] - drive[n[charging]]) * np.exp(
        -loc[charging] / p.tau_charge)
    loc_h = np.maximum(t - slot_start - frame, 0.0)
    out[holding] = end[n[holding]] * np.exp(-loc_h[holding] / p.tau_hold)
    return out


def simulate(schedule: TdmSchedule, p: ChainParams, sim_dt: float | None = None,
             duration: float | None = None, initial: str = "zero") -> list[Trace]:
    """Simulate every node of the chain on a uniform grid.

    Parameters
    ----------
    schedule : TdmSchedule
        Played back cyclically when ``duration`` exceeds its length.
    sim_dt : float, optional
        Grid step; at most ``frame_period / 10``. Defaults to ``frame_period / 100``.
    duration : float, optional
        Simulated time; defaults to the schedule duration.
    initial : {"zero", "settled"}
        Capacitors start discharged, or pre-charged to their first code's level.

    Returns
    -------
    list of Trace
        The shared ``dac_out`` bus trace (channel ``BUS``), then for every channel
        its ``cap`` and ``amp_out`` traces and, when a filter is configured,
        ``filtered``.
    """
    frame = schedule.frame_period
    if sim_dt is None:
        sim_dt = frame / 100
    if duration is None:
        duration = schedule.duration
    if not sim_dt > 0 or sim_dt > frame / 10 * (1 + 1e-9):
        raise SimulationError(f"sim_dt must be in (0, frame_period/10], got {sim_dt}")
    if not duration > 0:
        raise SimulationError("duration must be positive")
    if schedule.bits != p.spec.bits:
        raise SimulationError("schedule bit depth does not match the DAC spec")
    if initial not in ("zero", "settled"):
        raise SimulationError(f"unknown initial state {initial!r}")

    m = math.floor(duration / sim_dt + 1e-9)
    t = np.arange(m + 1) * sim_dt
    n = schedule.n_channels
    k = np.floor(t / frame).astype(np.int64)
    traces = [Trace("dac_out", BUS, 0.0, sim_dt, dac_output(schedule.codes[k % len(schedule.codes)], p))]

    for c in range(n):
        codes = schedule.channel_codes(c)
        v0 = dac_output(int(codes[0]), p) if initial == "settled" else 0.0
        cap = _cap_voltage(t, codes, n, c, frame, p, v0)
        amp = slew_limit(amplifier(cap, p.gain), sim_dt, p)
        traces.append(Trace("cap", c, 0.0, sim_dt, cap))
        traces.append(Trace("amp_out", c, 0.0, sim_dt, amp))
        if p.lpf_cutoff is not None:
            traces.append(Trace("filtered", c, 0.0, sim_dt, lpf_filter(amp, sim_dt, p.lpf_cutoff)))
    return traces


def pick(traces: list[Trace], node: str, channel: int) -> Trace:
    for tr in traces:
        if tr.node == node and tr.channel == channel:
            return tr
    raise KeyError(f"no {node} trace for channel {channel}")
