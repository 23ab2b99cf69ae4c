"""Compile channel waveforms into a multiplexed DAC code stream.

One DAC plays codes for N channels in strict round-robin order. Slot ``k``
belongs to channel ``k mod N`` and lasts one frame period ``1 / update_rate``;
a channel is refreshed once per cycle of ``N`` frames.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .waveform import ChannelWaveform, check_channel_set

ENCODINGS = ("one-hot", "binary")


class CompileError(ValueError):
    pass


@dataclass(frozen=True)
class DacSpec:
    bits: int = 14
    input_range_low: float = 0.0
    input_range_high: float = 2.5
    update_rate: float = 30e6
    settling_time: float = 0.0

    def __post_init__(self):
        if self.bits < 1:
            raise ValueError("DAC needs at least one bit")
        if not self.input_range_high > self.input_range_low:
            raise ValueError("DAC range must be increasing")
        if not self.update_rate > 0:
            raise ValueError("update rate must be positive")
        if self.settling_time < 0:
            raise ValueError("settling time must be >= 0")

    @property
    def max_code(self) -> int:
        return 2**self.bits - 1

    @property
    def lsb(self) -> float:
        return (self.input_range_high - self.input_range_low) / self.max_code


@dataclass(frozen=True)
class GainStage:
    """Non-inverting amplifier referenced to ``vref`` through ``r1``."""

    r0: float = 8.2e3
    r1: float = 1.0e3
    vref: float = 1.25

    def __post_init__(self):
        if not (self.r0 > 0 and self.r1 > 0):
            raise ValueError("gain resistors must be positive")

    @property
    def ratio(self) -> float:
        return self.r0 / self.r1

    @property
    def gain(self) -> float:
        return 1.0 + self.r0 / self.r1


def amplifier(v_in, g: GainStage):
    """Ideal amplifier output ``(1 + r0/r1) v_in - (r0/r1) vref`` before clip and slew."""
    return v_in + g.ratio * (v_in - g.vref)


def invert_amplifier(v_out, g: GainStage):
    """Input voltage that makes :func:`amplifier` produce ``v_out``."""
    return (v_out + g.ratio * g.vref) / g.gain


def _quantize_raw(v_in, spec: DacSpec) -> np.ndarray:
    x = (np.asarray(v_in, dtype=float) - spec.input_range_low) / (
        spec.input_range_high - spec.input_range_low) * spec.max_code
    # round half away from zero
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize(v_in, spec: DacSpec):
    """Nearest DAC code, clamped to ``[0, 2**bits - 1]``."""
    codes = np.clip(_quantize_raw(v_in, spec), 0, spec.max_code).astype(np.int64)
    return int(codes) if codes.ndim == 0 else codes


def dequantize(code, spec: DacSpec):
    c = np.asarray(code)
    if np.any(c < 0) or np.any(c > spec.max_code):
        raise ValueError(f"DAC code outside [0, {spec.max_code}]")
    v = spec.input_range_low + c / spec.max_code * (spec.input_range_high - spec.input_range_low)
    return float(v) if np.ndim(v) == 0 else v


def select_line_count(n_channels: int, encoding: str = "one-hot") -> int:
    if n_channels < 1:
        raise ValueError("need at least one channel")
    if encoding == "one-hot":
        return n_channels
    if encoding == "binary":
        return 0 if n_channels == 1 else math.ceil(math.log2(n_channels))
    raise ValueError(f"unknown select encoding {encoding!r}")


def select_word(channel: int, n_channels: int, encoding: str = "one-hot") -> tuple[int, ...]:
    """Select-line levels that enable ``channel`` (line 0 first)."""
    if not 0 <= channel < n_channels:
        raise ValueError(f"channel {channel} outside 0..{n_channels - 1}")
    n_lines = select_line_count(n_channels, encoding)
    if encoding == "one-hot":
        return tuple(int(i == channel) for i in range(n_lines))
    return tuple((channel >> i) & 1 for i in range(n_lines))


@dataclass(frozen=True, eq=False)
class TdmSchedule:
    n_channels: int
    frame_period: float
    codes: np.ndarray
    select_encoding: str = "one-hot"
    bits: int = 14

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.int64)
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)
        if self.n_channels < 1:
            raise CompileError("schedule needs at least one channel")
        if codes.ndim != 1 or len(codes) == 0 or len(codes) % self.n_channels:
            raise CompileError("schedule length must be a positive multiple of n_channels")
        if codes.min() < 0 or codes.max() > 2**self.bits - 1:
            raise CompileError("schedule contains out-of-range codes")
        if not self.frame_period > 0:
            raise CompileError("frame period must be positive")
        if self.select_encoding not in ENCODINGS:
            raise CompileError(f"unknown select encoding {self.select_encoding!r}")

    @property
    def channels(self) -> np.ndarray:
        return np.arange(len(self.codes)) % self.n_channels

    @property
    def entries(self) -> list[tuple[int, int]]:
        return list(zip(self.codes.tolist(), self.channels.tolist()))

    @property
    def cycle_period(self) -> float:
        return self.n_channels * self.frame_period

    @property
    def samples_per_channel(self) -> int:
        return len(self.codes) // self.n_channels

    @property
    def duration(self) -> float:
        return len(self.codes) * self.frame_period

    def channel_codes(self, channel: int) -> np.ndarray:
        return self.codes[channel::self.n_channels]

    def select_lines(self) -> np.ndarray:
        """Select-line state per entry, shape ``(len(codes), n_lines)``."""
        words = np.array([select_word(c, self.n_channels, self.select_encoding)
                          for c in range(self.n_channels)], dtype=np.int8)
        if words.size == 0:
            return np.zeros((len(self.codes), 0), dtype=np.int8)
        return words[self.channels]

    def to_dict(self) -> dict:
        return {
            "n_channels": self.n_channels,
            "frame_period": self.frame_period,
            "cycle_period": self.cycle_period,
            "select_encoding": self.select_encoding,
            "select_lines": select_line_count(self.n_channels, self.select_encoding),
            "bits": self.bits,
            "entries": [list(e) for e in self.entries],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TdmSchedule":
        entries = np.asarray(d["entries"], dtype=np.int64).reshape(-1, 2)
        n = int(d["n_channels"])
        if np.any(entries[:, 1] != np.arange(len(entries)) % n):
            raise CompileError("schedule entries are not round-robin")
        return cls(n, float(d["frame_period"]), entries[:, 0],
                   d.get("select_encoding", "one-hot"), int(d.get("bits", 14)))


@dataclass
class CompileReport:
    n_channels: int
    frame_period: float
    cycle_period: float
    per_channel_rate: float
    samples_per_channel: int
    clamp_counts: list[int] = field(default_factory=list)
    max_quantization_error: list[float] = field(default_factory=list)

    @property
    def total_clamps(self) -> int:
        return sum(self.clamp_counts)

    def to_dict(self) -> dict:
        return {
            "n_channels": self.n_channels,
            "frame_period": self.frame_period,
            "cycle_period": self.cycle_period,
            "per_channel_rate": self.per_channel_rate,
            "samples_per_channel": self.samples_per_channel,
            "clamp_counts": list(self.clamp_counts),
            "total_clamps": self.total_clamps,
            "max_quantization_error": list(self.max_quantization_error),
        }


def slot_times(n_channels: int, samples_per_channel: int, frame_period: float) -> np.ndarray:
    """Start time of every slot, shape ``(samples_per_channel, n_channels)``."""
    k = np.arange(samples_per_channel * n_channels).reshape(samples_per_channel, n_channels)
    return k * frame_period


def compile_schedule(waveforms: Sequence[ChannelWaveform], spec: DacSpec, g: GainStage,
                     encoding: str = "one-hot") -> tuple[TdmSchedule, CompileReport]:
    """Quantize every channel at the start of its slot and interleave round-robin.

    The per-channel sample count is ``ceil(total_duration / cycle_period)`` so the
    schedule plays back for at least the waveform duration. Targets outside the
    reachable range clamp to the end codes and are counted in the report.
    """
    try:
        check_channel_set(waveforms)
    except ValueError as exc:
        raise CompileError(str(exc)) from None
    if encoding not in ENCODINGS:
        raise CompileError(f"unknown select encoding {encoding!r}")
    waveforms = sorted(waveforms, key=lambda w: w.channel_id)
    n = len(waveforms)
    frame = 1.0 / spec.update_rate
    cycle = n * frame
    total = waveforms[0].total_duration
    per_channel = max(1, math.ceil(total / cycle - 1e-9))

    times = slot_times(n, per_channel, frame)
    codes = np.empty(times.shape, dtype=np.int64)
    clamps, max_err = [], []
    for c, w in enumerate(waveforms):
        target = w(np.minimum(times[:, c], total))
        raw = _quantize_raw(invert_amplifier(target, g), spec)
        clamped = (raw < 0) | (raw > spec.max_code)
        codes[:, c] = np.clip(raw, 0, spec.max_code)
        err = np.abs(amplifier(dequantize(codes[:, c], spec), g) - target)[~clamped]
        clamps.append(int(clamped.sum()))
        max_err.append(float(err.max()) if err.size else 0.0)

    schedule = TdmSchedule(n, frame, codes.ravel(), encoding, spec.bits)
    report = CompileReport(n, frame, cycle, spec.update_rate / n, per_channel, clamps, max_err)
    return schedule, report


def compile_groups(waveforms: Sequence[ChannelWaveform], spec: DacSpec, g: GainStage,
                   group_size: int, encoding: str = "one-hot"
                   ) -> list[tuple[TdmSchedule, CompileReport]]:
    """Split channels ``0..M-1`` across DACs of ``group_size`` channels each.

    Channel ``j`` goes to DAC ``j // group_size`` as local channel ``j % group_size``.
    """
    if group_size < 1:
        raise CompileError("group size must be >= 1")
    try:
        check_channel_set(waveforms)
    except ValueError as exc:
        raise CompileError(str(exc)) from None
    waveforms = sorted(waveforms, key=lambda w: w.channel_id)
    out = []
    for start in range(0, len(waveforms), group_size):
        group = [ChannelWaveform(w.channel_id - start, w.segments)
                 for w in waveforms[start:start + group_size]]
        out.append(compile_schedule(group, spec, g, encoding))
    return out


def max_multiplexing_factor(per_channel_rate: float, settling_time: float = 10e-9,
                            switch_dead_time: float = 0.0, charge_tau: float = 297e-12,
                            charge_settle_multiplier: float = 5.0) -> int:
    """Largest channel count whose slots fit in one per-channel update period.

    Each slot must cover DAC settling, switch dead time and
    ``charge_settle_multiplier`` charging time constants.
    """
    if not per_channel_rate > 0:
        raise ValueError("per-channel rate must be positive")
    if min(settling_time, switch_dead_time, charge_tau, charge_settle_multiplier) < 0:
        raise ValueError("slot budget terms must be >= 0")
    slot = settling_time + switch_dead_time + charge_settle_multiplier * charge_tau
    budget = 1.0 / per_channel_rate
    if slot == 0:
        raise ValueError("slot budget is zero; multiplexing factor unbounded")
    # guard against 2000.0000000001 style rounding at exact multiples
    return max(0, math.floor(budget / slot * (1 + 1e-12)))
