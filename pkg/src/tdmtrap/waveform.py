"""Piecewise target waveforms for electrode output channels.

Values are target output voltages (after the final amplifier stage). Segment
intervals are half-open ``[start, end)`` with the final instant closed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

SEGMENT_KINDS = ("constant", "ramp", "sine")

_REQUIRED = {
    "constant": ("level",),
    "ramp": ("start", "end"),
    "sine": ("offset", "amplitude", "frequency"),
}

# Relative slack when the requested time sits at the end of the waveform
# but picked up rounding from k / rate.
_END_SLACK = 1e-9


class WaveformError(ValueError):
    """Invalid waveform definition or out-of-domain evaluation."""


@dataclass(frozen=True)
class Segment:
    kind: str
    duration: float
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SEGMENT_KINDS:
            raise WaveformError(f"unknown segment kind {self.kind!r}")
        if not (self.duration > 0 and math.isfinite(self.duration)):
            raise WaveformError(f"segment duration must be > 0, got {self.duration}")
        missing = [k for k in _REQUIRED[self.kind] if k not in self.params]
        if missing:
            raise WaveformError(f"{self.kind} segment missing {missing}")
        for k, v in self.params.items():
            if not math.isfinite(v):
                raise WaveformError(f"segment parameter {k} is not finite")
        if self.kind == "sine" and self.params["amplitude"] < 0:
            raise WaveformError("sine amplitude must be >= 0")

    @classmethod
    def constant(cls, level: float, duration: float) -> "Segment":
        return cls("constant", float(duration), {"level": float(level)})

    @classmethod
    def ramp(cls, start: float, end: float, duration: float) -> "Segment":
        return cls("ramp", float(duration), {"start": float(start), "end": float(end)})

    @classmethod
    def sine(cls, offset: float, amplitude: float, frequency: float, duration: float,
             phase: float = 0.0) -> "Segment":
        return cls("sine", float(duration), {
            "offset": float(offset), "amplitude": float(amplitude),
            "frequency": float(frequency), "phase": float(phase),
        })

    def value(self, tau):
        """Evaluate at local time ``tau`` (seconds since segment start)."""
        p = self.params
        tau = np.asarray(tau, dtype=float)
        if self.kind == "constant":
            return np.full_like(tau, p["level"])
        if self.kind == "ramp":
            return p["start"] + (p["end"] - p["start"]) * (tau / self.duration)
        phase = p.get("phase", 0.0)
        return p["offset"] + p["amplitude"] * np.sin(2 * np.pi * p["frequency"] * tau + phase)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "duration": self.duration, **dict(self.params)}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Segment":
        d = dict(d)
        try:
            kind = str(d.pop("kind"))
            duration = float(d.pop("duration"))
        except KeyError as exc:
            raise WaveformError(f"segment entry missing {exc}") from None
        return cls(kind, duration, {k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class ChannelWaveform:
    channel_id: int
    segments: tuple[Segment, ...]

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise WaveformError(f"channel {self.channel_id} has no segments")
        if int(self.channel_id) < 0:
            raise WaveformError(f"channel id must be >= 0, got {self.channel_id}")
        starts = np.concatenate([[0.0], np.cumsum([s.duration for s in self.segments])])
        object.__setattr__(self, "_starts", starts)

    @property
    def total_duration(self) -> float:
        return float(self._starts[-1])

    def __call__(self, t):
        """Vectorized evaluation; ``t`` must lie in ``[0, total_duration]``."""
        t = np.asarray(t, dtype=float)
        total = self.total_duration
        if np.any(t < 0) or np.any(t > total * (1 + _END_SLACK)) or not np.all(np.isfinite(t)):
            raise WaveformError(f"time outside [0, {total}] for channel {self.channel_id}")
        t = np.minimum(t, total)
        idx = np.searchsorted(self._starts[1:], t, side="right")
        idx = np.minimum(idx, len(self.segments) - 1)
        out = np.empty_like(t)
        for i, seg in enumerate(self.segments):
            mask = idx == i
            if np.any(mask):
                out[mask] = seg.value(t[mask] - self._starts[i])
        return out

    def to_dict(self) -> dict[str, Any]:
        return {"channel": self.channel_id, "segments": [s.to_dict() for s in self.segments]}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ChannelWaveform":
        try:
            cid = int(d["channel"])
            segs = d["segments"]
        except KeyError as exc:
            raise WaveformError(f"waveform entry missing {exc}") from None
        return cls(cid, tuple(Segment.from_dict(s) for s in segs))


def constant_waveform(channel_id: int, level: float, duration: float) -> ChannelWaveform:
    return ChannelWaveform(channel_id, (Segment.constant(level, duration),))


def evaluate(waveform: ChannelWaveform, t: float) -> float:
    """Target voltage of ``waveform`` at time ``t``."""
    return float(waveform(np.array([t]))[0])


def sample_count(total_duration: float, rate: float) -> int:
    return math.floor(total_duration * rate + _END_SLACK) + 1


def sample(waveform: ChannelWaveform, rate: float) -> np.ndarray:
    """Samples at ``t = k / rate`` for ``k = 0 .. floor(total_duration * rate)``."""
    if not rate > 0:
        raise WaveformError(f"sample rate must be > 0, got {rate}")
    k = np.arange(sample_count(waveform.total_duration, rate))
    return waveform(k / rate)


def waveforms_from_config(entries: Iterable[Mapping[str, Any]]) -> list[ChannelWaveform]:
    return sorted((ChannelWaveform.from_dict(e) for e in entries), key=lambda w: w.channel_id)


def check_channel_set(waveforms: Sequence[ChannelWaveform]) -> None:
    """Channel ids must be exactly 0..N-1 and durations must agree."""
    if not waveforms:
        raise WaveformError("no waveforms given")
    ids = sorted(w.channel_id for w in waveforms)
    if ids != list(range(len(ids))):
        raise WaveformError(f"channel ids must be 0..{len(ids) - 1}, got {ids}")
    durations = np.array([w.total_duration for w in waveforms])
    if np.ptp(durations) > 1e-12 * durations.max():
        raise WaveformError(f"waveform durations differ: {durations.tolist()}")
