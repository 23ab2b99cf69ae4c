"""Run configuration: one YAML document, each subcommand reads its own sections.

Sections (all optional unless a subcommand needs them)::

    dac:         bits, input_range_low, input_range_high, update_rate, settling_time
    gain:        r0, r1, vref
    chain:       r_on, c_hold, tau_hold, input_offset_low, input_offset_high,
                 clip_low, clip_high, slew_rate, lpf_cutoff (null disables the filter)
    compile:     group_size, encoding (one-hot | binary)
    waveforms:   list of {channel, segments: [{kind, duration, ...}]}
    simulate:    duration, sim_dt, initial (zero | settled)
    analyze:     tasks: list of {kind, trace, ...}
    tolerances:  v_in_low, v_in_high, rel_tol, n_samples
    feasibility: per_channel_rate, settling_time, switch_dead_time, charge_tau,
                 charge_settle_multiplier
    trap:        geometry (representative | path), rf_peak_to_peak, rf_frequency,
                 dc_voltages, channel_map, scan_half_width
    dynamics:    t_end, steps_per_rf, initial_offset

Numbers are SI (volts, seconds, hertz, ohms, farads, metres).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import yaml

from .chain import ChainParams
from .compiler import DacSpec, GainStage
from .trap.geometry import Geometry, load_geometry, representative_geometry
from .trap.model import TrapDrive
from .waveform import ChannelWaveform, waveforms_from_config


class ConfigError(ValueError):
    pass


def _num(v):
    # PyYAML reads "1e-6" (no dot) as a string
    if isinstance(v, str):
        try:
            return float(v)
        except ValueError:
            return v
    if isinstance(v, dict):
        return {k: _num(x) for k, x in v.items()}
    if isinstance(v, list):
        return [_num(x) for x in v]
    return v


def _build(cls, section: Mapping[str, Any] | None, **extra):
    section = dict(section or {})
    names = {f.name for f in fields(cls)}
    unknown = set(section) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    try:
        return cls(**section, **extra)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {cls.__name__}: {exc}") from None


@dataclass
class RunConfig:
    raw: dict
    path: Path | None = None
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a mapping")
        return cls(_num(raw), path, path.resolve().parent)

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any], base_dir: str | Path = ".") -> "RunConfig":
        return cls(_num(dict(raw)), None, Path(base_dir))

    def section(self, name: str, required: bool = False) -> dict:
        sec = self.raw.get(name)
        if sec is None:
            if required:
                raise ConfigError(f"config has no {name!r} section")
            return {}
        return sec

    def dac(self) -> DacSpec:
        d = dict(self.section("dac"))
        if "bits" in d:
            d["bits"] = int(d["bits"])
        return _build(DacSpec, d)

    def gain(self) -> GainStage:
        return _build(GainStage, self.section("gain"))

    def chain(self) -> ChainParams:
        sec = dict(self.section("chain"))
        for key in ("tau_hold",):
            if sec.get(key) in ("inf", "infinity"):
                sec[key] = math.inf
        return _build(ChainParams, sec, spec=self.dac(), gain=self.gain())

    def compile_options(self) -> tuple[int, str]:
        sec = self.section("compile")
        return int(sec.get("group_size", 5)), str(sec.get("encoding", "one-hot"))

    def waveforms(self) -> list[ChannelWaveform]:
        entries = self.raw.get("waveforms")
        if not entries:
            raise ConfigError("config has no waveforms")
        try:
            return waveforms_from_config(entries)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None

    def resolve(self, p: str | Path, *extra_dirs: Path) -> Path:
        p = Path(p)
        if p.is_absolute():
            return p
        for d in (*extra_dirs, self.base_dir):
            if (d / p).exists():
                return d / p
        return self.base_dir / p

    def geometry(self) -> Geometry:
        ref = self.section("trap").get("geometry", "representative")
        if ref == "representative":
            return representative_geometry()
        if isinstance(ref, dict):
            return Geometry.from_dict(ref)
        return load_geometry(self.resolve(ref))

    def drive(self) -> TrapDrive:
        sec = self.section("trap")
        base = TrapDrive.demonstration()
        volts = sec.get("dc_voltages")
        kwargs = {k: float(sec[k]) for k in ("rf_peak_to_peak", "rf_frequency", "ion_mass", "ion_charge")
                  if k in sec}
        try:
            return TrapDrive(dc_voltages={str(k): float(v) for k, v in volts.items()}
                             if volts is not None else base.dc_voltages, **kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def channel_map(self) -> dict[int, str]:
        """Output channel -> electrode id (defaults to channel j -> ``s{j+1}``)."""
        cmap = self.section("trap").get("channel_map")
        if cmap is None:
            return {j: f"s{j + 1}" for j in range(10)}
        return {int(k): str(v) for k, v in cmap.items()}


def dump_yaml(obj: Any) -> str:
    return yaml.safe_dump(obj, sort_keys=False)
