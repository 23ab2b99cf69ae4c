"""Classical ion trajectories in the full time-dependent trap field."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from ..chain import Trace
from .fields import PointGradient
from .model import SurfaceTrap, TrapError


class EscapeError(TrapError):
    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time


@dataclass
class Trajectory:
    t: np.ndarray
    r: np.ndarray  # (n, 3)
    v: np.ndarray  # (n, 3)
    mass: float

    def kinetic_energy(self) -> np.ndarray:
        return 0.5 * self.mass * np.sum(self.v**2, axis=-1)

    def window_average(self, samples: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Boxcar average over ``samples`` points (one RF period), valid part only."""
        kernel = np.ones(samples) / samples
        rs = np.stack([np.convolve(self.r[:, i], kernel, "valid") for i in range(3)], axis=-1)
        vs = np.stack([np.convolve(self.v[:, i], kernel, "valid") for i in range(3)], axis=-1)
        ts = np.convolve(self.t, kernel, "valid")
        return ts, rs, vs


def leapfrog(accel: Callable[[np.ndarray, int], np.ndarray], r0, v0, dt: float, n_steps: int,
             sample_every: int = 1, bounds: tuple[np.ndarray, np.ndarray] | None = None,
             t0: float = 0.0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Drift-kick-drift integration; ``accel(r, j)`` is evaluated at mid-step ``j``.

    Symplectic and second order for static forces. Raises :class:`EscapeError`
    when the position leaves ``bounds``.
    """
    r = np.array(r0, dtype=float)
    v = np.array(v0, dtype=float)
    n_out = n_steps // sample_every + 1
    ts = np.empty(n_out)
    rs = np.empty((n_out, 3))
    vs = np.empty((n_out, 3))
    ts[0], rs[0], vs[0] = t0, r, v
    half = 0.5 * dt
    lo, hi = bounds if bounds is not None else (None, None)
    k = 1
    for j in range(n_steps):
        r += half * v
        if lo is not None and (np.any(r < lo) or np.any(r > hi)):
            raise EscapeError(f"ion left the bounding box at t = {t0 + (j + 0.5) * dt:.3e} s",
                              t0 + (j + 0.5) * dt)
        v += dt * accel(r, j)
        r += half * v
        if (j + 1) % sample_every == 0:
            ts[k], rs[k], vs[k] = t0 + (j + 1) * dt, r, v
            k += 1
    return ts[:k], rs[:k], vs[:k]


def _voltage_matrix(trap: SurfaceTrap, voltages: Mapping[str, Trace | float] | None,
                    t_mid: np.ndarray) -> np.ndarray:
    """Per-step DC voltages, shape ``(n_steps, n_rect)``; RF rectangles get zero."""
    voltages = dict(voltages or {})
    unknown = set(voltages) - set(trap.dc_ids)
    if unknown:
        raise TrapError(f"voltage sources for unknown electrodes {sorted(unknown)}")
    per_electrode = {}
    for eid in trap.dc_ids:
        src = voltages.get(eid, trap.drive.dc_voltages[eid])
        if isinstance(src, Trace):
            if t_mid[-1] > src.t_end + src.dt:
                raise TrapError(f"voltage trace for {eid} ends before the integration does")
            per_electrode[eid] = np.interp(t_mid, src.times, src.samples)
        else:
            per_electrode[eid] = np.full(len(t_mid), float(src))
    ids = [e.id for e in trap.geometry.electrodes]
    cols = [per_electrode.get(ids[i]) if not trap.rf_mask[k] else None
            for k, i in enumerate(trap.owner)]
    out = np.zeros((len(t_mid), len(cols)))
    for k, col in enumerate(cols):
        if col is not None:
            out[:, k] = col
    return out


def integrate_motion(trap: SurfaceTrap, r0, v0, t_end: float, dt: float,
                     voltages: Mapping[str, Trace | float] | None = None,
                     sample_every: int = 1, box_half_width: float = 50e-6,
                     rf_phase: float = 0.0, cycle_period: float | None = None) -> Trajectory:
    """Integrate ``m r'' = -q grad(Phi(r, t))`` with the RF drive applied in full.

    ``Phi = sum_i V_i(t) phi_i + (Vpp / 2) cos(Omega t + rf_phase) phi_rf``.
    DC voltages come from ``voltages`` (a trace or a constant per electrode),
    falling back to the drive's constant values; traces are linearly
    interpolated at mid-step times. ``dt`` must resolve the RF period and the
    multiplexing cycle by 20 steps each.
    """
    drive = trap.drive
    limit = 1.0 / drive.rf_frequency
    if cycle_period is not None:
        limit = min(limit, cycle_period)
    if dt > limit / 20 * (1 + 1e-9):
        raise TrapError(f"dt = {dt:g} s does not resolve the fastest time scale ({limit:g} s) by 20 steps")
    n_steps = int(round(t_end / dt))
    r0 = np.asarray(r0, dtype=float)
    t_mid = (np.arange(n_steps) + 0.5) * dt
    dc = _voltage_matrix(trap, voltages, t_mid)
    rf = drive.rf_amplitude * np.cos(drive.omega * t_mid + rf_phase)
    weights = dc + rf[:, None] * trap.rf_weights[None, :]
    grad = PointGradient(trap.rects)
    qm = drive.ion_charge / drive.ion_mass
    lo = r0 - box_half_width
    hi = r0 + box_half_width
    lo[2] = max(lo[2], 0.0)

    def accel(r, j):
        return -qm * (grad.per_rect(r) @ weights[j])

    ts, rs, vs = leapfrog(accel, r0, v0, dt, n_steps, sample_every, (lo, hi))
    return Trajectory(ts, rs, vs, drive.ion_mass)


def secular_energy(trap: SurfaceTrap, traj: Trajectory, samples_per_rf: int,
                   r_ref=None) -> tuple[np.ndarray, np.ndarray]:
    """RF-period-averaged energy ``0.5 m |<v>|^2 + U_eff(<r>) - U_eff(r_ref)``."""
    ts, rs, vs = traj.window_average(samples_per_rf)
    r_ref = rs[0] if r_ref is None else np.asarray(r_ref)
    u = trap.energy(rs) - trap.energy(r_ref)
    return ts, 0.5 * traj.mass * np.sum(vs**2, axis=-1) + u


def oscillation_frequency(t: np.ndarray, x: np.ndarray) -> float:
    """Mean frequency from upward zero crossings of ``x - mean(x)``."""
    y = x - x.mean()
    idx = np.nonzero((y[:-1] < 0) & (y[1:] >= 0))[0]
    if len(idx) < 2:
        raise ValueError("fewer than two oscillation periods")
    tc = t[idx] - y[idx] * (t[idx + 1] - t[idx]) / (y[idx + 1] - y[idx])
    return (len(tc) - 1) / (tc[-1] - tc[0])


def rf_steps(trap: SurfaceTrap, steps_per_period: int = 20) -> float:
    return 1.0 / (trap.drive.rf_frequency * steps_per_period)


def micromotion_split(traj: Trajectory, samples_per_rf: int) -> tuple[np.ndarray, np.ndarray]:
    """Secular (RF-averaged) and micromotion parts of the position record."""
    ts, rs, _ = traj.window_average(samples_per_rf)
    off = (samples_per_rf - 1) // 2
    fast = traj.r[off:off + len(rs)] - rs
    return rs, fast


