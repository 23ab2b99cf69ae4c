"""Measurements on reconstructed traces and resistor-tolerance propagation."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import optimize

from .chain import Trace
from .compiler import GainStage, amplifier, invert_amplifier
from .waveform import ChannelWaveform


class AnalysisError(ValueError):
    pass


class FitError(AnalysisError):
    pass


class SlewMeasurementError(AnalysisError):
    pass


@dataclass
class ReconstructionReport:
    max_abs_error: float
    rms_error: float
    ripple_pp: float
    droop_per_cycle_rel: float
    clamp_events: int
    n_samples: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ToleranceResult:
    v_low_mean: float
    v_low_sigma: float
    v_high_mean: float
    v_high_sigma: float
    n_samples: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SineFit:
    offset: float
    amplitude: float
    frequency: float
    phase: float
    n_used: int

    @property
    def peak(self) -> float:
        return self.offset + self.amplitude

    def __call__(self, t):
        return self.offset + self.amplitude * np.sin(2 * np.pi * self.frequency * np.asarray(t) + self.phase)

    def to_dict(self) -> dict:
        return {**asdict(self), "peak": self.peak}


def _decay_rate(values: np.ndarray, dt: float) -> float:
    """Leakage rate (1/s) from the longest strictly shrinking run of ``|values|``."""
    mag = np.abs(values)
    shrinking = (mag[1:] < mag[:-1]) & (mag[1:] > 0)
    best, best_len, run_start = None, 0, None
    for i, s in enumerate(np.append(shrinking, False)):
        if s and run_start is None:
            run_start = i
        elif not s and run_start is not None:
            if i - run_start > best_len:
                best, best_len = (run_start, i), i - run_start
            run_start = None
    if best is None:
        return 0.0
    a, b = best
    return math.log(mag[a] / mag[b]) / ((b - a) * dt)


def compare(target: ChannelWaveform, trace: Trace, gain: GainStage | None = None,
            cycle_period: float | None = None, settle_time: float = 0.0,
            rails: tuple[float, float] | None = None) -> ReconstructionReport:
    """Reconstruction error of ``trace`` against an output-voltage target.

    ``cap`` and ``dac_out`` traces are input-referred, so their target is mapped
    through the inverse amplifier (``gain`` required). Ripple and droop are
    measured per hold cycle after ``settle_time``; droop is the relative decay
    the input-referred voltage would accumulate over one full cycle at the leak
    rate observed during hold. ``rails`` counts samples pinned to a clip level.
    """
    t = trace.times
    overlap = (t >= 0) & (t <= target.total_duration * (1 + 1e-12))
    if not np.any(overlap):
        raise AnalysisError("trace does not overlap the target")
    t, v = t[overlap], trace.samples[overlap]
    want = target(t)
    input_referred = trace.node in ("cap", "dac_out")
    if input_referred:
        if gain is None:
            raise AnalysisError(f"{trace.node} trace needs the gain stage to compare")
        want = invert_amplifier(want, gain)
    err = v - want

    settled = t >= settle_time
    if not np.any(settled):
        raise AnalysisError("no samples after settle_time")
    es, vs, ts = err[settled], v[settled], t[settled]
    ripple, droop = 0.0, 0.0
    if cycle_period is not None:
        vin = vs if input_referred or gain is None else invert_amplifier(vs, gain)
        cycle_idx = np.floor((ts - ts[0]) / cycle_period).astype(int)
        rates = []
        for i in range(cycle_idx.max() + 1):
            sel = cycle_idx == i
            if sel.sum() < 3:
                continue
            ripple = max(ripple, float(np.ptp(es[sel])))
            rates.append(_decay_rate(vin[sel], trace.dt))
        if rates:
            droop = float(-math.expm1(-max(np.median(rates), 0.0) * cycle_period))
    clamps = 0
    if rails is not None:
        clamps = int(np.sum((np.abs(v - rails[0]) <= 1e-9) | (np.abs(v - rails[1]) <= 1e-9)))
    return ReconstructionReport(
        max_abs_error=float(np.max(np.abs(es))),
        rms_error=float(np.sqrt(np.mean(es**2))),
        ripple_pp=ripple,
        droop_per_cycle_rel=droop,
        clamp_events=clamps,
        n_samples=int(settled.sum()),
    )


def fit_exponential(trace: Trace, window: tuple[float, float] | None = None) -> tuple[float, float]:
    """Time constant of ``v0 * exp(-t / tau)`` and its 1-sigma uncertainty.

    Weighted least squares on ``log v`` over the positive samples in ``window``;
    weights ``v**2`` make the log-domain residuals match additive voltage noise.
    The uncertainty is the covariance estimate scaled by the reduced chi-square.
    """
    t, v = trace.times, trace.samples
    if window is not None:
        sel = (t >= window[0]) & (t <= window[1])
        t, v = t[sel], v[sel]
    sign = 1.0 if np.sum(v) >= 0 else -1.0
    keep = sign * v > 0
    t, v = t[keep], sign * v[keep]
    if len(t) < 3:
        raise FitError("need at least 3 positive samples in the fit window")
    tc = t - t.mean()
    w = v**2
    A = np.column_stack([np.ones_like(tc), tc]) * np.sqrt(w)[:, None]
    b = np.log(v) * np.sqrt(w)
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    slope = coef[1]
    span = t[-1] - t[0]
    if not slope < 0 or -slope * span < 1e-12:
        raise FitError("data are not decaying; time constant is unbounded")
    resid = b - A @ coef
    dof = len(t) - 2
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = s2 * np.linalg.inv(A.T @ A)
    tau = -1.0 / slope
    return float(tau), float(math.sqrt(cov[1, 1]) / slope**2)


def _linear_sine(t, y, f):
    X = np.column_stack([np.ones_like(t), np.sin(2 * np.pi * f * t), np.cos(2 * np.pi * f * t)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    r = y - X @ coef
    return coef, float(r @ r)


def _frequency_guess(t: np.ndarray, y: np.ndarray) -> float:
    # zero-padded FFT of the full (clipped) record; clipping adds harmonics, not a new fundamental
    n = len(y)
    pad = 8 * (1 << (n - 1).bit_length())
    spec = np.abs(np.fft.rfft((y - y.mean()) * np.hanning(n), pad))
    freqs = np.fft.rfftfreq(pad, t[1] - t[0])
    return float(freqs[1 + np.argmax(spec[1:])])


def fit_clipped_sine(trace: Trace, clip_high: float, clip_low: float | None = None,
                     guard_fraction: float = 0.02) -> SineFit:
    """Sine fit using only samples clear of the clip level(s).

    Samples within ``guard_fraction`` of the trace swing from ``clip_high`` (and
    from ``clip_low`` when given) are excluded before fitting.
    """
    t, y = trace.times, trace.samples
    swing = float(np.ptp(y))
    if swing == 0:
        raise FitError("flat trace")
    guard = guard_fraction * swing
    mask = y < clip_high - guard
    if clip_low is not None:
        mask &= y > clip_low + guard
    if mask.sum() < 4:
        raise FitError("not enough unclipped samples")
    f0 = _frequency_guess(t, y)
    df = 1.0 / (t[-1] - t[0])
    tm, ym = t[mask], y[mask]
    res = optimize.minimize_scalar(lambda f: _linear_sine(tm, ym, f)[1],
                                   bounds=(max(f0 - df, 0.5 * f0), f0 + df), method="bounded",
                                   options={"xatol": f0 * 1e-12})
    f = float(res.x)
    (c, a, b), _ = _linear_sine(tm, ym, f)
    p0 = [c, math.hypot(a, b), f, math.atan2(b, a)]

    def resid(p):
        return p[0] + p[1] * np.sin(2 * np.pi * p[2] * tm + p[3]) - ym

    sol = optimize.least_squares(resid, p0, x_scale=[swing, swing, f, 1.0],
                                 xtol=1e-15, ftol=1e-15, gtol=1e-15)
    off, amp, freq, ph = sol.x
    if amp < 0:
        amp, ph = -amp, ph + math.pi
    ph = (ph + math.pi) % (2 * math.pi) - math.pi
    return SineFit(float(off), float(amp), float(freq), float(ph), int(mask.sum()))


def _crossing(t: np.ndarray, y: np.ndarray, i: int, level: float) -> float:
    """Linear interpolation of the crossing of ``level`` between samples ``i`` and ``i+1``."""
    y0, y1 = y[i], y[i + 1]
    if y1 == y0:
        return float(t[i])
    return float(t[i] + (level - y0) / (y1 - y0) * (t[i + 1] - t[i]))


def rise_time_10_90(trace: Trace) -> tuple[float, float]:
    """``(t90 - t10, swing)`` of the single full-swing transition in ``trace``."""
    t, y = trace.times, trace.samples
    lo, hi = float(y.min()), float(y.max())
    swing = hi - lo
    if swing <= 0:
        raise SlewMeasurementError("trace has no transition")
    rising = np.argmax(y) > np.argmin(y)
    s = y if rising else -y
    l10 = (lo + 0.1 * swing) if rising else -(hi - 0.1 * swing)
    l90 = (lo + 0.9 * swing) if rising else -(hi - 0.9 * swing)
    above90 = np.nonzero(s >= l90)[0]
    if len(above90) == 0 or above90[0] == 0:
        raise SlewMeasurementError("no 90 % crossing found")
    i90 = above90[0]
    below10 = np.nonzero(s[:i90] < l10)[0]
    if len(below10) == 0:
        raise SlewMeasurementError("no 10 % crossing before the 90 % crossing")
    i10 = below10[-1]
    t10 = _crossing(t, s, i10, l10)
    t90 = _crossing(t, s, i90 - 1, l90)
    if not t90 > t10:
        raise SlewMeasurementError("degenerate transition")
    return t90 - t10, swing


def measure_slew(trace: Trace) -> float:
    """Slew rate ``0.8 * swing / (t90 - t10)`` in V/s."""
    rise, swing = rise_time_10_90(trace)
    return 0.8 * swing / rise


TOLERANCE_CHUNK = 1 << 18


def propagate_tolerances(v_in_low: float, v_in_high: float, g: GainStage, rel_tol: float = 0.05,
                         n_samples: int = 1_000_000, seed: int = 0) -> ToleranceResult:
    """Monte Carlo spread of the amplifier output at two input levels.

    ``r0`` and ``r1`` are drawn independently and uniformly within
    ``±rel_tol`` of nominal. Draws come in fixed-size chunks, each from its own
    ``SeedSequence(seed).spawn`` child, so chunks can be farmed out without
    changing the result.
    """
    if n_samples < 10_000:
        raise ValueError("need at least 1e4 samples")
    if rel_tol < 0:
        raise ValueError("tolerance must be >= 0")
    n_chunks = -(-n_samples // TOLERANCE_CHUNK)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    lows, highs = [], []
    for i, child in enumerate(children):
        size = min(TOLERANCE_CHUNK, n_samples - i * TOLERANCE_CHUNK)
        rng = np.random.default_rng(child)
        r0 = g.r0 * (1 + rng.uniform(-rel_tol, rel_tol, size))
        r1 = g.r1 * (1 + rng.uniform(-rel_tol, rel_tol, size))
        dratio = r0 / r1 - g.ratio
        lows.append(dratio * (v_in_low - g.vref))
        highs.append(dratio * (v_in_high - g.vref))
    # deviations from nominal keep degenerate cases (zero tolerance, v_in == vref) exactly zero
    lo, hi = np.concatenate(lows), np.concatenate(highs)
    return ToleranceResult(nominal_output(v_in_low, g) + float(lo.mean()), float(lo.std()),
                           nominal_output(v_in_high, g) + float(hi.mean()), float(hi.std()),
                           n_samples)


def first_order_sigma(v_in: float, g: GainStage, rel_tol: float) -> float:
    """Linearized output spread for uniform ``±rel_tol`` on both resistors."""
    return abs(v_in - g.vref) * g.ratio * rel_tol * math.sqrt(2.0 / 3.0)


def nominal_output(v_in: float, g: GainStage) -> float:
    return float(amplifier(v_in, g))
