import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tdmtrap.analysis import (AnalysisError, FitError, SlewMeasurementError, compare,
                              first_order_sigma, fit_clipped_sine, fit_exponential, measure_slew,
                              nominal_output, propagate_tolerances, rise_time_10_90)
from tdmtrap.chain import ChainParams, Trace, pick, simulate
from tdmtrap.compiler import GainStage, TdmSchedule, compile_schedule
from tdmtrap.waveform import constant_waveform

FRAME = 1 / 30e6


def decay_trace(tau=0.233, noise=0.0, seed=0, window=(-45e-3, 300e-3), n=3451):
    t = np.linspace(*window, n)
    v = np.exp(-t / tau)
    v = v + noise * np.random.default_rng(seed).standard_normal(n)
    return Trace("amp_out", 0, t[0], t[1] - t[0], v)


class TestCompare:
    def test_constant_target_through_ideal_chain(self):
        p = ChainParams.ideal()
        sched, _ = compile_schedule([constant_waveform(0, 10.4, 2e-6)], p.spec, p.gain)
        amp = pick(simulate(sched, p, FRAME / 10), "amp_out", 0)
        rep = compare(constant_waveform(0, 10.4, 2e-6), amp, p.gain, sched.cycle_period,
                      settle_time=sched.cycle_period)
        assert rep.max_abs_error <= 0.5 * p.spec.lsb * 9.2
        assert 0.5 * p.spec.lsb * 9.2 == pytest.approx(0.70e-3, abs=0.01e-3)
        assert rep.droop_per_cycle_rel == 0.0

    def test_droop_metric_matches_closed_form(self):
        p = ChainParams.ideal().with_(tau_hold=0.233)
        waves = [constant_waveform(c, 10.4, 3e-6) for c in range(5)]
        sched, _ = compile_schedule(waves, p.spec, p.gain)
        cap = pick(simulate(sched, p, FRAME / 20), "cap", 0)
        rep = compare(waves[0], cap, p.gain, sched.cycle_period, settle_time=sched.cycle_period)
        assert rep.droop_per_cycle_rel == pytest.approx(1 - math.exp(-sched.cycle_period / 0.233),
                                                        rel=1e-3)
        assert rep.droop_per_cycle_rel == pytest.approx(7.15e-7, abs=1e-9)

    def test_rail_clamps_counted(self):
        p = ChainParams()
        sched = TdmSchedule(1, FRAME, np.full(20, 16383))
        amp = pick(simulate(sched, p, FRAME / 10), "amp_out", 0)
        rep = compare(constant_waveform(0, 15.0, sched.duration), amp,
                      rails=(p.clip_low, p.clip_high), settle_time=1e-7)
        assert rep.clamp_events > 0

    def test_needs_gain_for_input_referred(self):
        tr = Trace("cap", 0, 0.0, 1e-9, np.zeros(10))
        with pytest.raises(AnalysisError):
            compare(constant_waveform(0, 1.0, 1e-8), tr)


class TestExponential:
    def test_noiseless(self):
        tau, sigma = fit_exponential(decay_trace(), (-45e-3, 300e-3))
        assert tau == pytest.approx(0.233, rel=1e-4)
        assert sigma < 1e-9

    @pytest.mark.parametrize("seed", range(5))
    def test_half_percent_noise(self, seed):
        tau, sigma = fit_exponential(decay_trace(noise=0.005, seed=seed), (-45e-3, 300e-3))
        assert abs(tau - 0.233) <= 1e-3
        assert sigma < 1e-3

    def test_reported_sigma_is_calibrated(self):
        fits = [fit_exponential(decay_trace(noise=0.005, seed=s, n=600)) for s in range(200)]
        taus, sigmas = np.array(fits).T
        assert np.std(taus) == pytest.approx(np.mean(sigmas), rel=0.25)

    def test_constant_trace_rejected(self):
        with pytest.raises(FitError):
            fit_exponential(Trace("amp_out", 0, 0.0, 1e-3, np.ones(100)))

    def test_negative_decay(self):
        tr = decay_trace(tau=0.05)
        neg = Trace("amp_out", 0, tr.t0, tr.dt, -tr.samples)
        assert fit_exponential(neg)[0] == pytest.approx(0.05, rel=1e-6)


class TestClippedSine:
    @staticmethod
    def synth(offset, amp, f, clip_hi, clip_lo=None, noise=0.0, n=4000):
        t = np.arange(n) / (n * f / 3)
        y = offset + amp * np.sin(2 * np.pi * f * t + 0.3)
        y = y + noise * np.random.default_rng(3).standard_normal(n)
        y = np.minimum(y, clip_hi)
        if clip_lo is not None:
            y = np.maximum(y, clip_lo)
        return Trace("amp_out", 0, 0.0, t[1], y)

    def test_peak_recovered_above_clip(self):
        fit = fit_clipped_sine(self.synth(4.15, 11.65, 1e3, 14.2), 14.2)
        assert fit.peak == pytest.approx(15.8, abs=1e-6)
        assert fit.frequency == pytest.approx(1e3, rel=1e-9)

    def test_both_rails_with_noise(self):
        tr = self.synth(3.85, 11.95, 1e4, 14.2, -7.5, noise=0.02)
        fit = fit_clipped_sine(tr, 14.2, -7.5)
        assert fit.peak == pytest.approx(15.8, abs=0.1)

    def test_too_few_points(self):
        tr = Trace("amp_out", 0, 0.0, 1e-6, np.r_[np.full(50, 14.2), 0.0, 1.0])
        with pytest.raises(FitError):
            fit_clipped_sine(tr, 14.2)


class TestSlew:
    def test_ideal_ramp_geometry(self):
        dt = 0.1e-9
        t = np.arange(3000) * dt
        ramp = np.clip(-7.5 + (t - 50e-9) * 21.7 / 112.4e-9, -7.5, 14.2)
        tr = Trace("amp_out", 0, 0.0, dt, ramp)
        rise, swing = rise_time_10_90(tr)
        assert swing == pytest.approx(21.7)
        assert rise == pytest.approx(0.8 * 112.4e-9, rel=1e-6)
        assert rise == pytest.approx(89.9e-9, abs=0.1e-9)
        assert measure_slew(tr) == pytest.approx(193e6, rel=1e-3)

    @pytest.mark.parametrize("codes", [(0, 16383), (16383, 0)])
    def test_simulated_step_round_trip(self, codes):
        p = ChainParams().with_(lpf_cutoff=None)
        sched = TdmSchedule(1, FRAME, np.repeat(codes, 10))
        tr = pick(simulate(sched, p, FRAME / 20), "amp_out", 0)
        assert measure_slew(tr) == pytest.approx(193e6, rel=1e-2)

    def test_flat_trace(self):
        with pytest.raises(SlewMeasurementError):
            measure_slew(Trace("amp_out", 0, 0.0, 1e-9, np.zeros(10)))

    @given(st.floats(1e6, 1e10), st.floats(0.5, 30))
    def test_linear_ramp_any_rate(self, rate, swing):
        n = 400
        dur = swing / rate
        dt = dur / 100
        y = np.clip((np.arange(n) * dt - 50 * dt) * rate, 0, swing)
        assert measure_slew(Trace("amp_out", 0, 0.0, dt, y)) == pytest.approx(rate, rel=1e-6)


class TestTolerances:
    def test_demonstration_values(self, gain):
        res = propagate_tolerances(0.26, 2.79, gain, 0.05, 1_000_000, seed=0)
        assert res.v_low_mean == pytest.approx(-7.86, abs=0.05)
        assert res.v_high_mean == pytest.approx(15.42, abs=0.05)
        assert res.v_low_sigma == pytest.approx(0.33, rel=0.15)
        assert res.v_high_sigma == pytest.approx(0.52, rel=0.15)

    def test_against_first_order_oracle(self, gain):
        res = propagate_tolerances(0.26, 2.79, gain, 0.01, 200_000, seed=1)
        assert res.v_low_sigma == pytest.approx(first_order_sigma(0.26, gain, 0.01), rel=0.01)
        assert res.v_high_sigma == pytest.approx(first_order_sigma(2.79, gain, 0.01), rel=0.01)

    def test_seed_reproducible(self, gain):
        a = propagate_tolerances(0.26, 2.79, gain, 0.05, 50_000, seed=5)
        b = propagate_tolerances(0.26, 2.79, gain, 0.05, 50_000, seed=5)
        c = propagate_tolerances(0.26, 2.79, gain, 0.05, 50_000, seed=6)
        assert a == b and a != c

    @given(st.floats(0.0, 2.5), st.floats(1e3, 2e4), st.floats(500, 5e3))
    def test_degenerate_cases(self, v, r0, r1):
        g = GainStage(r0, r1)
        res = propagate_tolerances(v, g.vref, g, 0.0, 10_000)
        assert res.v_low_sigma == 0.0 and res.v_high_sigma == 0.0
        assert res.v_low_mean == nominal_output(v, g)
        spread = propagate_tolerances(g.vref, g.vref, g, 0.05, 10_000)
        assert spread.v_low_sigma == 0.0 and spread.v_low_mean == pytest.approx(g.vref)

    def test_rejects_tiny_sample(self, gain):
        with pytest.raises(ValueError):
            propagate_tolerances(0.26, 2.79, gain, n_samples=100)
