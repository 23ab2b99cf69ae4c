import math

import numpy as np
import pytest

from tdmtrap.chain import Trace
from tdmtrap.trap import SurfaceTrap, TrapDrive, TrapError, secular_frequencies
from tdmtrap.trap.dynamics import (EscapeError, integrate_motion, leapfrog, micromotion_split,
                                   oscillation_frequency, rf_steps)
from tdmtrap.trap.model import CA40_MASS


def test_harmonic_well_energy_and_frequency():
    k = np.array([1.0, 2.5, 4.0]) * 1e-12
    omega = np.sqrt(k / CA40_MASS)
    dt = 2 * math.pi / omega.max() / 500
    t, r, v = leapfrog(lambda r, j: -k * r / CA40_MASS, [1e-6, 1e-6, 1e-6], np.zeros(3), dt, 100_000)
    energy = 0.5 * CA40_MASS * np.sum(v**2, axis=1) + 0.5 * np.sum(k * r**2, axis=1)
    assert np.max(np.abs(energy - energy[0])) / energy[0] < 1e-4
    for i in range(3):
        assert oscillation_frequency(t, r[:, i]) == pytest.approx(omega[i] / (2 * math.pi), rel=0.02)


def test_axial_oscillation_matches_hessian(trap, trap_minimum):
    f_axial = secular_frequencies(trap, trap_minimum).along([1, 0, 0])
    dt = rf_steps(trap)
    traj = integrate_motion(trap, trap_minimum + [1e-6, 0, 0], np.zeros(3), 12 / f_axial, dt)
    assert oscillation_frequency(traj.t, traj.r[:, 0]) == pytest.approx(f_axial, rel=0.02)


def test_start_at_rest_leaves_micromotion(trap, trap_minimum):
    dt = rf_steps(trap)
    traj = integrate_motion(trap, trap_minimum, np.zeros(3), 20e-6, dt)
    secular, fast = micromotion_split(traj, 20)
    sec_amp = np.max(np.linalg.norm(secular - trap_minimum, axis=1))
    micro_amp = np.max(np.linalg.norm(fast, axis=1))
    assert sec_amp < micro_amp


def test_constant_traces_equal_constants(trap, trap_minimum):
    dt = rf_steps(trap)
    const = integrate_motion(trap, trap_minimum, np.zeros(3), 2e-6, dt)
    volts = {k: Trace("filtered", 0, 0.0, 1e-8, np.full(400, v))
             for k, v in trap.drive.dc_voltages.items()}
    traced = integrate_motion(trap, trap_minimum, np.zeros(3), 2e-6, dt, volts)
    np.testing.assert_allclose(traced.r, const.r, rtol=0, atol=1e-15)


def test_escape_without_rf(geometry, trap_minimum):
    trap = SurfaceTrap(geometry, TrapDrive.demonstration(rf_peak_to_peak=0.0))
    with pytest.raises(EscapeError) as info:
        integrate_motion(trap, trap_minimum, np.zeros(3), 200e-6, rf_steps(trap), box_half_width=20e-6)
    assert 0 < info.value.time < 200e-6


def test_step_validation(trap, trap_minimum):
    with pytest.raises(TrapError):
        integrate_motion(trap, trap_minimum, np.zeros(3), 1e-6, 1e-8)
    with pytest.raises(TrapError):
        integrate_motion(trap, trap_minimum, np.zeros(3), 1e-6, rf_steps(trap), cycle_period=1e-8)
    short = {"s3": Trace("filtered", 2, 0.0, 1e-9, np.full(10, 10.4))}
    with pytest.raises(TrapError, match="ends before"):
        integrate_motion(trap, trap_minimum, np.zeros(3), 1e-6, rf_steps(trap), short)
