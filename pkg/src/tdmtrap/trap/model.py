"""Static trap potential: DC electrodes plus the RF pseudopotential.

Energies are in joules and positions in metres throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import constants

from .fields import assemble, rect_derivatives
from .geometry import Electrode, Geometry

CA40_MASS = 39.962590863 * constants.atomic_mass - constants.electron_mass
ELEMENTARY_CHARGE = constants.elementary_charge

# Side-electrode voltages of the demonstration run, keyed by electrode id.
SIDE_VOLTAGES = {
    "s1": 0.0, "s2": 0.0, "s3": 10.4, "s4": 10.4, "s5": 0.8,
    "s6": 0.0, "s7": 10.4, "s8": 10.4, "s9": 0.0, "s10": 0.0,
}
CENTER_VOLTAGE = 5.5


class TrapError(ValueError):
    pass


class NoTrapError(TrapError):
    pass


class SaddleError(TrapError):
    pass


@dataclass(frozen=True)
class TrapDrive:
    dc_voltages: Mapping[str, float] = field(default_factory=dict)
    rf_peak_to_peak: float = 189.0
    rf_frequency: float = 24.3e6
    ion_mass: float = CA40_MASS
    ion_charge: float = ELEMENTARY_CHARGE

    def __post_init__(self):
        if not self.rf_frequency > 0:
            raise TrapError("RF frequency must be positive")
        if self.rf_peak_to_peak < 0:
            raise TrapError("RF amplitude must be >= 0")
        if not self.ion_mass > 0:
            raise TrapError("ion mass must be positive")
        object.__setattr__(self, "dc_voltages", {str(k): float(v) for k, v in self.dc_voltages.items()})

    @property
    def rf_amplitude(self) -> float:
        return 0.5 * self.rf_peak_to_peak

    @property
    def omega(self) -> float:
        return 2 * math.pi * self.rf_frequency

    @classmethod
    def demonstration(cls, **overrides) -> "TrapDrive":
        volts = {**SIDE_VOLTAGES, "center": CENTER_VOLTAGE}
        return cls(dc_voltages=volts, **overrides)

    def with_voltages(self, volts: Mapping[str, float]) -> "TrapDrive":
        return TrapDrive({**self.dc_voltages, **volts}, self.rf_peak_to_peak, self.rf_frequency,
                         self.ion_mass, self.ion_charge)


def basis_potential(electrode: Electrode, r) -> np.ndarray | float:
    """Potential at ``r`` from ``electrode`` at 1 V with every other surface grounded."""
    val = rect_derivatives(r, np.array(electrode.rects))[()].sum(axis=-1)
    return float(val) if np.ndim(val) == 0 else val


class SurfaceTrap:
    """DC + pseudopotential model of a geometry under a given drive."""

    def __init__(self, geometry: Geometry, drive: TrapDrive):
        dc = geometry.by_role("center_dc", "side_dc")
        missing = [e.id for e in dc if e.id not in drive.dc_voltages]
        if missing:
            raise TrapError(f"no DC voltage for electrodes {missing}")
        unknown = set(drive.dc_voltages) - {e.id for e in dc}
        if unknown:
            raise TrapError(f"voltages given for unknown DC electrodes {sorted(unknown)}")
        self.geometry = geometry
        self.drive = drive
        self.rects, owner = geometry.rect_table()
        roles = np.array([geometry.electrodes[i].role for i in owner])
        volts = np.array([drive.dc_voltages.get(geometry.electrodes[i].id, 0.0) for i in owner])
        self.rf_mask = roles == "rf"
        self.dc_weights = np.where(self.rf_mask, 0.0, volts)
        self.rf_weights = self.rf_mask.astype(float)
        self.owner = owner
        self.dc_ids = [e.id for e in dc]
        q, m = drive.ion_charge, drive.ion_mass
        self.kappa = q**2 * drive.rf_amplitude**2 / (4 * m * drive.omega**2)

    @property
    def mass(self) -> float:
        return self.drive.ion_mass

    @property
    def charge(self) -> float:
        return self.drive.ion_charge

    def _derivs(self, r, order):
        return rect_derivatives(r, self.rects, order)

    def dc_potential(self, r):
        """DC electrostatic potential in volts."""
        return assemble(self._derivs(r, 0), self.dc_weights, 0)

    def rf_gradient(self, r):
        """Gradient of the unit-amplitude RF basis, V/m per volt."""
        return assemble(self._derivs(r, 1), self.rf_weights, 1)

    def pseudopotential(self, r):
        g = self.rf_gradient(r)
        return self.kappa * np.sum(g * g, axis=-1)

    def energy(self, r):
        d = self._derivs(r, 1)
        g = assemble(d, self.rf_weights, 1)
        return self.kappa * np.sum(g * g, axis=-1) + self.charge * assemble(d, self.dc_weights, 0)

    def gradient(self, r):
        d = self._derivs(r, 2)
        g = assemble(d, self.rf_weights, 1)
        h = assemble(d, self.rf_weights, 2)
        return 2 * self.kappa * np.einsum("...ij,...j->...i", h, g) + \
            self.charge * assemble(d, self.dc_weights, 1)

    def hessian(self, r):
        d = self._derivs(r, 3)
        g = assemble(d, self.rf_weights, 1)
        h = assemble(d, self.rf_weights, 2)
        t = assemble(d, self.rf_weights, 3)
        pseudo = 2 * self.kappa * (np.einsum("...ik,...kj->...ij", h, h) +
                                   np.einsum("...k,...kij->...ij", g, t))
        return pseudo + self.charge * assemble(d, self.dc_weights, 2)

    def pseudopotential_gradient(self, r):
        d = self._derivs(r, 2)
        g = assemble(d, self.rf_weights, 1)
        h = assemble(d, self.rf_weights, 2)
        return 2 * self.kappa * np.einsum("...ij,...j->...i", h, g)

    def rf_null_height(self, x: float = 0.0, y: float = 0.0, z_range=(1e-6, 1e-3)) -> float:
        """Lowest height above ``(x, y)`` where the RF field magnitude has a local minimum."""
        from scipy.optimize import minimize_scalar

        z = np.geomspace(*z_range, 400)
        pts = np.stack([np.full_like(z, x), np.full_like(z, y), z], axis=-1)
        mag = np.sum(self.rf_gradient(pts) ** 2, axis=-1)
        interior = np.nonzero((mag[1:-1] < mag[:-2]) & (mag[1:-1] <= mag[2:]))[0]
        if len(interior) == 0:
            raise NoTrapError("no RF null above this point")
        i = interior[0] + 1
        res = minimize_scalar(lambda h: float(np.sum(self.rf_gradient([x, y, h]) ** 2)),
                              bounds=(z[i - 1], z[i + 1]), method="bounded",
                              options={"xatol": 1e-13})
        return float(res.x)


@dataclass(frozen=True)
class QuadraticPotential:
    """``0.5 (r - center)^T K (r - center)``; a reference well for tests and tools."""

    stiffness: np.ndarray
    center: np.ndarray
    mass: float = CA40_MASS
    charge: float = ELEMENTARY_CHARGE

    def energy(self, r):
        d = np.asarray(r, dtype=float) - self.center
        return 0.5 * np.einsum("...i,ij,...j->...", d, self.stiffness, d)

    def gradient(self, r):
        return (np.asarray(r, dtype=float) - self.center) @ np.asarray(self.stiffness).T

    def hessian(self, r):
        return np.broadcast_to(np.asarray(self.stiffness, dtype=float),
                               np.shape(r)[:-1] + (3, 3)).copy()


@dataclass
class SecularModes:
    frequencies: np.ndarray  # Hz, ascending
    axes: np.ndarray  # columns are the principal axes
    eigenvalues: np.ndarray  # J/m^2

    def along(self, direction) -> float:
        """Frequency of the mode best aligned with ``direction``."""
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
        return float(self.frequencies[np.argmax(np.abs(self.axes.T @ d))])


def secular_frequencies(model, r) -> SecularModes:
    """Small-oscillation frequencies from the Hessian of the trap energy at ``r``."""
    h = np.asarray(model.hessian(np.asarray(r, dtype=float)))
    h = 0.5 * (h + h.T)
    lam, vec = np.linalg.eigh(h)
    if lam[0] <= 0:
        raise SaddleError(f"Hessian is not positive definite (eigenvalues {lam})")
    return SecularModes(np.sqrt(lam / model.mass) / (2 * math.pi), vec, lam)


def find_minimum(model, initial, grad_tol: float | None = None, max_iter: int = 200,
                 max_step: float = 20e-6, min_height: float = 1e-6,
                 max_excursion: float = 1e-3) -> np.ndarray:
    """Local minimum of ``model.energy`` by damped Newton descent.

    Newton steps are used when the Hessian is positive definite, otherwise the
    steepest-descent direction; both are capped at ``max_step`` and shortened by
    backtracking until the energy decreases (Armijo condition). A stationary
    point with a non-positive Hessian eigenvalue is left along that direction. Raises
    :class:`NoTrapError` when the iterate reaches the electrode plane
    (``z < min_height``), wanders farther than ``max_excursion`` from the
    start, or fails to converge.
    """
    r = np.array(initial, dtype=float)
    if r.shape != (3,) or r[2] <= 0:
        raise NoTrapError("initial point must be a 3-vector above the plane")
    if grad_tol is None:
        grad_tol = 1e-3 * model.charge  # 1 mV/m equivalent field
    start = r.copy()
    e = float(model.energy(r))
    for _ in range(max_iter):
        g = np.asarray(model.gradient(r))
        h = np.asarray(model.hessian(r))
        lam, vec = np.linalg.eigh(0.5 * (h + h.T))
        saddle = False
        if np.linalg.norm(g) < grad_tol:
            if lam[0] > 0:
                return r
            # stationary but not a minimum (symmetric saddle): leave along negative curvature
            step = vec[:, 0] * max_step
            g = np.zeros(3)
            saddle = True
        elif lam[0] > 0:
            step = -np.linalg.solve(h, g)
        else:
            step = -g / np.linalg.norm(g) * max_step
        norm = np.linalg.norm(step)
        if norm > max_step:
            step *= max_step / norm
        slope = float(g @ step)
        if slope == 0.0 and float(model.energy(r - step)) < float(model.energy(r + step)):
            step = -step
        alpha = 1.0
        while True:
            trial = r + alpha * step
            if trial[2] > min_height:
                e_trial = float(model.energy(trial))
                if e_trial <= e + 1e-4 * alpha * slope:
                    break
            alpha *= 0.5
            if alpha * np.linalg.norm(step) < 1e-15:
                if trial[2] <= min_height:
                    raise NoTrapError("descent ran into the electrode plane")
                # no further decrease representable; accept if gradient is already tiny
                if not saddle and np.linalg.norm(g) < 1e3 * grad_tol:
                    return r
                raise NoTrapError("line search failed; no minimum found")
        r, e = trial, e_trial
        if r[2] < 2 * min_height:
            raise NoTrapError("descent ran into the electrode plane")
        if np.linalg.norm(r - start) > max_excursion:
            raise NoTrapError("descent left the search region; no confining minimum")
    raise NoTrapError(f"no convergence in {max_iter} iterations")


def grid_scan_minimum(model, center, half_width: float, n: int = 21, levels: int = 3,
                      shrink: float = 2.0) -> tuple[np.ndarray, float]:
    """Brute-force minimum by nested grid refinement.

    Each level evaluates an ``n**3`` grid of half-width ``half_width`` around the
    current best point, then recentres with half-width ``shrink`` cells.
    Returns the best point and the final grid spacing.
    """
    c = np.array(center, dtype=float)
    hw = float(half_width)
    cell = 2 * hw / (n - 1)
    for _ in range(levels):
        cell = 2 * hw / (n - 1)
        axes = [np.linspace(c[i] - hw, c[i] + hw, n) for i in range(3)]
        axes[2] = axes[2][axes[2] > 0]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        e = np.asarray(model.energy(pts.reshape(-1, 3)))
        c = pts.reshape(-1, 3)[int(np.argmin(e))]
        hw = shrink * cell
    return c, cell
