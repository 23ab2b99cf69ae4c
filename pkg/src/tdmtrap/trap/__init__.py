from .geometry import Electrode, Geometry, load_geometry, representative_geometry
from .model import (NoTrapError, QuadraticPotential, SaddleError, SurfaceTrap, TrapDrive, TrapError,
                    basis_potential, find_minimum, grid_scan_minimum, secular_frequencies)

__all__ = [
    "Electrode", "Geometry", "load_geometry", "representative_geometry",
    "NoTrapError", "QuadraticPotential", "SaddleError", "SurfaceTrap", "TrapDrive", "TrapError",
    "basis_potential", "find_minimum", "grid_scan_minimum", "secular_frequencies",
]
