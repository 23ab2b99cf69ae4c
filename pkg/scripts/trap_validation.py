#!/usr/bin/env python3
"""Trap minimum, secular frequencies and their sensitivity to the RF drive.

Runs on the shipped representative geometry unless --geometry is given.
"""

import argparse
from pathlib import Path

import numpy as np

from tdmtrap.io import write_json
from tdmtrap.trap import (NoTrapError, SaddleError, SurfaceTrap, TrapDrive, find_minimum,
                          grid_scan_minimum, load_geometry, representative_geometry,
                          secular_frequencies)


def solve(geometry, drive):
    trap = SurfaceTrap(geometry, drive)
    r = find_minimum(trap, [0.0, 0.0, trap.rf_null_height()])
    modes = secular_frequencies(trap, r)
    return trap, r, modes


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("results/trap"))
    ap.add_argument("--geometry", type=Path)
    args = ap.parse_args()
    geometry = load_geometry(args.geometry) if args.geometry else representative_geometry()

    trap, r, modes = solve(geometry, TrapDrive.demonstration())
    grid, cell = grid_scan_minimum(trap, r, 20e-6)
    base = {"minimum": r, "frequencies": modes.frequencies, "axes": modes.axes,
            "axial": modes.along([1, 0, 0]), "grid_minimum": grid, "grid_cell": cell,
            "rf_null_height": trap.rf_null_height()}
    print(f"minimum {np.round(r * 1e6, 2)} um, f = {np.round(modes.frequencies / 1e6, 3)} MHz")

    sweep = []
    for vpp in np.linspace(120, 260, 8):
        try:
            _, rv, mv = solve(geometry, TrapDrive.demonstration(rf_peak_to_peak=float(vpp)))
            sweep.append({"vpp": vpp, "height": rv[2], "frequencies": mv.frequencies})
            print(f"Vpp {vpp:6.1f}  z {rv[2] * 1e6:7.2f} um  f {np.round(mv.frequencies / 1e6, 3)} MHz")
        except (NoTrapError, SaddleError) as exc:
            sweep.append({"vpp": vpp, "error": str(exc)})
            print(f"Vpp {vpp:6.1f}  no trap: {exc}")
    write_json(args.out / "trap_validation.json", {"demonstration": base, "rf_sweep": sweep})


if __name__ == "__main__":
    main()
