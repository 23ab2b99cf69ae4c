#!/usr/bin/env python3
"""Output-range spread from resistor tolerances, swept over tolerance and sample count."""

import argparse
from pathlib import Path

from tdmtrap.analysis import first_order_sigma, propagate_tolerances
from tdmtrap.cli import format_uncertainty
from tdmtrap.compiler import GainStage
from tdmtrap.io import write_json


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("results/tolerances"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--v-low", type=float, default=0.26)
    ap.add_argument("--v-high", type=float, default=2.79)
    args = ap.parse_args()
    g = GainStage()
    rows = []
    for tol in (0.001, 0.01, 0.05, 0.1):
        for n in (10_000, 100_000, 1_000_000):
            r = propagate_tolerances(args.v_low, args.v_high, g, tol, n, args.seed)
            rows.append({"rel_tol": tol, "n_samples": n, **r.to_dict(),
                         "linear_sigma_low": first_order_sigma(args.v_low, g, tol),
                         "linear_sigma_high": first_order_sigma(args.v_high, g, tol)})
            print(f"tol {tol:5.3f}  n {n:>9d}  "
                  f"{format_uncertainty(r.v_low_mean, r.v_low_sigma):>10} V to "
                  f"{format_uncertainty(r.v_high_mean, r.v_high_sigma):>10} V  "
                  f"(linearized sigma {rows[-1]['linear_sigma_low']:.3f} / {rows[-1]['linear_sigma_high']:.3f})")
    write_json(args.out / "sweep.json", {"seed": args.seed, "rows": rows})


if __name__ == "__main__":
    main()
