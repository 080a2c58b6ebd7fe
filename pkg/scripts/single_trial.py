#!/usr/bin/env python3
"""Run one seeded optimization trial and print the per-iteration trace.

Useful for eyeballing convergence behaviour before committing to a sweep:

    python scripts/single_trial.py --mode full --seed 3 --power-dbm 35
"""

import argparse
import math
import sys
import time

import numpy as np

from macrb.driver import AOMode, evaluate_final, run_alternating_optimization
from macrb.harness import stable_seed
from macrb.model import SystemConfig, draw_random_geometry


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--mode", default="full",
                        choices=[m.value for m in AOMode])
    parser.add_argument("--seed", type=int, default=0,
                        help="trial seed index (default: %(default)s)")
    parser.add_argument("--power-dbm", type=float, default=30.0)
    parser.add_argument("--sinr-db", type=float, default=10.0)
    parser.add_argument("--region-wavelengths", type=float, default=8.0)
    args = parser.parse_args()

    wavelength = SystemConfig().wavelength
    config = SystemConfig(
        power_budget=10.0 ** ((args.power_dbm - 30.0) / 10.0),
        sinr_threshold=10.0 ** (args.sinr_db / 10.0),
        d_max=args.region_wavelengths * wavelength)

    rng = np.random.default_rng(
        stable_seed(config.rng_seed, "trial-geometry", args.seed))
    geometry, _ = draw_random_geometry(config, rng)

    tic = time.perf_counter()
    trace = run_alternating_optimization(config, geometry, AOMode(args.mode))
    wall = time.perf_counter() - tic

    print(f"mode={args.mode}  seed={args.seed}  "
          f"P={args.power_dbm:g} dBm  gamma={args.sinr_db:g} dB  "
          f"d_max={args.region_wavelengths:g} wavelengths")
    print(f"{'it':>3}  {'bound (rad^2)':>14}  {'dB':>8}  blocks")
    for i, rec in enumerate(trace.records):
        blocks = ", ".join(f"{k}={v}" for k, v in rec.statuses.items())
        print(f"{i:3d}  {rec.crb:14.6e}  {10 * math.log10(rec.crb):8.3f}  "
              f"{blocks}")

    summary = evaluate_final(trace, config, geometry)
    print(f"\nconverged={summary.converged}  "
          f"outer_iterations={summary.outer_iterations}  "
          f"wall={wall:.1f} s")
    print("final SINRs (linear):",
          " ".join(f"{v:.3f}" for v in summary.sinr_values))
    print(f"final bound: {summary.crb:.6e} rad^2 "
          f"({10 * math.log10(summary.crb):.3f} dB)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
