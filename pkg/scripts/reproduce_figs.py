#!/usr/bin/env python3
"""Run the three standard sweeps and write one CSV per sweep.

Power (20-40 dBm), SINR floor (5-15 dB), and receive-region size (2-8
wavelengths), each with the movable-antenna optimizer against its relevant
baseline.  With the default 9-point grids and 20 seeds this takes a few
hours on one core; pass --seeds 5 --points 5 for a faster look.

    python scripts/reproduce_figs.py --out-dir results/ --jobs 4
"""

import argparse
import pathlib
import sys
import time

import numpy as np

from macrb.harness import (
    DEFAULT_GRIDS,
    SweepSpec,
    render_summary,
    run_sweep,
    summarize,
    write_csv,
)
from macrb.model import SystemConfig

SWEEPS = (
    ("power", "power_dbm", ("full", "fpa")),
    ("sinr", "sinr_db", ("full", "fpa")),
    ("region", "region_wavelengths", ("full", "bs")),
)


def thin(grid, n_points: int):
    if n_points >= len(grid):
        return grid
    idx = np.linspace(0, len(grid) - 1, n_points).round().astype(int)
    return tuple(grid[i] for i in sorted(set(idx.tolist())))


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out-dir", default="results",
                        help="directory for the CSVs (default: %(default)s)")
    parser.add_argument("--seeds", type=int, default=20)
    parser.add_argument("--points", type=int, default=9,
                        help="grid points per sweep (default: %(default)s)")
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--only", choices=[name for name, _, _ in SWEEPS],
                        help="run a single sweep instead of all three")
    args = parser.parse_args()

    out_dir = pathlib.Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = SystemConfig()

    for name, variable, modes in SWEEPS:
        if args.only and name != args.only:
            continue
        spec = SweepSpec(variable=variable,
                         grid=thin(DEFAULT_GRIDS[variable], args.points),
                         modes=modes, n_seeds=args.seeds, base_config=base)
        tic = time.perf_counter()
        rows = run_sweep(spec, parallelism=args.jobs)
        wall = time.perf_counter() - tic
        path = out_dir / f"{name}_sweep.csv"
        write_csv(rows, path)
        print(f"== {name}: {variable} over {spec.grid} "
              f"({args.seeds} seeds, {wall / 60:.1f} min)")
        print(render_summary(summarize(rows)))
        print(f"{len(rows)} rows -> {path}\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
