"""Command-line front end: sweeps, self checks, single-point bound evaluation.

Exit codes: 0 on success, 1 on a configuration problem, 2 on an internal
consistency failure (bound routes disagreeing, row audits failing, or a
failed self check).
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from .crb import SteeringContext, crb_expanded, crb_general, fisher_bracket
from .driver import AOMode, ConsistencyError, init_state
from .harness import (
    DEFAULT_GRIDS,
    DEFAULT_N_SEEDS,
    SweepSpec,
    load_config,
    render_summary,
    run_self_checks,
    run_sweep,
    stable_seed,
    summarize,
    write_csv,
)
from .model import ConfigError, SystemConfig, draw_random_geometry, sample_covariance

_SWEEP_ALIASES = {
    "power": "power_dbm",
    "sinr": "sinr_db",
    "region": "region_wavelengths",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="macrb",
        description="Joint beamforming and movable-antenna placement sweeps "
                    "minimizing the direction-estimation error bound.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a seeded sweep and write a CSV")
    run.add_argument("--config", help="JSON scenario file; omit for defaults")
    run.add_argument("--sweep", choices=sorted(_SWEEP_ALIASES),
                     help="swept variable (overrides the config sweep block)")
    run.add_argument("--modes",
                     default=",".join(m.value for m in AOMode),
                     help="comma-separated optimizer modes (default: all)")
    run.add_argument("--seeds", type=int, default=DEFAULT_N_SEEDS,
                     help="seeds per grid point (default: %(default)s)")
    run.add_argument("--out", default="sweep.csv",
                     help="output CSV path (default: %(default)s)")
    run.add_argument("--jobs", type=int, default=1,
                     help="worker processes (default: %(default)s)")

    sub.add_parser("check", help="run the invariant and oracle self checks")

    crb = sub.add_parser("crb-eval",
                         help="evaluate the bound once for debugging")
    crb.add_argument("--config", help="JSON scenario file; omit for defaults")
    return parser


def _load(path) -> tuple[SystemConfig, SweepSpec | None]:
    if path is None:
        return SystemConfig(), None
    return load_config(path)


def _cmd_run(args) -> int:
    config, sweep = _load(args.config)
    if args.sweep is not None:
        variable = _SWEEP_ALIASES[args.sweep]
        sweep = SweepSpec(variable=variable,
                          grid=DEFAULT_GRIDS[variable],
                          modes=tuple(m.strip() for m in args.modes.split(",")),
                          n_seeds=args.seeds, base_config=config)
    if sweep is None:
        raise ConfigError(["no sweep requested: pass --sweep or put a "
                           "\"sweep\" block in the config file"])
    rows = run_sweep(sweep, parallelism=args.jobs)
    write_csv(rows, args.out)
    print(render_summary(summarize(rows)))
    print(f"\n{len(rows)} rows -> {args.out}")
    return 0


def _cmd_check(_args) -> int:
    results = run_self_checks()
    for name, ok, detail in results:
        print(f"{'ok  ' if ok else 'FAIL'} {name:20s} {detail}")
    return 0 if all(ok for _, ok, _ in results) else 2


def _cmd_crb_eval(args) -> int:
    config, _ = _load(args.config)
    rng = np.random.default_rng(stable_seed(config.rng_seed,
                                            "trial-geometry", 0))
    geometry, _gain = draw_random_geometry(config, rng)
    layout = init_state(config, geometry, AOMode.FULL)
    ctx = SteeringContext.from_scenario(config, layout)
    # uniform power split across transmit antennas, no beam shaping
    r_x = (config.power_budget / config.n_tx) * np.eye(config.n_tx)
    general = crb_general(r_x, ctx)
    expanded = crb_expanded(r_x, ctx)
    print(f"receive positions (m): {np.array2string(layout.d_r, precision=4)}")
    print(f"fisher bracket:        {fisher_bracket(r_x, ctx):.6e}")
    print(f"bound, general route:  {general:.6e} rad^2 "
          f"({10 * math.log10(general):.2f} dB)")
    print(f"bound, expanded route: {expanded:.6e} rad^2")
    rel = abs(general - expanded) / max(abs(general), 1e-300)
    if rel > 1e-8:
        raise ConsistencyError(
            f"bound routes disagree by {rel:.3e} relative")
    print(f"route agreement:       {rel:.3e} relative")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "check": _cmd_check,
               "crb-eval": _cmd_crb_eval}[args.command]
    try:
        return handler(args)
    except ConfigError as err:
        for problem in err.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 1
    except ConsistencyError as err:
        print(f"consistency error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
