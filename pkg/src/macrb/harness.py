"""Seeded Monte-Carlo sweeps: config ingestion, trial execution, CSV, summaries.

A sweep runs the alternating optimizer over a grid of one scenario variable
(transmit power in dBm, SINR target in dB, or receive-segment length in
wavelengths), for a set of modes and seeds, and serializes one row per trial.
Geometry draws use common random numbers: the k-th seed index maps to the
same channel realization at every grid value and mode, so per-seed curves
and mode comparisons are paired rather than independently noisy.  The CSV is
the determinism contract; wall-clock timing is diagnostic only and is zeroed
on write so reruns are byte-identical.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .conic import QpProblem, SdpProblem, lmi_group, solve_qp, solve_sdp
from .crb import SteeringContext, crb_expanded, crb_fd_oracle, crb_general
from .driver import AOMode, ConsistencyError, evaluate_final, run_alternating_optimization
from .model import (
    AntennaLayout,
    ConfigError,
    SystemConfig,
    build_transmit_array,
    channel_vector,
    draw_random_geometry,
    sinr,
)
from .subproblems import (
    SubproblemError,
    assemble_geometry_objective,
    geometry_surrogate,
    geometry_objective,
    solve_beamforming_sdr,
    user_surrogate,
)

CSV_HEADER = "sweep_value,mode,seed,crb,crb_db,outer_iters,feasible,wall_ms"

SWEEP_VARIABLES = ("power_dbm", "sinr_db", "region_wavelengths")

# nine-point desk-scale grids; acceptance-style runs pass their own
DEFAULT_GRIDS = {
    "power_dbm": tuple(20.0 + 2.5 * i for i in range(9)),
    "sinr_db": tuple(5.0 + 1.25 * i for i in range(9)),
    "region_wavelengths": tuple(2.0 + 0.75 * i for i in range(9)),
}
DEFAULT_N_SEEDS = 20
ROW_AUDIT_FRACTION = 0.05


def stable_seed(*parts) -> int:
    """63-bit seed from a cross-platform digest of the stringified parts."""
    key = "|".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big") >> 1


@dataclasses.dataclass(frozen=True)
class SweepSpec:
    """One sweep: a scenario variable, its grid, the modes, and the seeds."""

    variable: str
    grid: tuple
    modes: tuple
    n_seeds: int
    base_config: SystemConfig

    def __post_init__(self):
        problems = []
        if self.variable not in SWEEP_VARIABLES:
            problems.append(f"sweep.variable must be one of {SWEEP_VARIABLES}, "
                            f"got {self.variable!r}")
        grid = tuple(float(g) for g in self.grid)
        object.__setattr__(self, "grid", grid)
        if not grid:
            problems.append("sweep.grid must be nonempty")
        elif any(b <= a for a, b in zip(grid, grid[1:])):
            problems.append(f"sweep.grid must be strictly increasing, got {grid}")
        modes = tuple(m if isinstance(m, AOMode) else AOMode(m)
                      for m in self.modes)
        object.__setattr__(self, "modes", modes)
        if not modes:
            problems.append("sweep.modes must be nonempty")
        if not (isinstance(self.n_seeds, int) and self.n_seeds >= 1):
            problems.append(f"sweep.n_seeds must be a positive integer, "
                            f"got {self.n_seeds!r}")
        if problems:
            raise ConfigError(problems)


@dataclasses.dataclass(frozen=True)
class TrialRow:
    """One trial outcome; timing is informational and excluded from equality."""

    sweep_value: float
    mode: str
    seed: int
    crb: float
    crb_db: float
    outer_iters: int
    feasible: bool
    wall_ms: float = dataclasses.field(compare=False)


def instantiate_config(base: SystemConfig, variable: str, value: float) -> SystemConfig:
    """Apply one sweep-grid value to its single config field."""
    if variable == "power_dbm":
        return dataclasses.replace(base, power_budget=10.0 ** ((value - 30.0) / 10.0))
    if variable == "sinr_db":
        return dataclasses.replace(base, sinr_threshold=10.0 ** (value / 10.0))
    if variable == "region_wavelengths":
        return dataclasses.replace(base, d_max=value * base.wavelength)
    raise ConfigError([f"unknown sweep variable {variable!r}"])


# configuration ingestion


def _coerce_sweep(raw: dict, base: SystemConfig, problems: list):
    known = {"variable", "grid", "modes", "n_seeds"}
    for key in sorted(set(raw) - known):
        problems.append(f"sweep.{key}: unknown field")
    variable = raw.get("variable")
    if variable is None:
        problems.append("sweep.variable: required when a sweep block is given")
        return None
    grid = raw.get("grid", DEFAULT_GRIDS.get(variable, ()))
    modes = raw.get("modes", [m.value for m in AOMode])
    n_seeds = raw.get("n_seeds", DEFAULT_N_SEEDS)
    try:
        return SweepSpec(variable=variable, grid=tuple(grid), modes=tuple(modes),
                         n_seeds=n_seeds, base_config=base)
    except (ConfigError, ValueError) as err:
        problems.extend(getattr(err, "problems", [f"sweep: {err}"]))
        return None


def load_config(path):
    """Parse a JSON scenario file into a config and an optional sweep spec.

    Unknown keys, type errors, and constraint violations are gathered and
    reported together; an empty document yields the full default scenario.
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(
            [f"{path}: JSON parse error at line {err.lineno}, "
             f"column {err.colno}: {err.msg}"]) from err
    if not isinstance(data, dict):
        raise ConfigError([f"{path}: top level must be a JSON object"])

    field_names = {f.name for f in dataclasses.fields(SystemConfig)}
    problems = []
    kwargs = {}
    for key, value in data.items():
        if key == "sweep":
            continue
        if key not in field_names:
            problems.append(f"{key}: unknown field")
        else:
            kwargs[key] = tuple(value) if key == "user_dist_range" else value
    config = None
    if not problems:
        try:
            config = SystemConfig(**kwargs)
        except ConfigError as err:
            problems.extend(err.problems)
    if problems:
        raise ConfigError(problems)

    sweep = None
    if "sweep" in data:
        if not isinstance(data["sweep"], dict):
            raise ConfigError(["sweep: must be a JSON object"])
        sweep_problems = []
        sweep = _coerce_sweep(data["sweep"], config, sweep_problems)
        if sweep_problems:
            raise ConfigError(sweep_problems)
    return config, sweep


# trial execution


def _run_trial(config: SystemConfig, mode_value: str, geometry_seed: int,
               want_snapshot: bool):
    """Execute one seeded trial; solver failures become an infeasible row."""
    mode = AOMode(mode_value)
    geometry, _ = draw_random_geometry(config,
                                       np.random.default_rng(geometry_seed))
    tic = time.perf_counter()
    try:
        trace = run_alternating_optimization(config, geometry, mode)
        summary = evaluate_final(trace, config, geometry)
    except (SubproblemError, np.linalg.LinAlgError, FloatingPointError):
        wall = (time.perf_counter() - tic) * 1e3
        return (math.inf, math.inf, 0, False, wall), None
    wall = (time.perf_counter() - tic) * 1e3
    crb = summary.crb
    outcome = (crb, 10.0 * math.log10(crb), summary.outer_iterations, True, wall)
    snapshot = None
    if want_snapshot:
        last = trace.records[-1]
        snapshot = (last.d_r, last.user_positions, trace.final_beams.columns)
    return outcome, snapshot


def _pool_task(payload):
    return payload[0], _run_trial(*payload[1:])


def _audit_row(config: SystemConfig, row: TrialRow, snapshot):
    """Recompute a row's bound from its snapshot through the expanded route."""
    d_r, user_positions, columns = snapshot
    layout = AntennaLayout(build_transmit_array(config.n_tx, config.wavelength),
                           d_r, user_positions)
    ctx = SteeringContext.from_scenario(config, layout)
    again = crb_expanded(columns @ columns.conj().T, ctx)
    if abs(again - row.crb) > 1e-6 * max(abs(row.crb), 1e-300):
        raise ConsistencyError(
            f"row (value={row.sweep_value!r}, mode={row.mode}, seed={row.seed}) "
            f"recorded crb {row.crb!r} but its snapshot re-derives {again!r}")


def run_sweep(spec: SweepSpec, parallelism: int = 1):
    """Run every (grid value, mode, seed) trial and return ordered rows.

    Rows come back sorted by (grid position, mode position, seed index)
    regardless of worker scheduling.  A deterministic 5% sample of rows is
    re-derived from solution snapshots through the second bound route; any
    mismatch raises ConsistencyError.
    """
    configs = [instantiate_config(spec.base_config, spec.variable, value)
               for value in spec.grid]
    master = spec.base_config.rng_seed
    tasks = []
    for gi, value in enumerate(spec.grid):
        for mode in spec.modes:
            for si in range(spec.n_seeds):
                geometry_seed = stable_seed(master, "trial-geometry", si)
                tasks.append((len(tasks), configs[gi], mode.value,
                              geometry_seed, False))

    n_audited = max(1, math.ceil(ROW_AUDIT_FRACTION * len(tasks)))
    audit_rng = np.random.default_rng(stable_seed(master, "row-audit"))
    audited = set(audit_rng.choice(len(tasks), size=n_audited, replace=False)
                  .tolist())
    tasks = [(idx, cfg, mv, gs, idx in audited)
             for idx, cfg, mv, gs, _ in tasks]

    results = {}
    if parallelism > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            for idx, result in pool.map(_pool_task, tasks, chunksize=1):
                results[idx] = result
    else:
        for payload in tasks:
            results[payload[0]] = _run_trial(*payload[1:])

    rows = []
    for gi, value in enumerate(spec.grid):
        for mi, mode in enumerate(spec.modes):
            for si in range(spec.n_seeds):
                idx = (gi * len(spec.modes) + mi) * spec.n_seeds + si
                (crb, crb_db, iters, feasible, wall), snapshot = results[idx]
                row = TrialRow(sweep_value=float(value), mode=mode.value,
                               seed=si, crb=crb, crb_db=crb_db,
                               outer_iters=iters, feasible=feasible,
                               wall_ms=wall)
                if snapshot is not None:
                    _audit_row(configs[gi], row, snapshot)
                rows.append(row)
    return rows


# persistence and summaries


def write_csv(rows, path):
    """Serialize rows with round-trip float formatting and zeroed timing.

    Timing varies run to run, so the wall_ms column is written as 0.0 to keep
    identical sweeps byte-identical; measured times stay on the row objects.
    """
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(",".join((
            repr(float(r.sweep_value)),
            r.mode,
            str(r.seed),
            repr(float(r.crb)),
            repr(float(r.crb_db)),
            str(r.outer_iters),
            "true" if r.feasible else "false",
            repr(0.0),
        )))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8",
                          newline="\n")


@dataclasses.dataclass(frozen=True)
class SummaryCell:
    sweep_value: float
    mode: str
    n_feasible: int
    n_infeasible: int
    mean_db: float
    median_db: float
    ci_low: float
    ci_high: float


def summarize(rows, resamples: int = 1000):
    """Per-(grid value, mode) stats of crb_db with a seeded bootstrap CI.

    Infeasible rows are excluded from the statistics and counted; a cell with
    no feasible rows keeps NaN statistics.  The confidence interval is a 95%
    percentile bootstrap of the mean with a deterministic per-cell seed.
    """
    if not rows:
        raise ValueError("summarize needs at least one row")
    order = []
    groups = {}
    for row in rows:
        key = (row.sweep_value, row.mode)
        if key not in groups:
            order.append(key)
            groups[key] = []
        groups[key].append(row)
    cells = []
    for value, mode in order:
        vals = np.array([r.crb_db for r in groups[(value, mode)] if r.feasible])
        n_inf = sum(1 for r in groups[(value, mode)] if not r.feasible)
        if vals.size == 0:
            cells.append(SummaryCell(value, mode, 0, n_inf,
                                     math.nan, math.nan, math.nan, math.nan))
            continue
        rng = np.random.default_rng(stable_seed("bootstrap", value, mode))
        draws = rng.integers(0, vals.size, size=(resamples, vals.size))
        means = vals[draws].mean(axis=1)
        cells.append(SummaryCell(
            sweep_value=value, mode=mode, n_feasible=int(vals.size),
            n_infeasible=n_inf, mean_db=float(vals.mean()),
            median_db=float(np.median(vals)),
            ci_low=float(np.percentile(means, 2.5)),
            ci_high=float(np.percentile(means, 97.5))))
    return cells


def render_summary(cells) -> str:
    """Aligned text table of summary cells."""
    header = ("value", "mode", "n", "mean dB", "median dB", "95% CI", "infeasible")
    body = []
    for c in cells:
        if c.n_feasible == 0:
            stats = ("-", "-", "all infeasible")
        else:
            stats = (f"{c.mean_db:.3f}", f"{c.median_db:.3f}",
                     f"[{c.ci_low:.3f}, {c.ci_high:.3f}]")
        body.append((f"{c.sweep_value:g}", c.mode, str(c.n_feasible),
                     *stats, str(c.n_infeasible)))
    widths = [max(len(header[i]), *(len(row[i]) for row in body)) if body
              else len(header[i]) for i in range(len(header))]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines = [fmt.format(*header), fmt.format(*("-" * w for w in widths))]
    lines.extend(fmt.format(*row) for row in body)
    return "\n".join(lines)


# self checks


def _check_bound_routes():
    worst = 0.0
    for i, n in enumerate((2, 4, 8, 10)):
        for trial in range(5):
            rng = np.random.default_rng(100 * i + trial)
            cfg = SystemConfig(n_tx=n, n_rx=n, n_users=1, n_tx_paths=2,
                               n_rx_paths=2, sinr_threshold=1e-9)
            layout = AntennaLayout(build_transmit_array(n, cfg.wavelength),
                                   np.linspace(0.0, cfg.d_max, n),
                                   np.zeros((1, 2)))
            ctx = SteeringContext.from_scenario(cfg, layout)
            m = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
            r_x = m @ m.conj().T
            r_x *= cfg.power_budget / np.trace(r_x).real
            a, b = crb_general(r_x, ctx), crb_expanded(r_x, ctx)
            worst = max(worst, abs(a - b) / abs(a))
    return worst <= 1e-8, f"max relative route gap {worst:.3e}"


def _check_bound_derivative():
    worst = 0.0
    for trial in range(5):
        rng = np.random.default_rng(50 + trial)
        cfg = SystemConfig(n_tx=4, n_rx=4, n_users=1, n_tx_paths=2,
                           n_rx_paths=2, sinr_threshold=1e-9)
        layout = AntennaLayout(build_transmit_array(4, cfg.wavelength),
                               np.linspace(0.0, cfg.d_max, 4), np.zeros((1, 2)))
        ctx = SteeringContext.from_scenario(cfg, layout)
        m = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        r_x = m @ m.conj().T
        r_x *= cfg.power_budget / np.trace(r_x).real
        fd = crb_fd_oracle(r_x, ctx, 1e-6)
        worst = max(worst, abs(fd - crb_general(r_x, ctx)) / fd)
    return worst <= 1e-5, f"max analytic-vs-FD gap {worst:.3e}"


def _check_conic_sdp():
    # minimize x subject to [[x, 1], [1, x]] psd; optimum x = 1
    problem = SdpProblem(
        c=np.array([1.0]),
        groups=(lmi_group([0], np.array([[0.0, 1.0], [1.0, 0.0]]),
                          np.eye(2)[None, :, :]),),
    )
    report = solve_sdp(problem)
    gap = abs(report.obj - 1.0)
    return report.ok and gap <= 1e-6, f"analytic LMI objective gap {gap:.3e}"


def _check_conic_qp():
    # minimize x^2/2 - x on [-2, 0.5]; clipped optimum x = 0.5
    problem = QpProblem(np.eye(1), np.array([-1.0]),
                        np.array([[1.0], [-1.0]]), np.array([0.5, 2.0]))
    report = solve_qp(problem)
    gap = abs(report.x[0] - 0.5)
    return report.ok and gap <= 1e-6, f"box QP argmin gap {gap:.3e}"


def _check_sdr_recovery():
    cfg = SystemConfig(n_tx=4, n_rx=4, n_users=2, n_tx_paths=4, n_rx_paths=4,
                       sinr_threshold=10.0)
    geometry, _ = draw_random_geometry(cfg, np.random.default_rng(1))
    d_t = build_transmit_array(cfg.n_tx, cfg.wavelength)
    layout = AntennaLayout(d_t, np.linspace(0.0, cfg.d_max, cfg.n_rx),
                           np.zeros((cfg.n_users, 2)))
    ctx = SteeringContext.from_scenario(cfg, layout)
    channels = [channel_vector(geometry[k], np.zeros(2), d_t, cfg.wavelength)
                for k in range(cfg.n_users)]
    out = solve_beamforming_sdr(ctx, channels, cfg)
    floor = cfg.sinr_threshold * (1.0 - 1e-6)
    sinr_ok = all(sinr(k, out.recovered.columns, channels, cfg.noise_comm)
                  >= floor for k in range(cfg.n_users))
    return (sinr_ok and out.recovery_gap <= 1e-4,
            f"recovery gap {out.recovery_gap:.3e}")


def _check_surrogate_centers():
    cfg = SystemConfig(n_tx=4, n_rx=4, n_users=2, n_tx_paths=4, n_rx_paths=4)
    rng = np.random.default_rng(3)
    d_t = build_transmit_array(cfg.n_tx, cfg.wavelength)
    d_r = np.linspace(0.0, cfg.d_max, cfg.n_rx)
    layout = AntennaLayout(d_t, d_r, np.zeros((cfg.n_users, 2)))
    ctx = SteeringContext.from_scenario(cfg, layout)
    m = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    r_x = m @ m.conj().T
    r_x *= cfg.power_budget / np.trace(r_x).real
    data = assemble_geometry_objective(d_r, ctx, r_x)
    gap_geo = abs(geometry_surrogate(data, d_r) - geometry_objective(data, d_r))
    gap_geo /= max(abs(geometry_objective(data, d_r)), 1e-300)

    geometry, _ = draw_random_geometry(cfg, rng)
    beams = np.column_stack([
        channel_vector(geometry[k], np.zeros(2), d_t, cfg.wavelength)
        for k in range(cfg.n_users)])
    beams *= math.sqrt(cfg.power_budget / cfg.n_users) / np.linalg.norm(
        beams, axis=0)
    center = np.array([0.01, -0.02])
    sur = user_surrogate(center, 0, beams, geometry[0], d_t, cfg.wavelength)
    gap_user = abs(sur.signal_lower(center) - sur.own_value)
    gap_user /= max(abs(sur.own_value), 1e-300)
    ok = gap_geo <= 1e-10 and gap_user <= 1e-10
    return ok, f"center gaps {gap_geo:.2e} (geometry), {gap_user:.2e} (user)"


def run_self_checks():
    """Fast invariant battery for the CLI; returns (name, ok, detail) rows."""
    checks = (
        ("bound-routes", _check_bound_routes),
        ("bound-derivative", _check_bound_derivative),
        ("conic-sdp", _check_conic_sdp),
        ("conic-qp", _check_conic_qp),
        ("sdr-recovery", _check_sdr_recovery),
        ("surrogate-centers", _check_surrogate_centers),
    )
    results = []
    for name, fn in checks:
        try:
            ok, detail = fn()
        except Exception as err:  # a crash is a failed check, not a crash
            ok, detail = False, f"raised {type(err).__name__}: {err}"
        results.append((name, bool(ok), detail))
    return results
