"""Alternating optimization over beamformers, receive array, and user antennas.

One outer iteration updates the blocks in a fixed order: transmit covariance
(relaxation + rank-one recovery), then the receive-antenna line, then each
user's antenna position.  Every block update is accepted only if the bound
does not increase, so the recorded objective trace is non-increasing by
construction rather than by hope.  Baseline modes freeze one or both antenna
blocks to isolate where the gains come from.
"""

from __future__ import annotations

from dataclasses import dataclass
import enum
import math
import time

import numpy as np

from .crb import SteeringContext, crb_expanded, crb_general, fisher_bracket
from .model import (
    AntennaLayout,
    BeamformingMatrix,
    SystemConfig,
    build_transmit_array,
    channel_vector,
    sample_covariance,
    sinr,
)
from .subproblems import (
    SinrInfeasibleError,
    SubproblemError,
    solve_beamforming_sdr,
    solve_bs_positions,
    solve_user_position,
)

# constraint audits allow interior-point slop beyond the geometric tolerance
_AUDIT_TOL = 1e-7
_SINR_SLACK = 1e-6      # recovered beams certify gamma * (1 - slack)
_ACCEPT_SLACK = 1e-9    # block update may not raise the bound beyond this
_SETTLE_TOL = 1e-4      # user moves below this (meters) count as settled


class ConsistencyError(RuntimeError):
    """A trace failed its independent recomputation check."""


class AOMode(enum.Enum):
    """Which antenna blocks the alternating loop is allowed to move."""

    FULL = "full"            # receive line and user antennas both movable
    FPA = "fpa"              # both frozen: half-wavelength grid, region centers
    BS_ONLY = "bs"           # only the receive line moves
    USER_ONLY = "user"       # only the user antennas move

    @property
    def moves_receive_array(self) -> bool:
        return self in (AOMode.FULL, AOMode.BS_ONLY)

    @property
    def moves_user_antennas(self) -> bool:
        return self in (AOMode.FULL, AOMode.USER_ONLY)


@dataclass(frozen=True, eq=False)
class IterationRecord:
    """State snapshot at the end of one outer iteration."""

    crb: float
    t_value: float              # Fisher bracket at the recorded state
    d_r: np.ndarray
    user_positions: np.ndarray  # (K, 2)
    sinr_values: np.ndarray     # (K,) linear
    statuses: dict
    audit: dict                 # constraint booleans: power, sinr, spacing, box
    wall_ms: float
    converged: bool


@dataclass(frozen=True, eq=False)
class AOTrace:
    mode: AOMode
    records: tuple
    final_beams: BeamformingMatrix

    @property
    def converged(self) -> bool:
        return bool(self.records) and self.records[-1].converged

    @property
    def outer_iterations(self) -> int:
        return len(self.records)


@dataclass(frozen=True, eq=False)
class TrialSummary:
    """Independently recomputed endpoint of a trace."""

    crb: float
    t_value: float
    sinr_values: tuple
    outer_iterations: int
    converged: bool


def _uniform_fill(config: SystemConfig) -> np.ndarray:
    # nominal gap, relaxed when n_rx antennas would overflow the segment
    if config.n_rx == 1:
        return np.zeros(1)
    spacing = max(config.d_min, config.d_max / (config.n_rx - 1))
    if spacing * (config.n_rx - 1) > config.d_max:
        return np.linspace(0.0, config.d_max, config.n_rx)
    return spacing * np.arange(config.n_rx)


def _half_wave_grid(config: SystemConfig) -> np.ndarray:
    return (config.wavelength / 2.0) * np.arange(config.n_rx)


def init_state(config: SystemConfig, geometry, mode: AOMode) -> AntennaLayout:
    """Deterministic starting layout; beamformers come from the first solve.

    Movable receive lines start uniformly spread over the segment; frozen
    baselines use the conventional half-wavelength grid even when it exceeds
    the movable segment.  User antennas start at their region centers.
    """
    if len(geometry) != config.n_users:
        raise ValueError(
            f"geometry carries {len(geometry)} users, config says {config.n_users}")
    d_t = build_transmit_array(config.n_tx, config.wavelength)
    if mode.moves_receive_array:
        d_r = _uniform_fill(config)
    else:
        d_r = _half_wave_grid(config)
    layout = AntennaLayout(d_t, d_r, np.zeros((config.n_users, 2)))
    layout.validate(config, enforce_region=mode.moves_receive_array)
    return layout


def _audit(config: SystemConfig, mode: AOMode, beams: BeamformingMatrix,
           d_r, user_positions, sinr_values) -> dict:
    gaps = np.diff(d_r) if len(d_r) > 1 else np.array([np.inf])
    if mode.moves_receive_array:
        spacing_ok = (d_r[0] >= -_AUDIT_TOL
                      and d_r[-1] <= config.d_max + _AUDIT_TOL
                      and gaps.min() >= config.effective_min_spacing - _AUDIT_TOL)
    else:
        spacing_ok = gaps.min() >= config.wavelength / 2.0 - _AUDIT_TOL
    return {
        "power": beams.frobenius_power <= config.power_budget * (1.0 + 1e-6),
        "sinr": bool(np.all(np.asarray(sinr_values)
                            >= config.sinr_threshold * (1.0 - _SINR_SLACK))),
        "spacing": bool(spacing_ok),
        "box": bool(np.all(np.abs(user_positions)
                           <= config.user_region_half_side + _AUDIT_TOL)),
    }


def run_alternating_optimization(config: SystemConfig, geometry, mode: AOMode,
                   eps_outer: float = 1e-3, max_outer: int = 150) -> AOTrace:
    """Alternate covariance, receive-line, and user-position updates.

    Convergence needs two things at once: the fractional decrease of the
    bound falls below eps_outer, and the user block has settled (no antenna
    displaced beyond the settle tolerance).  User moves never change the
    bound directly, they only relax SINR constraints whose payoff arrives
    through the next covariance solve, so an objective stall alone is not
    evidence that the slow user creep has finished.  The iteration budget
    caps the loop either way, and each covariance solve warm-starts from the
    previous one.

    An infeasible SINR target surfaces on the first covariance solve and
    aborts the trial; failures after the first iteration roll the affected
    block back and the loop continues.
    """
    layout = init_state(config, geometry, mode)
    d_t = layout.d_t
    base_ctx = SteeringContext.from_scenario(config, layout)
    d_r = layout.d_r.copy()
    users = layout.user_positions.copy()
    channels = [channel_vector(geometry[k], users[k], d_t, config.wavelength)
                for k in range(config.n_users)]

    beams = None
    r_x = None
    crb = math.inf
    prev_crb = math.inf
    warm_point = None
    records = []
    for _ in range(max_outer):
        tic = time.perf_counter()
        statuses = {}
        ctx = base_ctx.with_receive_positions(d_r)

        # block 1: transmit covariance at fixed geometry
        try:
            outcome = solve_beamforming_sdr(ctx, channels, config,
                                            warm=warm_point)
            warm_point = outcome.solver_point
            new_beams = outcome.recovered
            new_rx = sample_covariance(new_beams.columns)
            new_crb = crb_general(new_rx, ctx)
            if beams is None or new_crb <= crb * (1.0 + _ACCEPT_SLACK):
                beams, r_x, crb = new_beams, new_rx, new_crb
                statuses["beamforming"] = "updated"
            else:
                statuses["beamforming"] = "rolled_back"
        except SubproblemError as err:
            if beams is None:
                raise    # nothing to fall back on; caller sees the diagnostic
            statuses["beamforming"] = f"rolled_back ({type(err).__name__})"

        # block 2: receive-antenna line at fixed covariance
        if mode.moves_receive_array:
            try:
                d_new, _ = solve_bs_positions(r_x, ctx, d_r, config)
                new_crb = crb_general(r_x, base_ctx.with_receive_positions(d_new))
                if new_crb <= crb * (1.0 + _ACCEPT_SLACK):
                    d_r, crb = d_new, new_crb
                    ctx = base_ctx.with_receive_positions(d_r)
                    statuses["receive_array"] = "updated"
                else:
                    statuses["receive_array"] = "rolled_back"
            except SubproblemError as err:
                statuses["receive_array"] = f"rolled_back ({type(err).__name__})"
        else:
            statuses["receive_array"] = "fixed"

        # block 3: user antennas; the bound is untouched, only SINR slack moves
        if mode.moves_user_antennas:
            moved = 0
            for k in range(config.n_users):
                result = solve_user_position(k, beams.columns, geometry[k],
                                             users[k], config, d_t)
                if not result.feasible:
                    continue
                shift = float(np.linalg.norm(result.position - users[k]))
                if shift > 0.0:
                    users[k] = result.position
                    channels[k] = channel_vector(geometry[k], users[k], d_t,
                                                 config.wavelength)
                if shift > _SETTLE_TOL:
                    moved += 1
            statuses["user_antennas"] = f"moved {moved}/{config.n_users}"
            users_settled = moved == 0
        else:
            statuses["user_antennas"] = "fixed"
            users_settled = True

        sinr_values = np.array([sinr(k, beams.columns, channels,
                                     config.noise_comm)
                                for k in range(config.n_users)])
        frac = (prev_crb - crb) / prev_crb if math.isfinite(prev_crb) else math.inf
        done = frac < eps_outer and users_settled
        records.append(IterationRecord(
            crb=crb,
            t_value=fisher_bracket(r_x, ctx),
            d_r=d_r.copy(),
            user_positions=users.copy(),
            sinr_values=sinr_values,
            statuses=statuses,
            audit=_audit(config, mode, beams, d_r, users, sinr_values),
            wall_ms=(time.perf_counter() - tic) * 1e3,
            converged=done,
        ))
        if done:
            break
        prev_crb = crb
    return AOTrace(mode=mode, records=tuple(records), final_beams=beams)


def evaluate_final(trace: AOTrace, config: SystemConfig, geometry) -> TrialSummary:
    """Recompute the endpoint from scratch and certify the last record.

    The bound is evaluated through both independent routes and compared to
    the recorded value; user SINRs are rebuilt from the recorded positions.
    Any relative mismatch beyond 1e-6 raises ConsistencyError.
    """
    if not trace.records:
        raise ConsistencyError("empty trace")
    last = trace.records[-1]
    d_t = build_transmit_array(config.n_tx, config.wavelength)
    ctx = SteeringContext.from_scenario(
        config, AntennaLayout(d_t, last.d_r, last.user_positions))
    r_x = sample_covariance(trace.final_beams.columns)
    via_general = crb_general(r_x, ctx)
    via_expanded = crb_expanded(r_x, ctx)
    scale = max(abs(via_general), 1e-300)
    if abs(via_general - via_expanded) > 1e-6 * scale:
        raise ConsistencyError(
            f"bound routes disagree: {via_general!r} vs {via_expanded!r}")
    if abs(via_general - last.crb) > 1e-6 * scale:
        raise ConsistencyError(
            f"recorded bound {last.crb!r} is not reproducible ({via_general!r})")
    channels = [channel_vector(geometry[k], last.user_positions[k], d_t,
                               config.wavelength)
                for k in range(config.n_users)]
    sinr_values = [sinr(k, trace.final_beams.columns, channels,
                        config.noise_comm) for k in range(config.n_users)]
    for k, (got, recorded) in enumerate(zip(sinr_values, last.sinr_values)):
        if abs(got - recorded) > 1e-6 * max(abs(recorded), 1e-300):
            raise ConsistencyError(
                f"recorded SINR for user {k} is not reproducible")
    return TrialSummary(
        crb=via_general,
        t_value=fisher_bracket(r_x, ctx),
        sinr_values=tuple(sinr_values),
        outer_iterations=trace.outer_iterations,
        converged=trace.converged,
    )
