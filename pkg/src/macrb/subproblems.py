"""The three alternating-optimization subproblems.

Given fixed antenna geometry, the transmit covariances are found by a
semidefinite relaxation: maximize an auxiliary floor t under a Schur-test
LMI tying t to the Fisher bracket, per-user SINR rows, and the power budget,
then project each covariance block back to a rank-one beamformer.  The
receive-array geometry step rewrites the bracket as an explicit quadratic in
the position vector and ascends a concave minorant (the convex norm term is
linearized at the current iterate).  Each user's antenna moves inside its
box by maximizing an SINR slack built from curvature-bounded second-order
surrogates of the signal and interference powers.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field
import math

import numpy as np

from .conic import (
    INFEASIBLE,
    QpProblem,
    SdpProblem,
    lmi_group,
    max_concave_quadratic_2d,
    nonneg_group,
    solve_qp,
    solve_sdp,
)
from .conic.complexify import (
    embedding_basis,
    herm_functional,
    n_params,
    params_to_matrix,
)
from .crb import SteeringContext, fisher_bracket, steering_vector
from .model import (
    BeamformingMatrix,
    SystemConfig,
    UserChannelGeometry,
    sample_covariance,
    transmit_field_response_matrix,
)

_TINY = 1e-300


class SubproblemError(RuntimeError):
    """A subproblem solver ended without a usable solution."""


class SinrInfeasibleError(SubproblemError):
    """No beamformer meets every SINR target under the power budget.

    shortfalls[k] is the gap between the target and the interference-free
    upper bound P_T ||h_k||^2 / sigma^2; zero entries mean the user is not
    individually hopeless, the targets are only jointly unreachable.
    """

    def __init__(self, shortfalls):
        self.shortfalls = np.asarray(shortfalls, dtype=float)
        worst = float(self.shortfalls.max()) if self.shortfalls.size else 0.0
        super().__init__(
            f"SINR targets infeasible; worst single-user shortfall {worst:.3g}")


class DegenerateBlockError(SubproblemError):
    """A covariance block carries no power on its own user's channel."""


# transmit-covariance step


@dataclass(frozen=True, eq=False)
class SdrOutcome:
    """Relaxed covariance solution plus its rank-one projection.

    t_value is the maximized bracket floor in physical units; sdr_objective
    re-evaluates the bracket at the relaxed covariance (the two agree at the
    optimum because the Schur test is tight there); recovery_gap is the
    relative bracket drift caused by the rank-one projection.
    """

    covariance_blocks: tuple
    t_value: float
    recovered: BeamformingMatrix
    sdr_objective: float
    recovery_gap: float
    solver_point: tuple = dataclass_field(default=None, repr=False)


def _bracket_entry_functionals(ctx: SteeringContext):
    """Hermitian functionals of the four Schur-test entries per unit W.

    Normalized by the reflect gain and the squared phase slope so the LMI
    data sits near unit scale; the second row/column additionally carries a
    factor of the phase slope (a congruence by diag(1, kc), which preserves
    semidefiniteness and balances the entry magnitudes).
    """
    a = steering_vector(ctx.d_t, ctx.angle, ctx.wavelength)
    amat = np.outer(a, a.conj())
    dmat = ctx.d_t[:, None] * amat                 # diag(d_t) A
    sym = (dmat + dmat.conj().T) / 2.0             # functional of Re w
    skew = (dmat - dmat.conj().T) / 2j             # functional of Im w
    quad = ctx.d_t[:, None] * amat * ctx.d_t[None, :]
    s = float(np.sum(ctx.d_r))
    q = float(np.sum(ctx.d_r ** 2))
    n_r = ctx.d_r.shape[0]
    f11 = n_r * quad + q * amat - 2.0 * s * sym
    f12_re = -n_r * skew
    f12_im = s * amat - n_r * sym
    f22 = n_r * amat
    return f11, f12_re, f12_im, f22


def _compile_sdr(ctx: SteeringContext, channels, config: SystemConfig):
    n_t = config.n_tx
    k_users = len(channels)
    blk = n_params(n_t)
    n = k_users * blk + 1
    t_col = n - 1

    f11, f12_re, f12_im, f22 = _bracket_entry_functionals(ctx)
    c11 = herm_functional(f11)
    c12r = herm_functional(f12_re)
    c12i = herm_functional(f12_im)
    c22 = herm_functional(f22)
    coeffs = np.zeros((n, 4, 4))
    for k in range(k_users):
        sl = slice(k * blk, (k + 1) * blk)
        coeffs[sl, 0, 0] = coeffs[sl, 2, 2] = c11
        coeffs[sl, 1, 1] = coeffs[sl, 3, 3] = c22
        coeffs[sl, 0, 1] = coeffs[sl, 1, 0] = c12r
        coeffs[sl, 2, 3] = coeffs[sl, 3, 2] = c12r
        coeffs[sl, 1, 2] = coeffs[sl, 2, 1] = c12i
        coeffs[sl, 0, 3] = coeffs[sl, 3, 0] = -c12i
    coeffs[t_col, 0, 0] = coeffs[t_col, 2, 2] = -1.0
    groups = [lmi_group(np.arange(n), np.zeros((4, 4)), coeffs)]

    basis = embedding_basis(n_t)
    zero = np.zeros((2 * n_t, 2 * n_t))
    for k in range(k_users):
        groups.append(lmi_group(np.arange(k * blk, (k + 1) * blk), zero, basis))

    # SINR rows, scaled by the noise power: own-channel power must beat the
    # threshold times interference plus one noise unit
    gamma = config.sinr_threshold
    noise = config.noise_comm
    rows = np.zeros((k_users + 1, n))
    upper = np.empty(k_users + 1)
    for k in range(k_users):
        h = np.asarray(channels[k])
        ck = herm_functional(np.outer(h, h.conj())) / noise
        for q in range(k_users):
            sl = slice(q * blk, (q + 1) * blk)
            rows[k, sl] = -ck if q == k else gamma * ck
        upper[k] = -gamma
    for k in range(k_users):
        rows[k_users, k * blk:k * blk + n_t] = 1.0
    upper[k_users] = config.power_budget
    groups.append(nonneg_group(np.arange(n), rows, upper))

    c = np.zeros(n)
    c[t_col] = -1.0
    return SdpProblem(c=c, groups=groups), blk, t_col


def recover_rank_one(blocks, channels,
                     power_budget: float | None = None) -> BeamformingMatrix:
    """Project covariance blocks to beamformers w_k = W_k h_k / sqrt(h_k^H W_k h_k).

    The projection keeps each user's own-channel power exactly and can only
    shrink cross powers and the total power, so SINR feasibility survives.
    """
    cols = []
    for w_mat, h in zip(blocks, channels):
        h = np.asarray(h)
        own = float(np.real(h.conj() @ w_mat @ h))
        if own <= 0.0:
            raise DegenerateBlockError(
                "covariance block has no power on its own channel")
        cols.append((w_mat @ h) / math.sqrt(own))
    return BeamformingMatrix(np.column_stack(cols), power_budget)


def solve_beamforming_sdr(ctx: SteeringContext, channels,
                          config: SystemConfig, tol: float = 1e-8,
                          warm=None) -> SdrOutcome:
    """Covariance design maximizing the bracket floor under SINR and power.

    `warm` accepts the solver_point of a previous outcome whose scenario was
    close (the alternating loop's previous iteration); a warm attempt that
    does not finish cleanly is retried cold before giving up.
    """
    problem, blk, t_col = _compile_sdr(ctx, channels, config)
    report = solve_sdp(problem, tol=tol, warm=warm)
    if warm is not None and not report.ok and report.status != INFEASIBLE:
        report = solve_sdp(problem, tol=tol)
    if report.status == INFEASIBLE:
        bound = np.array([config.power_budget
                          * float(np.real(np.vdot(h, h))) / config.noise_comm
                          for h in channels])
        raise SinrInfeasibleError(np.maximum(0.0, config.sinr_threshold - bound))
    if not report.ok:
        raise SubproblemError(f"beamforming solve ended with status {report.status}")

    n_t = config.n_tx
    blocks = tuple(params_to_matrix(report.x[k * blk:(k + 1) * blk], n_t)
                   for k in range(len(channels)))
    unit = ctx.reflect_gain * ctx.wavenumber_cos ** 2
    t_value = float(report.x[t_col]) * unit
    total = np.sum(blocks, axis=0)
    sdr_objective = fisher_bracket(total, ctx)
    recovered = recover_rank_one(blocks, channels, config.power_budget)
    recovered_bracket = fisher_bracket(sample_covariance(recovered.columns), ctx)
    gap = abs(recovered_bracket - t_value) / max(abs(t_value), _TINY)
    return SdrOutcome(covariance_blocks=blocks, t_value=t_value,
                      recovered=recovered, sdr_objective=sdr_objective,
                      recovery_gap=gap,
                      solver_point=(report.x, report.y, report.z, report.s))


# receive-array geometry step


@dataclass(frozen=True, eq=False)
class GeometryObjectiveData:
    """Bracket rewritten as an explicit quadratic in the receive positions.

    bracket(d) = gain * [cross + quad d'd + coupling'd
                         - (d'Ed + f'd + ratio_const) / denom]

    e_mat is rank-one PSD (a scaled all-ones matrix).  The quad d'd term is
    the only convexity obstruction; lin_grad/lin_offset hold its tangent
    minorant at `center`, which is what the geometry step maximizes.
    """

    e_mat: np.ndarray
    f_vec: np.ndarray
    linear_coupling: np.ndarray
    ratio_const: float
    cross: float
    quad: float
    denom: float
    gain: float
    center: np.ndarray
    lin_grad: np.ndarray
    lin_offset: float


def assemble_geometry_objective(d_r_center, ctx: SteeringContext, r_x) -> GeometryObjectiveData:
    center = np.asarray(d_r_center, dtype=float)
    n_r = center.shape[0]
    a = steering_vector(ctx.d_t, ctx.angle, ctx.wavelength)
    da = ctx.d_t * a
    r_x = np.asarray(r_x)
    t = float(np.real(a.conj() @ r_x @ a))
    w = complex(a.conj() @ r_x @ da)
    v = float(np.real(da.conj() @ r_x @ da))
    kc2 = ctx.wavenumber_cos ** 2
    e_mat = kc2 * t ** 2 * np.ones((n_r, n_r))
    f_vec = -2.0 * kc2 * t * n_r * w.real * np.ones(n_r)
    coupling = -2.0 * kc2 * w.real * np.ones(n_r)
    quad = kc2 * t
    return GeometryObjectiveData(e_mat=e_mat, f_vec=f_vec, linear_coupling=coupling,
                   ratio_const=kc2 * n_r ** 2 * abs(w) ** 2,
                   cross=kc2 * n_r * v, quad=quad, denom=n_r * t,
                   gain=ctx.reflect_gain, center=center,
                   lin_grad=2.0 * quad * center,
                   lin_offset=-quad * float(center @ center))


def geometry_objective(data: GeometryObjectiveData, d_r) -> float:
    """The bracket at positions d_r, assembled from the quadratic rewrite."""
    d = np.asarray(d_r, dtype=float)
    if data.denom <= _TINY:
        return 0.0
    ratio = (d @ data.e_mat @ d + data.f_vec @ d + data.ratio_const) / data.denom
    return data.gain * (data.cross + data.quad * float(d @ d)
                        + data.linear_coupling @ d - ratio)


def geometry_surrogate(data: GeometryObjectiveData, d_r) -> float:
    """Concave minorant: the norm term replaced by its tangent at the center."""
    d = np.asarray(d_r, dtype=float)
    if data.denom <= _TINY:
        return 0.0
    ratio = (d @ data.e_mat @ d + data.f_vec @ d + data.ratio_const) / data.denom
    return data.gain * (data.cross + data.lin_grad @ d + data.lin_offset
                        + data.linear_coupling @ d - ratio)


def _spacing_polytope(n_r: int, gap: float, d_max: float):
    """Rows of G d <= h: segment start, minimum gaps, segment end."""
    g = np.zeros((n_r + 1, n_r))
    h = np.zeros(n_r + 1)
    g[0, 0] = -1.0
    for n in range(1, n_r):
        g[n, n - 1] = 1.0
        g[n, n] = -1.0
        h[n] = -gap
    g[n_r, n_r - 1] = 1.0
    h[n_r] = d_max
    return g, h


def solve_bs_positions(r_x, ctx: SteeringContext, d_r_init,
                       config: SystemConfig, eps_sca: float = 1e-5,
                       max_rounds: int = 30):
    """Ascend the bracket over the receive-position polytope.

    Each round maximizes the concave minorant exactly (a small QP) and
    re-centers; accepted iterates never decrease the true bracket.  Returns
    the final positions and the per-round surrogate optima.
    """
    d = np.asarray(d_r_init, dtype=float).copy()
    g_rows, h_rows = _spacing_polytope(
        d.shape[0], config.effective_min_spacing, config.d_max)
    data = assemble_geometry_objective(d, ctx, r_x)
    if data.denom <= _TINY:
        return d, []
    best = geometry_objective(data, d)
    history = []
    for _ in range(max_rounds):
        data = assemble_geometry_objective(d, ctx, r_x)
        # maximize the minorant: quadratic part comes only from the ratio
        q_mat = 2.0 * data.e_mat / data.denom
        q_vec = -(data.lin_grad + data.linear_coupling - data.f_vec / data.denom)
        report = solve_qp(QpProblem(q_mat, q_vec, g_rows, h_rows))
        if not report.ok:
            break
        d_new = report.x
        value = geometry_surrogate(data, d_new)
        true_new = geometry_objective(data, d_new)
        history.append(value)
        improvement = value - geometry_surrogate(data, d)
        if true_new < best:
            break
        d, best = d_new, true_new
        if improvement <= eps_sca * max(1e-12, abs(value)):
            break
    return d, history


# user-antenna step


def interference_matrix(geometry: UserChannelGeometry, w_q,
                        tx_positions, wavelength: float) -> np.ndarray:
    """Path-domain power coupling Sigma T W T^H Sigma^H for one beam.

    w_q may be a beam vector (rank-one W) or a full covariance matrix.
    """
    t_mat = transmit_field_response_matrix(
        tx_positions, geometry.tx_elevations, geometry.tx_azimuths, wavelength)
    b = geometry.prm_diag[:, None] * t_mat
    w_q = np.asarray(w_q)
    if w_q.ndim == 1:
        vec = b @ w_q
        return np.outer(vec, vec.conj())
    return b @ w_q @ b.conj().T


def _path_directions(geometry: UserChannelGeometry):
    """Unit-ball direction components (sin el cos az, cos el) per receive path."""
    el = geometry.rx_elevations
    az = geometry.rx_azimuths
    return np.sin(el) * np.cos(az), np.cos(el)


_pair_cache: dict[int, tuple] = {}


def _pairs(n: int):
    got = _pair_cache.get(n)
    if got is None:
        got = np.triu_indices(n, 1)
        _pair_cache[n] = got
    return got


def varsigma(u, a_mat, geometry: UserChannelGeometry, wavelength: float) -> float:
    """Received power |h(u)^H w|^2 via the pairwise-phase expansion.

    Equals tr(A) plus cross terms 2|A_ij| cos(psi_ij) with
    psi_ij = (2 pi / lambda) (rho_i - rho_j) - angle(A_ij); the sign on the
    angle is fixed by matching the direct quadratic form.
    """
    a_mat = np.asarray(a_mat)
    sx, cy = _path_directions(geometry)
    rho = float(u[0]) * sx + float(u[1]) * cy
    i, j = _pairs(a_mat.shape[0])
    beta = 2.0 * np.pi / wavelength
    psi = beta * (rho[i] - rho[j]) - np.angle(a_mat[i, j])
    return float(np.real(np.trace(a_mat))
                 + 2.0 * np.sum(np.abs(a_mat[i, j]) * np.cos(psi)))


def _power_gradient(u, a_mat, geometry, wavelength: float) -> np.ndarray:
    sx, cy = _path_directions(geometry)
    rho = float(u[0]) * sx + float(u[1]) * cy
    i, j = _pairs(np.asarray(a_mat).shape[0])
    beta = 2.0 * np.pi / wavelength
    psi = beta * (rho[i] - rho[j]) - np.angle(a_mat[i, j])
    mags = np.abs(a_mat[i, j])
    common = -2.0 * beta * mags * np.sin(psi)
    return np.array([float(common @ (sx[i] - sx[j])),
                     float(common @ (cy[i] - cy[j]))])


def _curvature_bound(a_mat, wavelength: float) -> float:
    """Hessian-norm bound of the pairwise-phase expansion over any position."""
    i, j = _pairs(np.asarray(a_mat).shape[0])
    return float(16.0 * np.pi ** 2 / wavelength ** 2
                 * np.sum(np.abs(np.asarray(a_mat)[i, j])))


@dataclass(frozen=True, eq=False)
class _BeamPathData:
    """Position-independent pieces of every beam's pairwise-phase expansion.

    Only the phase differences depend on the antenna position, through
    rho_i - rho_j = u_x (sx_i - sx_j) + u_y (cy_i - cy_j), so everything else
    is computed once per (beams, geometry) and reused across SCA rounds.
    """

    beta: float
    traces: np.ndarray       # (K,)
    mags: np.ndarray         # (K, pairs)
    angles: np.ndarray       # (K, pairs)
    dx: np.ndarray           # (pairs,)
    dy: np.ndarray           # (pairs,)
    curvatures: np.ndarray   # (K,)


def _beam_path_data(beam_columns, geometry: UserChannelGeometry,
                    tx_positions, wavelength: float) -> _BeamPathData:
    beams = np.asarray(beam_columns)
    t_mat = transmit_field_response_matrix(
        tx_positions, geometry.tx_elevations, geometry.tx_azimuths, wavelength)
    v = (geometry.prm_diag[:, None] * t_mat) @ beams      # (paths, K)
    sx, cy = _path_directions(geometry)
    i, j = _pairs(v.shape[0])
    a_ij = (v[i, :] * v[j, :].conj()).T                   # (K, pairs)
    mags = np.abs(a_ij)
    beta = 2.0 * np.pi / wavelength
    return _BeamPathData(beta=beta,
                         traces=np.sum(np.real(v * v.conj()), axis=0),
                         mags=mags, angles=np.angle(a_ij),
                         dx=sx[i] - sx[j], dy=cy[i] - cy[j],
                         curvatures=4.0 * beta ** 2 * np.sum(mags, axis=1))


def _pair_eval(data: _BeamPathData, u):
    """Every beam's received power and position gradient at u."""
    d_rho = float(u[0]) * data.dx + float(u[1]) * data.dy
    psi = data.beta * d_rho[None, :] - data.angles
    values = data.traces + 2.0 * np.sum(data.mags * np.cos(psi), axis=1)
    common = -2.0 * data.beta * data.mags * np.sin(psi)
    grads = np.stack([common @ data.dx, common @ data.dy], axis=1)
    return values, grads


@dataclass(frozen=True, eq=False)
class UserSurrogate:
    """Second-order bounds of one user's signal and interference powers.

    Around `center`: the signal power is minorized with downward curvature
    `delta`, each interferer q is majorized with upward curvature `taus[q]`.
    Both touch their true values at the center by construction.
    """

    center: np.ndarray
    own_value: float
    own_grad: np.ndarray
    delta: float
    interferer_values: np.ndarray
    interferer_grads: np.ndarray
    taus: np.ndarray

    def signal_lower(self, u) -> float:
        step = np.asarray(u, dtype=float) - self.center
        return (self.own_value + float(self.own_grad @ step)
                - 0.5 * self.delta * float(step @ step))

    def interference_upper(self, u) -> np.ndarray:
        step = np.asarray(u, dtype=float) - self.center
        return (self.interferer_values + self.interferer_grads @ step
                + 0.5 * self.taus * float(step @ step))

    def slack(self, u, gamma: float, noise: float) -> float:
        """Certified SINR margin: nonnegative implies the true constraint holds."""
        return (self.signal_lower(u)
                - gamma * (float(np.sum(self.interference_upper(u))) + noise))


def _surrogate_at(data: _BeamPathData, k: int, u_center) -> UserSurrogate:
    center = np.asarray(u_center, dtype=float)
    values, grads = _pair_eval(data, center)
    others = [q for q in range(values.shape[0]) if q != k]
    return UserSurrogate(
        center=center,
        own_value=float(values[k]),
        own_grad=grads[k],
        delta=float(data.curvatures[k]),
        interferer_values=values[others],
        interferer_grads=grads[others].reshape(len(others), 2),
        taus=data.curvatures[others])


def user_surrogate(u_center, k: int, beam_columns, geometry: UserChannelGeometry,
                   tx_positions, wavelength: float) -> UserSurrogate:
    data = _beam_path_data(beam_columns, geometry, tx_positions, wavelength)
    return _surrogate_at(data, k, u_center)


@dataclass(frozen=True, eq=False)
class UserPositionResult:
    position: np.ndarray
    slacks: tuple
    feasible: bool


def solve_user_position(k: int, beam_columns, geometry: UserChannelGeometry,
                        u_init, config: SystemConfig, tx_positions=None,
                        eps_sca: float = 1e-5,
                        max_rounds: int = 200) -> UserPositionResult:
    """Move one user's antenna to maximize its certified SINR margin.

    Each round maximizes the surrogate slack over the position box exactly
    (a 2-D concave quadratic) and re-centers; the certified margin at the
    accepted centers never decreases.  The curvature bounds are conservative,
    so single rounds take small steps and the round budget is sized to let
    the walk reach its fixed point.  If the final margin is negative no
    feasible point was found and the initial position is kept.
    """
    if tx_positions is None:
        from .model import build_transmit_array
        tx_positions = build_transmit_array(config.n_tx, config.wavelength)
    gamma = config.sinr_threshold
    noise = config.noise_comm
    half = config.user_region_half_side
    u = np.asarray(u_init, dtype=float).copy()
    data = _beam_path_data(beam_columns, geometry, tx_positions,
                           config.wavelength)
    sur = _surrogate_at(data, k, u)
    margin = sur.slack(u, gamma, noise)
    slacks = [margin]
    for _ in range(max_rounds):
        curvature = sur.delta + gamma * float(np.sum(sur.taus))
        lin = sur.own_grad - gamma * np.sum(sur.interferer_grads, axis=0)
        step, _ = max_concave_quadratic_2d(
            -0.5 * curvature * np.eye(2), lin,
            -half - u, half - u)
        candidate = u + step
        gain = sur.slack(candidate, gamma, noise) - margin
        if gain <= eps_sca * max(1e-12, abs(margin)):
            break
        u = candidate
        sur = _surrogate_at(data, k, u)
        margin = sur.slack(u, gamma, noise)
        slacks.append(margin)
    if margin < 0.0:
        return UserPositionResult(np.asarray(u_init, dtype=float), tuple(slacks),
                                  False)
    return UserPositionResult(u, tuple(slacks), True)
