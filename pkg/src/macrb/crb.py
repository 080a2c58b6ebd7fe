"""Cramer-Rao bound of the target angle estimate, two independent routes.

The sensing receiver observes L snapshots of the target echo through the
round-trip response G = alpha * b(theta) a(theta)^H, where a and b are the
transmit/receive steering vectors of the arrays.  The bound on the angle
variance follows from the 2x2 Fisher information over (angle, complex gain),
reduced by a Schur complement to a single real bracket.

Two evaluation paths are kept deliberately separate so they can certify each
other: a general route that forms G and its angle derivative as matrices and
takes traces, and an expanded route built from closed-form scalar blocks.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .model import AntennaLayout, SystemConfig

_TINY = 1e-300  # guard for degenerate (zero-power) covariances


@dataclass(frozen=True, eq=False)
class SteeringContext:
    """Everything the bound depends on besides the transmit covariance."""

    d_t: np.ndarray        # (N_t,) transmit positions on the array axis
    d_r: np.ndarray        # (N_r,) receive positions on the segment
    angle: float           # target angle, radians, in (-pi/2, pi/2)
    wavelength: float
    reflect_gain: float    # |alpha|^2, round-trip power gain
    noise_radar: float     # sensing noise power per snapshot
    frame_len: int

    def __post_init__(self):
        for name in ("d_t", "d_r"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_scenario(cls, config: SystemConfig, layout: AntennaLayout,
                      d_r: np.ndarray | None = None) -> "SteeringContext":
        return cls(d_t=layout.d_t,
                   d_r=layout.d_r if d_r is None else np.asarray(d_r, dtype=float),
                   angle=config.target_angle,
                   wavelength=config.wavelength,
                   reflect_gain=config.resolved_reflect_gain,
                   noise_radar=config.noise_radar,
                   frame_len=config.frame_len)

    def with_receive_positions(self, d_r) -> "SteeringContext":
        return SteeringContext(self.d_t, np.asarray(d_r, dtype=float), self.angle,
                               self.wavelength, self.reflect_gain,
                               self.noise_radar, self.frame_len)

    @property
    def wavenumber_cos(self) -> float:
        """(2 pi / lambda) cos(angle), the phase slope w.r.t. the angle."""
        return (2.0 * np.pi / self.wavelength) * math.cos(self.angle)


def steering_vector(positions, angle: float, wavelength: float) -> np.ndarray:
    """Narrowband steering vector exp(j (2 pi / lambda) d sin(angle))."""
    d = np.asarray(positions, dtype=float)
    return np.exp(1j * (2.0 * np.pi / wavelength) * d * math.sin(angle))


def steering_derivative(positions, angle: float, wavelength: float) -> np.ndarray:
    """Angle derivative of the steering vector: j (2 pi / lambda) cos(angle) d . a."""
    d = np.asarray(positions, dtype=float)
    a = steering_vector(d, angle, wavelength)
    return 1j * (2.0 * np.pi / wavelength) * math.cos(angle) * d * a


def _response_and_derivative(ctx: SteeringContext):
    """Round-trip response G and its angle derivative as dense matrices."""
    alpha = math.sqrt(ctx.reflect_gain)  # phase convention: alpha real positive
    a = steering_vector(ctx.d_t, ctx.angle, ctx.wavelength)
    b = steering_vector(ctx.d_r, ctx.angle, ctx.wavelength)
    da = steering_derivative(ctx.d_t, ctx.angle, ctx.wavelength)
    db = steering_derivative(ctx.d_r, ctx.angle, ctx.wavelength)
    g = alpha * np.outer(b, a.conj())
    gdot = alpha * (np.outer(db, a.conj()) + np.outer(b, da.conj()))
    return g, gdot


def fim_blocks(r_x: np.ndarray, ctx: SteeringContext):
    """Schur blocks (m11, m12, m22) of the angle/gain Fisher information.

    Closed scalar forms: with kc = (2 pi / lambda) cos(angle), a the transmit
    steering vector, w = a^H R diag(d_t) a, v = (diag(d_t) a)^H R (diag(d_t) a),
    t = a^H R a, s = sum(d_r), q = sum(d_r^2):

        m11 = g kc^2 (N_r v + t q - 2 s Re w)
        m12 = g j kc (s t - N_r conj(w))
        m22 = g N_r t

    where g is the round-trip power gain.  m11, m22 are real; the (2,1)
    block is conj(m12).
    """
    r_x = np.asarray(r_x)
    a = steering_vector(ctx.d_t, ctx.angle, ctx.wavelength)
    da = ctx.d_t * a
    n_r = ctx.d_r.shape[0]
    kc = ctx.wavenumber_cos
    r_a = r_x @ a
    r_da = r_x @ da
    t = float(np.real(a.conj() @ r_a))
    w = complex(a.conj() @ r_da)
    v = float(np.real(da.conj() @ r_da))
    s = float(np.sum(ctx.d_r))
    q = float(np.sum(ctx.d_r ** 2))
    g = ctx.reflect_gain
    m11 = g * kc ** 2 * (n_r * v + t * q - 2.0 * s * w.real)
    m12 = g * 1j * kc * (s * t - n_r * w.conjugate())
    m22 = g * n_r * t
    return m11, m12, m22


def fisher_bracket(r_x: np.ndarray, ctx: SteeringContext) -> float:
    """Schur complement m11 - |m12|^2 / m22 of the Fisher blocks."""
    m11, m12, m22 = fim_blocks(r_x, ctx)
    if m22 <= _TINY:
        return 0.0
    return float(m11 - abs(m12) ** 2 / m22)


def _crb_from_bracket(bracket: float, ctx: SteeringContext) -> float:
    if bracket <= _TINY:
        return math.inf
    return ctx.noise_radar / (2.0 * ctx.reflect_gain * ctx.frame_len * bracket)


def crb_expanded(r_x: np.ndarray, ctx: SteeringContext) -> float:
    """Angle CRB via the closed-form scalar blocks."""
    return _crb_from_bracket(fisher_bracket(r_x, ctx), ctx)


def crb_general(r_x: np.ndarray, ctx: SteeringContext) -> float:
    """Angle CRB via dense response matrices and trace forms.

    Independent of crb_expanded: forms G and dG/dtheta explicitly and
    evaluates m11 = tr(dG R dG^H), m12 = tr(dG R G^H), m22 = tr(G R G^H).
    """
    r_x = np.asarray(r_x)
    g, gdot = _response_and_derivative(ctx)
    gr = g @ r_x
    gdr = gdot @ r_x
    m11 = float(np.real(np.sum(gdr * gdot.conj())))
    m12 = complex(np.sum(gdr * g.conj()))
    m22 = float(np.real(np.sum(gr * g.conj())))
    if m22 <= _TINY:
        return math.inf
    bracket = m11 - abs(m12) ** 2 / m22
    return _crb_from_bracket(bracket, ctx)


def crb_fd_oracle(r_x: np.ndarray, ctx: SteeringContext, step: float = 1e-6) -> float:
    """Angle CRB with the response derivative replaced by a central difference.

    Reference implementation for validating the analytic derivative; the
    truncation error scales as step^2 while the analytic routes are exact.
    """
    r_x = np.asarray(r_x)
    g, _ = _response_and_derivative(ctx)

    def response_at(angle):
        alpha = math.sqrt(ctx.reflect_gain)
        a = steering_vector(ctx.d_t, angle, ctx.wavelength)
        b = steering_vector(ctx.d_r, angle, ctx.wavelength)
        return alpha * np.outer(b, a.conj())

    gdot = (response_at(ctx.angle + step) - response_at(ctx.angle - step)) / (2.0 * step)
    gr = g @ r_x
    gdr = gdot @ r_x
    m11 = float(np.real(np.sum(gdr * gdot.conj())))
    m12 = complex(np.sum(gdr * g.conj()))
    m22 = float(np.real(np.sum(gr * g.conj())))
    if m22 <= _TINY:
        return math.inf
    bracket = m11 - abs(m12) ** 2 / m22
    return _crb_from_bracket(bracket, ctx)
