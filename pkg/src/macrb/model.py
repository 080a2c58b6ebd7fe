"""Scenario model for a multiuser ISAC downlink with movable antennas.

A base station with a fixed transmit array and a line of movable receive
antennas serves K single-antenna users while sensing one point target.
Each user terminal carries one movable antenna confined to a small planar
box around its local origin.  This module holds the configuration record,
the per-user channel geometry, antenna layouts, field-response and channel
builders, and the random scenario generator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

GEOM_TOL = 1e-9  # meters; slack for layout feasibility checks


class ConfigError(ValueError):
    """Raised when a configuration record violates its invariants.

    The message enumerates every violated field, not just the first.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True, eq=False)
class SystemConfig:
    """Static scenario parameters.  All units are SI (watts, meters, radians).

    Defaults reproduce the desk-scale simulation setup: a 10x10 array pair,
    5 users, 256-snapshot frames, -80 dBm noise floors, and a target at
    30 m seen under a 60 degree angle.
    """

    n_tx: int = 10
    n_rx: int = 10
    n_users: int = 5
    wavelength: float = 0.05
    frame_len: int = 256
    power_budget: float = 1.0          # watts (30 dBm)
    sinr_threshold: float = 10.0       # linear (10 dB)
    noise_comm: float = 1e-11          # watts (-80 dBm)
    noise_radar: float = 1e-11         # watts (-80 dBm)
    d_min: float | None = None         # defaults to wavelength / 2
    d_max: float | None = None         # defaults to 8 * wavelength
    user_region_half_side: float | None = None  # defaults to wavelength
    target_angle: float = math.pi / 3
    target_distance: float = 30.0
    reflect_gain: float | None = None  # |alpha|^2; None derives it from pathloss
    ref_gain_1m: float = 1e-4          # channel power gain at 1 m (-40 dB)
    pathloss_exp: float = 2.8
    n_tx_paths: int = 10
    n_rx_paths: int = 10
    user_dist_range: tuple[float, float] = (20.0, 60.0)
    rng_seed: int = 0

    def __post_init__(self):
        if self.d_min is None:
            object.__setattr__(self, "d_min", self.wavelength / 2.0)
        if self.d_max is None:
            # wide enough that the movable segment contains the conventional
            # half-wavelength grid of n_rx = 10 antennas (4.5 wavelengths)
            object.__setattr__(self, "d_max", 8.0 * self.wavelength)
        if self.user_region_half_side is None:
            object.__setattr__(self, "user_region_half_side", self.wavelength)
        object.__setattr__(self, "user_dist_range", tuple(self.user_dist_range))
        problems = self._violations()
        if problems:
            raise ConfigError(problems)

    def _violations(self):
        p = []
        if not (isinstance(self.n_tx, int) and self.n_tx >= 1):
            p.append(f"n_tx must be a positive integer, got {self.n_tx!r}")
        if not (isinstance(self.n_rx, int) and self.n_rx >= 1):
            p.append(f"n_rx must be a positive integer, got {self.n_rx!r}")
        if not (isinstance(self.n_users, int) and self.n_users >= 1):
            p.append(f"n_users must be a positive integer, got {self.n_users!r}")
        if not self.wavelength > 0:
            p.append(f"wavelength must be positive, got {self.wavelength!r}")
        if not (isinstance(self.frame_len, int) and self.frame_len >= 1):
            p.append(f"frame_len must be a positive integer, got {self.frame_len!r}")
        if not self.power_budget > 0:
            p.append(f"power_budget must be positive, got {self.power_budget!r}")
        if not self.sinr_threshold > 0:
            p.append(f"sinr_threshold must be positive, got {self.sinr_threshold!r}")
        if not self.noise_comm > 0:
            p.append(f"noise_comm must be positive, got {self.noise_comm!r}")
        if not self.noise_radar > 0:
            p.append(f"noise_radar must be positive, got {self.noise_radar!r}")
        if not self.d_min > 0:
            p.append(f"d_min must be positive, got {self.d_min!r}")
        if not self.d_max > 0:
            p.append(f"d_max must be positive, got {self.d_max!r}")
        if not self.user_region_half_side > 0:
            p.append("user_region_half_side must be positive, got "
                     f"{self.user_region_half_side!r}")
        if not abs(self.target_angle) < math.pi / 2:
            p.append(f"target_angle must lie in (-pi/2, pi/2), got {self.target_angle!r}")
        if not self.target_distance > 0:
            p.append(f"target_distance must be positive, got {self.target_distance!r}")
        if self.reflect_gain is not None and not self.reflect_gain > 0:
            p.append(f"reflect_gain must be positive when given, got {self.reflect_gain!r}")
        if not self.ref_gain_1m > 0:
            p.append(f"ref_gain_1m must be positive, got {self.ref_gain_1m!r}")
        if not self.pathloss_exp > 0:
            p.append(f"pathloss_exp must be positive, got {self.pathloss_exp!r}")
        if not (isinstance(self.n_tx_paths, int) and self.n_tx_paths >= 1):
            p.append(f"n_tx_paths must be a positive integer, got {self.n_tx_paths!r}")
        if not (isinstance(self.n_rx_paths, int) and self.n_rx_paths >= 1):
            p.append(f"n_rx_paths must be a positive integer, got {self.n_rx_paths!r}")
        if self.n_tx_paths != self.n_rx_paths:
            p.append("n_tx_paths and n_rx_paths must match (square response matrix), "
                     f"got {self.n_tx_paths!r} and {self.n_rx_paths!r}")
        dr = self.user_dist_range
        if not (len(dr) == 2 and 0 < dr[0] <= dr[1]):
            p.append(f"user_dist_range must satisfy 0 < lo <= hi, got {dr!r}")
        if not (isinstance(self.rng_seed, int) and self.rng_seed >= 0):
            p.append(f"rng_seed must be a non-negative integer, got {self.rng_seed!r}")
        return p

    @property
    def effective_min_spacing(self) -> float:
        """Minimum receive-antenna gap actually enforced.

        When n_rx antennas at the nominal gap would overflow [0, d_max], the
        gap is relaxed to the uniform fill d_max / (n_rx - 1) so the segment
        always admits a layout.
        """
        if self.n_rx <= 1:
            return self.d_min
        return min(self.d_min, self.d_max / (self.n_rx - 1))

    @property
    def resolved_reflect_gain(self) -> float:
        """Target round-trip power gain |alpha|^2, derived from pathloss when unset."""
        if self.reflect_gain is not None:
            return self.reflect_gain
        one_way = self.ref_gain_1m * self.target_distance ** (-self.pathloss_exp)
        return one_way ** 2


@dataclass(frozen=True, eq=False)
class UserChannelGeometry:
    """Multipath geometry between the BS and user k.

    Receive side refers to the user's movable antenna, transmit side to the
    BS array.  Angle arrays hold (elevation, azimuth) pairs per path; the
    path-response matrix is diagonal, stored as its diagonal.
    """

    rx_elevations: np.ndarray    # (L_r,)
    rx_azimuths: np.ndarray      # (L_r,)
    tx_elevations: np.ndarray    # (L_t,)
    tx_azimuths: np.ndarray      # (L_t,)
    prm_diag: np.ndarray         # (L,) complex, L == L_r == L_t
    distance: float              # BS to user region origin, meters

    def __post_init__(self):
        for name in ("rx_elevations", "rx_azimuths", "tx_elevations",
                     "tx_azimuths", "prm_diag"):
            arr = np.asarray(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        lr = self.rx_elevations.shape[0]
        lt = self.tx_elevations.shape[0]
        if self.rx_azimuths.shape[0] != lr or self.tx_azimuths.shape[0] != lt:
            raise ValueError("angle arrays must pair up per side")
        if self.prm_diag.shape[0] != lr or lr != lt:
            raise ValueError("prm_diag length must equal both path counts")
        if not self.distance > 0:
            raise ValueError("distance must be positive")

    @property
    def n_paths(self) -> int:
        return self.prm_diag.shape[0]


@dataclass(frozen=True, eq=False)
class AntennaLayout:
    """Antenna placement snapshot: BS transmit grid, BS receive line, user points."""

    d_t: np.ndarray            # (N_t,) fixed transmit positions, sorted
    d_r: np.ndarray            # (N_r,) movable receive positions, sorted
    user_positions: np.ndarray  # (K, 2) local coordinates within each region

    def __post_init__(self):
        for name in ("d_t", "d_r", "user_positions"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(np.diff(self.d_t) <= 0):
            raise ValueError("d_t must be strictly increasing")
        if self.d_r.shape[0] > 1 and np.any(np.diff(self.d_r) <= 0):
            raise ValueError("d_r must be strictly increasing")
        if self.user_positions.ndim != 2 or self.user_positions.shape[1] != 2:
            raise ValueError("user_positions must be (K, 2)")

    def validate(self, config: SystemConfig, enforce_region: bool = True):
        """Check the receive line and user points against config limits.

        enforce_region=False skips the [0, d_max] window, used by baselines
        that pin the receive array to a conventional half-wavelength grid.
        """
        problems = []
        d_r = self.d_r
        if enforce_region:
            if d_r[0] < -GEOM_TOL:
                problems.append(f"d_r[0] = {d_r[0]:.6g} below segment start")
            if d_r[-1] > config.d_max + GEOM_TOL:
                problems.append(f"d_r[-1] = {d_r[-1]:.6g} beyond d_max = {config.d_max:.6g}")
            gap = config.effective_min_spacing
        else:
            gap = config.wavelength / 2.0
        if d_r.shape[0] > 1 and np.min(np.diff(d_r)) < gap - GEOM_TOL:
            problems.append(
                f"receive spacing {np.min(np.diff(d_r)):.6g} below minimum {gap:.6g}")
        half = config.user_region_half_side
        if np.any(np.abs(self.user_positions) > half + GEOM_TOL):
            problems.append("user position outside its region box")
        if problems:
            raise ValueError("infeasible antenna layout: " + "; ".join(problems))

    @property
    def tx_positions_2d(self) -> np.ndarray:
        """Transmit positions as planar points on the array axis."""
        return np.column_stack([self.d_t, np.zeros_like(self.d_t)])


@dataclass(frozen=True, eq=False)
class BeamformingMatrix:
    """Per-user transmit beamformers, stacked as columns of an N_t x K matrix."""

    columns: np.ndarray
    power_budget: float | None = None

    def __post_init__(self):
        arr = np.asarray(self.columns, dtype=complex)
        arr.setflags(write=False)
        object.__setattr__(self, "columns", arr)
        if arr.ndim != 2:
            raise ValueError("columns must be an N_t x K matrix")
        if self.power_budget is not None:
            used = self.frobenius_power
            if used > self.power_budget * (1 + 1e-6) + 1e-15:
                raise ValueError(
                    f"transmit power {used:.6g} exceeds budget {self.power_budget:.6g}")

    @property
    def frobenius_power(self) -> float:
        return float(np.sum(np.abs(self.columns) ** 2))


def build_transmit_array(n_tx: int, wavelength: float) -> np.ndarray:
    """Positions of the fixed transmit array: a half-wavelength grid from 0."""
    return np.arange(n_tx) * (wavelength / 2.0)


def receive_field_response(u, elevations, azimuths, wavelength: float) -> np.ndarray:
    """Field-response vector of a single movable antenna at planar point u.

    Entry i is exp(j (2 pi / lambda) rho_i(u)) with the path-projected
    displacement rho_i(u) = x sin(theta_i) cos(phi_i) + y cos(theta_i).
    """
    x, y = float(u[0]), float(u[1])
    elevations = np.asarray(elevations, dtype=float)
    azimuths = np.asarray(azimuths, dtype=float)
    rho = x * np.sin(elevations) * np.cos(azimuths) + y * np.cos(elevations)
    return np.exp(1j * (2.0 * np.pi / wavelength) * rho)


def transmit_field_response_matrix(tx_positions, elevations, azimuths,
                                   wavelength: float) -> np.ndarray:
    """Field-response matrix of the transmit array, one row per departure path.

    tx_positions may be (N, 2) planar points or an (N,) vector of positions
    on the array axis (taken as x with y = 0).
    """
    pos = np.asarray(tx_positions, dtype=float)
    if pos.ndim == 1:
        pos = np.column_stack([pos, np.zeros_like(pos)])
    elevations = np.asarray(elevations, dtype=float)
    azimuths = np.asarray(azimuths, dtype=float)
    # rho[l, n] = x_n sin(theta_l) cos(phi_l) + y_n cos(theta_l)
    rho = (np.outer(np.sin(elevations) * np.cos(azimuths), pos[:, 0])
           + np.outer(np.cos(elevations), pos[:, 1]))
    return np.exp(1j * (2.0 * np.pi / wavelength) * rho)


def channel_vector(geometry: UserChannelGeometry, u, tx_positions,
                   wavelength: float) -> np.ndarray:
    """Downlink channel of one user for antenna position u.

    h(u)^H = f(u)^H Sigma T, so h(u) = T^H Sigma^H f(u) with f the receive
    field response, Sigma the diagonal path-response matrix, and T the
    transmit field-response matrix.
    """
    f = receive_field_response(u, geometry.rx_elevations, geometry.rx_azimuths,
                               wavelength)
    t_mat = transmit_field_response_matrix(tx_positions, geometry.tx_elevations,
                                           geometry.tx_azimuths, wavelength)
    return t_mat.conj().T @ (np.conj(geometry.prm_diag) * f)


def sinr(k: int, beamformers: np.ndarray, channels, noise_power: float) -> float:
    """Downlink SINR of user k under beamformer columns and channel list."""
    if noise_power <= 0:
        raise ValueError(f"noise_power must be positive, got {noise_power!r}")
    w = np.asarray(beamformers)
    h = np.asarray(channels[k])
    gains = np.abs(h.conj() @ w) ** 2
    signal = gains[k]
    interference = float(np.sum(gains)) - float(signal)
    return float(signal / (interference + noise_power))


def sample_covariance(beamformers: np.ndarray) -> np.ndarray:
    """Transmit covariance W W^H of the beamformed frame."""
    w = np.asarray(beamformers)
    r = w @ w.conj().T
    return (r + r.conj().T) / 2.0


def draw_random_geometry(config: SystemConfig, rng: np.random.Generator):
    """Draw per-user multipath geometry for one trial.

    Per user, in a fixed order: distance, receive angles, transmit angles,
    then the diagonal path-response entries, each circularly-symmetric
    complex Gaussian with variance g / L where g is the distance pathloss
    gain and L the path count.  Returns the geometry list and the target
    reflect gain (config override or the pathloss-derived default).
    """
    lo, hi = config.user_dist_range
    geometries = []
    for _ in range(config.n_users):
        dist = float(rng.uniform(lo, hi))
        rx_elev = rng.uniform(-np.pi / 2, np.pi / 2, size=config.n_rx_paths)
        rx_azim = rng.uniform(-np.pi / 2, np.pi / 2, size=config.n_rx_paths)
        tx_elev = rng.uniform(-np.pi / 2, np.pi / 2, size=config.n_tx_paths)
        tx_azim = rng.uniform(-np.pi / 2, np.pi / 2, size=config.n_tx_paths)
        gain = config.ref_gain_1m * dist ** (-config.pathloss_exp)
        var = gain / config.n_tx_paths
        prm = np.sqrt(var / 2.0) * (rng.standard_normal(config.n_tx_paths)
                                    + 1j * rng.standard_normal(config.n_tx_paths))
        geometries.append(UserChannelGeometry(
            rx_elevations=rx_elev, rx_azimuths=rx_azim,
            tx_elevations=tx_elev, tx_azimuths=tx_azim,
            prm_diag=prm, distance=dist))
    return geometries, config.resolved_reflect_gain
