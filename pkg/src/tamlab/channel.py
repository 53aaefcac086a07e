"""Synthetic multi-user channels over a cross-polarized planar array.

Each user channel is a sum of plane waves impinging on the BS panel. A drop
fixes the user positions and the path geometry (angles, delays, powers); every
slot redraws the small-scale part (complex path gains, per-polarization phases
and the user-side antenna response), so slots of one drop are i.i.d. block
fading realisations of the same geometry.

Antenna ordering is polarization-major: indices ``[0, per_pol)`` belong to
polarization 0 and ``i + per_pol`` is the co-located partner of ``i``. Inside a
polarization block elements are numbered column-major,
``index = col * m_row + row``, so the first ``(y + 1) * m_row`` elements are
exactly the first ``y + 1`` columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PRB_BANDWIDTH_HZ = 12 * 30e3


@dataclass(frozen=True)
class ArrayGeometry:
    """Cross-polarized ``m_col x m_row`` panel, ``M = 2 * m_col * m_row``."""

    m_col: int = 8
    m_row: int = 4
    element_spacing: float = 0.5
    polarizations: int = field(default=2, init=False)

    def __post_init__(self):
        if self.m_col < 1 or self.m_row < 1:
            raise ValueError("m_col and m_row must be >= 1")
        if self.element_spacing <= 0:
            raise ValueError("element_spacing must be positive")

    @property
    def per_pol(self) -> int:
        return self.m_col * self.m_row

    @property
    def M(self) -> int:
        return 2 * self.per_pol

    def element_index(self, col: int, row: int) -> int:
        return col * self.m_row + row

    def element_positions(self) -> np.ndarray:
        """(per_pol, 2) array of (horizontal, vertical) positions in wavelengths."""
        idx = np.arange(self.per_pol)
        col, row = np.divmod(idx, self.m_row)
        return self.element_spacing * np.stack([col, row], axis=1).astype(float)

    def steering_vector(self, azimuth: float, elevation: float) -> np.ndarray:
        """Unit-modulus per-polarization response to a plane wave (radians)."""
        pos = self.element_positions()
        phase = pos[:, 0] * np.sin(azimuth) * np.cos(elevation) + pos[:, 1] * np.sin(elevation)
        return np.exp(2j * np.pi * phase)

    def to_dict(self) -> dict:
        return {"m_col": self.m_col, "m_row": self.m_row, "element_spacing": self.element_spacing}


@dataclass(frozen=True)
class ChannelParams:
    """Large-scale knobs of the ray-based drop generator."""

    carrier_ghz: float = 3.5
    bs_height: float = 10.0
    ut_height: float = 1.5
    min_distance: float = 10.0
    max_distance: float = 65.0
    sector_half_width_deg: float = 60.0
    los_k_factor_db: float = 9.0
    azimuth_spread_deg: float = 10.0
    elevation_spread_deg: float = 3.0
    mean_excess_delay_ns: float = 60.0
    shadowing_los_db: float = 2.0
    shadowing_nlos_db: float = 4.0
    element_gain_db: float = 8.0
    extra_loss_db: float = 45.0
    n_rx: int = 4
    prb_stride: int = 1  # simulated PRBs sit every prb_stride PRBs of the band

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ChannelSet:
    """Channels of all users of one drop in one slot.

    ``H`` has shape ``(J, n_prb, n_rx, M)``.
    """

    H: np.ndarray
    geometry: ArrayGeometry
    seed: int
    slot: int = 0
    distance: np.ndarray | None = None
    los: np.ndarray | None = None

    def __post_init__(self):
        if self.H.ndim != 4 or self.H.shape[-1] != self.geometry.M:
            raise ValueError(f"H must be (J, n_prb, n_rx, {self.geometry.M}), got {self.H.shape}")
        if not np.all(np.isfinite(self.H)):
            raise ValueError("channel contains non-finite entries")

    @property
    def j_users(self) -> int:
        return self.H.shape[0]

    @property
    def n_prb(self) -> int:
        return self.H.shape[1]

    @property
    def n_rx(self) -> int:
        return self.H.shape[2]

    def user(self, k: int) -> np.ndarray:
        return self.H[k]

    def subset(self, users) -> "ChannelSet":
        users = list(users)
        return ChannelSet(
            H=self.H[users],
            geometry=self.geometry,
            seed=self.seed,
            slot=self.slot,
            distance=None if self.distance is None else self.distance[users],
            los=None if self.los is None else self.los[users],
        )


def los_probability(d2d: np.ndarray) -> np.ndarray:
    # street-canyon style LOS probability
    d2d = np.asarray(d2d, dtype=float)
    return np.minimum(18.0 / d2d, 1.0) * (1 - np.exp(-d2d / 36.0)) + np.exp(-d2d / 36.0)


def path_loss_db(d3d: np.ndarray, los: np.ndarray, carrier_ghz: float) -> np.ndarray:
    pl_los = 32.4 + 21.0 * np.log10(d3d) + 20.0 * np.log10(carrier_ghz)
    pl_nlos = 22.4 + 35.3 * np.log10(d3d) + 21.3 * np.log10(carrier_ghz)
    return np.where(los, pl_los, np.maximum(pl_los, pl_nlos))


@dataclass
class _DropLayout:
    distance: np.ndarray      # (J,)
    los: np.ndarray           # (J,) bool
    gain: np.ndarray          # (J,) linear large-scale power gain
    azimuth: np.ndarray       # (J, P)
    elevation: np.ndarray     # (J, P)
    delay: np.ndarray         # (J, P) seconds
    power: np.ndarray         # (J, P) fractions summing to 1 per user


def _draw_layout(j_users, paths_per_user, rng, params: ChannelParams) -> _DropLayout:
    r2 = rng.uniform(params.min_distance**2, params.max_distance**2, size=j_users)
    d2d = np.sqrt(r2)
    phi = np.deg2rad(rng.uniform(-params.sector_half_width_deg, params.sector_half_width_deg, size=j_users))
    los = rng.uniform(size=j_users) < los_probability(d2d)
    dz = params.bs_height - params.ut_height
    d3d = np.hypot(d2d, dz)
    theta = -np.arctan2(dz, d2d)

    shadow_std = np.where(los, params.shadowing_los_db, params.shadowing_nlos_db)
    pl = path_loss_db(d3d, los, params.carrier_ghz) + shadow_std * rng.standard_normal(j_users)
    gain = 10.0 ** ((params.element_gain_db - params.extra_loss_db - pl) / 10.0)

    P = paths_per_user
    az = np.repeat(phi[:, None], P, axis=1)
    el = np.repeat(theta[:, None], P, axis=1)
    delay = np.zeros((j_users, P))
    power = np.ones((j_users, P))
    if P > 1:
        az[:, 1:] += np.deg2rad(params.azimuth_spread_deg) * rng.standard_normal((j_users, P - 1))
        el[:, 1:] += np.deg2rad(params.elevation_spread_deg) * rng.standard_normal((j_users, P - 1))
        delay[:, 1:] = rng.exponential(params.mean_excess_delay_ns * 1e-9, size=(j_users, P - 1))
        # exponential power-delay profile over the scattered paths
        scat = np.exp(-delay[:, 1:] / (params.mean_excess_delay_ns * 1e-9))
        scat /= scat.sum(axis=1, keepdims=True)
        k_lin = 10.0 ** (params.los_k_factor_db / 10.0)
        first = np.where(los, k_lin / (k_lin + 1.0), 1.0 / P)
        power[:, 0] = first
        power[:, 1:] = (1.0 - first)[:, None] * scat
    return _DropLayout(distance=d2d, los=los, gain=gain, azimuth=az, elevation=el,
                       delay=delay, power=power)


def generate_drop(geometry: ArrayGeometry, j_users: int, n_prb: int, paths_per_user: int,
                  seed: int, slot: int = 0, params: ChannelParams | None = None) -> ChannelSet:
    """Draw one slot of channels for a seeded drop of ``j_users`` users.

    The drop geometry depends only on ``seed``; the small-scale fading of the
    slot depends on ``(seed, slot)``.
    """
    if j_users < 1 or n_prb < 1 or paths_per_user < 1:
        raise ValueError("j_users, n_prb and paths_per_user must all be >= 1")
    if slot < 0:
        raise ValueError("slot must be non-negative")
    params = params or ChannelParams()
    layout = _draw_layout(j_users, paths_per_user, np.random.default_rng([seed, 0]), params)
    rng = np.random.default_rng([seed, 1, slot])

    J, P, N = j_users, paths_per_user, params.n_rx
    per_pol = geometry.per_pol

    # small-scale gains: fixed-magnitude LOS ray, Rayleigh scattered rays
    amp = np.sqrt(layout.power).astype(complex)
    rayleigh = (rng.standard_normal((J, P)) + 1j * rng.standard_normal((J, P))) / np.sqrt(2)
    amp = amp * np.where(layout.los[:, None] & (np.arange(P) == 0)[None, :], 1.0, rayleigh)
    pol_phase = np.exp(2j * np.pi * rng.uniform(size=(J, P, 2)))
    rx = np.exp(2j * np.pi * rng.uniform(size=(J, P, N)))

    f = np.arange(n_prb) * params.prb_stride * PRB_BANDWIDTH_HZ
    prb_phase = np.exp(-2j * np.pi * f[None, None, :] * layout.delay[:, :, None])  # (J, P, n_prb)

    pos = geometry.element_positions()
    arg = (pos[None, None, :, 0] * (np.sin(layout.azimuth) * np.cos(layout.elevation))[..., None]
           + pos[None, None, :, 1] * np.sin(layout.elevation)[..., None])
    steer = np.exp(2j * np.pi * arg)  # (J, P, per_pol)

    # tx response per path: both polarization blocks share the steering vector
    tx = np.concatenate([pol_phase[..., 0:1] * steer, pol_phase[..., 1:2] * steer], axis=-1)
    tx = tx * amp[..., None]  # (J, P, M)
    H = np.einsum("jpn,jpf,jpm->jfnm", rx, prb_phase, tx)
    H *= np.sqrt(layout.gain)[:, None, None, None]
    assert H.shape == (J, n_prb, N, 2 * per_pol)
    return ChannelSet(H=H, geometry=geometry, seed=seed, slot=slot,
                      distance=layout.distance, los=layout.los)


def channel_covariance(H_k: np.ndarray) -> np.ndarray:
    """PRB-averaged ``H^H H`` for a user channel of shape ``(n_prb, n_rx, M)``."""
    H_k = np.asarray(H_k)
    if H_k.ndim == 2:
        H_k = H_k[None]
    if H_k.shape[0] < 1:
        raise ValueError("need at least one PRB")
    A = H_k.reshape(-1, H_k.shape[-1])
    R = (A.conj().T @ A) / H_k.shape[0]
    return 0.5 * (R + R.conj().T)


def per_pol_avg_covariance(R_k: np.ndarray, geometry: ArrayGeometry) -> np.ndarray:
    """Average of the two per-polarization diagonal blocks of ``R_k``."""
    R_k = np.asarray(R_k)
    M, h = geometry.M, geometry.per_pol
    if R_k.shape[-2:] != (M, M):
        raise ValueError(f"covariance must be {M}x{M} for this geometry, got {R_k.shape}")
    return 0.5 * (R_k[..., :h, :h] + R_k[..., h:, h:])


def dominant_eigenpair(R: np.ndarray, rel_tol: float = 1e-12):
    """Largest eigenvalue and its unit eigenvector with a fixed sign/tie rule.

    Ties within ``rel_tol`` of the largest eigenvalue go to the lowest column
    of ``numpy.linalg.eigh``'s output; the eigenvector phase is rotated so its
    first non-negligible entry is real positive.
    """
    w, U = np.linalg.eigh(R)
    top = w[-1]
    scale = max(abs(top), abs(w[0]), np.finfo(float).tiny)
    j = int(np.flatnonzero(w >= top - rel_tol * scale)[0])
    u = U[:, j]
    return w[j], fix_phase(u)


def fix_phase(u: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    mag = np.abs(u)
    nz = np.flatnonzero(mag > tol * max(mag.max(), np.finfo(float).tiny))
    if nz.size == 0:
        return u
    first = u[nz[0]]
    return u * (np.conj(first) / abs(first))


def schedule_users(channels: ChannelSet, covariances, k_max: int, corr_threshold: float = 0.3) -> list[int]:
    """Greedy semi-orthogonal co-scheduling.

    Users are visited in descending order of the dominant eigenvalue of their
    per-polarization-averaged covariance. A candidate is admitted when the sum
    of ``|u_c^H u_a|`` over the admitted users is below ``corr_threshold``.
    The strongest user is always served.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if not 0.0 <= corr_threshold <= 1.0:
        raise ValueError("corr_threshold must lie in [0, 1]")
    if len(covariances) != channels.j_users:
        raise ValueError("one covariance per user required")
    eig = [dominant_eigenpair(R) for R in covariances]
    lam = np.array([e[0] for e in eig])
    vecs = [e[1] for e in eig]
    order = sorted(range(len(lam)), key=lambda k: (-lam[k], k))

    admitted: list[int] = []
    for c in order:
        if len(admitted) >= k_max:
            break
        cum = sum(abs(np.vdot(vecs[c], vecs[a])) for a in admitted)
        if cum < corr_threshold or not admitted:
            admitted.append(c)
    return admitted
