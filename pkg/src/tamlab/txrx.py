"""Transmit/receive maths: eigen-beamforming, ZF, MMSE receiver and rates.

All functions accept an arbitrary antenna mask implicitly: muted antennas are
zero columns of the channel and zero rows of the precoder. Most functions
broadcast over leading batch axes (PRBs, candidate masks).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ArrayGeometry, PRB_BANDWIDTH_HZ, dominant_eigenpair


class SingularChannelError(np.linalg.LinAlgError):
    """Raised when ``H H^H`` cannot be inverted for zero-forcing."""


@dataclass(frozen=True)
class LinkConfig:
    """Per-PRB link parameters shared by every user of a slot."""

    stream_power: float = 1.0
    noise_power: float = 1.0
    n_streams: int = 2
    bandwidth_per_prb: float = PRB_BANDWIDTH_HZ
    slot_duration: float = 0.5e-3
    se_cap: float = 8.0

    def __post_init__(self):
        if self.noise_power <= 0 or self.stream_power <= 0:
            raise ValueError("noise_power and stream_power must be positive")
        if self.se_cap <= 0:
            raise ValueError("se_cap must be positive")
        if self.n_streams not in (1, 2):
            raise ValueError("streams map to polarizations: n_streams must be 1 or 2")

    @classmethod
    def from_totals(cls, p_total: float, total_streams: int, n_prb: int, **kw) -> "LinkConfig":
        """Equal power split ``P = P_total / (L_total * n_prb)``."""
        return cls(stream_power=p_total / (total_streams * n_prb), **kw)


@dataclass
class RateEntry:
    """Link report of one user over all PRBs of a slot."""

    sinr: np.ndarray                 # (n_prb,)
    mse: np.ndarray                  # (n_prb, L)
    spectral_efficiency: np.ndarray  # (n_prb,), bit/s/Hz summed over streams, capped
    rate: float                      # bits per slot

    @property
    def mean_se(self) -> float:
        return float(np.mean(self.spectral_efficiency))


def eigen_beamformer(R_avg: np.ndarray, n_streams: int, power: float, geometry: ArrayGeometry,
                     active: np.ndarray | None = None, psd_tol: float = 1e-10) -> np.ndarray:
    """Eigen-beamforming transmitter ``W = (I_L kron u) * sqrt(P)``.

    ``u`` is the dominant eigenvector of ``R_avg`` restricted to the ``active``
    per-polarization elements (all by default), so muted rows are exactly
    zero. Stream ``l`` is sent on polarization ``l``.
    """
    R_avg = np.asarray(R_avg)
    h = geometry.per_pol
    if R_avg.shape != (h, h):
        raise ValueError(f"R_avg must be {h}x{h}")
    if n_streams not in (1, 2):
        raise ValueError("n_streams must be 1 or 2")
    idx = np.arange(h) if active is None else np.flatnonzero(active)
    W = np.zeros((geometry.M, n_streams), dtype=complex)
    if idx.size == 0:
        return W
    sub = R_avg[np.ix_(idx, idx)]
    lam, u_sub = dominant_eigenpair(sub)
    if lam < -psd_tol * max(abs(np.trace(sub)), 1e-300):
        raise ValueError("covariance is not positive semidefinite")
    u = np.zeros(h, dtype=complex)
    u[idx] = u_sub
    amp = np.sqrt(power)
    for l in range(n_streams):
        W[l * h:(l + 1) * h, l] = amp * u
    return W


def mmse_receiver(H_k: np.ndarray, W: np.ndarray, W_k: np.ndarray, noise_power: float) -> np.ndarray:
    """``V_k = (H_k W W^H H_k^H + sigma^2 I)^{-1} H_k W_k``."""
    if noise_power <= 0:
        raise ValueError("noise_power must be positive")
    HW = H_k @ W
    n = H_k.shape[-2]
    C = HW @ np.swapaxes(HW.conj(), -1, -2) + noise_power * np.eye(n)
    return np.linalg.solve(C, H_k @ W_k)


def receiver_error_covariance(H_k, W, W_k, V, noise_power) -> np.ndarray:
    """Error covariance of an arbitrary linear receiver ``V`` (expanded form).

    ``E = V^H (H W W^H H^H + R_n) V - V^H H W_k - W_k^H H^H V + I``.
    """
    HW = H_k @ W
    n = H_k.shape[-2]
    Ry = HW @ np.swapaxes(HW.conj(), -1, -2) + noise_power * np.eye(n)
    Vh = np.swapaxes(V.conj(), -1, -2)
    Heff = H_k @ W_k
    L = W_k.shape[-1]
    return Vh @ Ry @ V - Vh @ Heff - np.swapaxes(Heff.conj(), -1, -2) @ V + np.eye(L)


def mmse_error_covariance(H_k: np.ndarray, W_k: np.ndarray, R_in: np.ndarray | float) -> np.ndarray:
    """``E_k = (I + H_eff^H R^{-1} H_eff)^{-1}`` with ``H_eff = H_k W_k``.

    ``R_in`` is the interference-plus-noise covariance; a scalar means
    ``R_in * I``.
    """
    Heff = H_k @ W_k
    L = W_k.shape[-1]
    if np.isscalar(R_in) or np.ndim(R_in) == 0:
        if R_in <= 0:
            raise np.linalg.LinAlgError("noise covariance must be positive definite")
        X = Heff / R_in
    else:
        X = np.linalg.solve(R_in, Heff)
    A = np.eye(L) + np.swapaxes(Heff.conj(), -1, -2) @ X
    E = np.linalg.inv(A)
    return 0.5 * (E + np.swapaxes(E.conj(), -1, -2))


def sinr_from_mse(E: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Average per-stream SINR, ``(1/L) sum_i (1/MSE_i - 1)``."""
    mse = np.real(np.diagonal(E, axis1=-2, axis2=-1))
    if np.any(mse <= 0) or np.any(mse > 1 + tol):
        raise ValueError("MSE values must lie in (0, 1]")
    mse = np.minimum(mse, 1.0)
    return np.mean(1.0 / mse - 1.0, axis=-1)


def user_rate(H_k: np.ndarray, W_k: np.ndarray, noise_power: float,
              bandwidth_per_prb: float = PRB_BANDWIDTH_HZ, slot_duration: float = 0.5e-3,
              se_cap: float = 8.0) -> RateEntry:
    """Truncated-Shannon rate of one user assuming no inter-user interference.

    Per PRB the SE is ``min(L log2(1 + SINR), L * se_cap)``; the slot rate is
    ``sum_prb SE * bandwidth_per_prb * slot_duration``.
    """
    if se_cap <= 0:
        raise ValueError("se_cap must be positive")
    H_k = np.asarray(H_k)
    if H_k.ndim == 2:
        H_k = H_k[None]
    L = W_k.shape[-1]
    E = mmse_error_covariance(H_k, W_k, noise_power)
    sinr = sinr_from_mse(E)
    se = np.minimum(L * np.log2(1.0 + sinr), L * se_cap)
    rate = float(np.sum(se) * bandwidth_per_prb * slot_duration)
    return RateEntry(sinr=sinr, mse=np.real(np.diagonal(E, axis1=-2, axis2=-1)),
                     spectral_efficiency=se, rate=rate)


def _gram_inverse(H: np.ndarray, cond_limit: float = 1e12) -> np.ndarray:
    G = H @ np.swapaxes(H.conj(), -1, -2)
    if np.any(np.linalg.cond(G) > cond_limit):
        raise SingularChannelError("H H^H is singular: not enough active antennas or dependent users")
    return np.linalg.inv(G)


def gram_inverse_add_antenna(G_inv: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Inverse of ``G + h h^H`` from ``G^{-1}`` by the Sherman-Morrison formula.

    ``h`` is the new antenna's column of the stacked channel, so this updates
    ``(H H^H)^{-1}`` when one antenna is switched on.
    """
    h = np.asarray(h).reshape(-1, 1)
    Gh = G_inv @ h
    denom = 1.0 + np.real(h.conj().T @ Gh)[0, 0]
    return G_inv - (Gh @ Gh.conj().T) / denom


def zf_precoder(H: np.ndarray) -> np.ndarray:
    """Channel pseudo-inverse ``H^H (H H^H)^{-1}`` for stacked single-antenna users."""
    H = np.asarray(H)
    K, M = H.shape[-2:]
    if K > M:
        raise SingularChannelError(f"{K} users cannot be zero-forced with {M} antennas")
    return np.swapaxes(H.conj(), -1, -2) @ _gram_inverse(H)


def zf_gain(H: np.ndarray) -> np.ndarray:
    """Per-user effective gain ``b_k = 1 / [(H H^H)^{-1}]_kk`` (batched)."""
    Ginv = _gram_inverse(np.asarray(H))
    return 1.0 / np.real(np.diagonal(Ginv, axis1=-2, axis2=-1))


def zf_user_rate(H: np.ndarray, k: int, power: float, noise_power: float, bandwidth: float) -> float:
    """ZF rate of user ``k``: ``B log2(1 + b_k P / sigma^2)``."""
    b = zf_gain(H)[..., k]
    return bandwidth * np.log2(1.0 + b * power / noise_power)


def zf_rates(H: np.ndarray, power: float, noise_power: float, bandwidth: float) -> np.ndarray:
    """All users' ZF rates; broadcasts over leading axes of ``H``."""
    return bandwidth * np.log2(1.0 + zf_gain(H) * power / noise_power)


def zf_rate_direct(H: np.ndarray, W: np.ndarray, k: int, power: float, noise_power: float,
                   bandwidth: float) -> float:
    """Rate of user ``k`` from normalized beams incl. (vanishing) interference terms."""
    norms = np.linalg.norm(W, axis=0) ** 2
    g = np.abs(H[k] @ W) ** 2 / norms
    interf = power * (g.sum() - g[k])
    return bandwidth * np.log2(1.0 + power * g[k] / (interf + noise_power))
