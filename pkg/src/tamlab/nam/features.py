from __future__ import annotations

import numpy as np

from ..channel import ArrayGeometry, channel_covariance, per_pol_avg_covariance
from ..txrx import LinkConfig, eigen_beamformer


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    return v / n if n > 0 else np.zeros_like(v)


def featurize(H, precoders, geometry: ArrayGeometry, K: int) -> np.ndarray:
    """Stack ``[Re W_pol, Im W_pol, Re H_pol, Im H_pol]`` per user into ``(M/2, 4, K)``.

    ``H`` holds the scheduled users' channels ``(K', n_prb, n_rx, M)`` and
    ``precoders`` their full-array transmit matrices ``(M, L)``. ``H_pol``
    averages the channel over PRBs, user antennas and both polarizations;
    ``W_pol`` averages the stream columns' per-polarization blocks. Each of
    the four real vectors is L2-normalized on its own. Users beyond ``K'``
    are zero slices.
    """
    H = np.asarray(H)
    if H.shape[0] > K:
        raise ValueError(f"{H.shape[0]} scheduled users exceed K={K}")
    h = geometry.per_pol
    X = np.zeros((h, 4, K))
    for k, (Hk, W) in enumerate(zip(H, precoders)):
        hk = Hk.mean(axis=(0, 1))
        h_pol = 0.5 * (hk[:h] + hk[h:])
        w_pol = 0.5 * (W[:h].sum(axis=1) + W[h:].sum(axis=1))
        for j, v in enumerate((w_pol.real, w_pol.imag, h_pol.real, h_pol.imag)):
            X[:, j, k] = _unit(v)
    return X


def full_array_precoders(H, link: LinkConfig, geometry: ArrayGeometry) -> list[np.ndarray]:
    return [eigen_beamformer(per_pol_avg_covariance(channel_covariance(Hk), geometry),
                             link.n_streams, link.stream_power, geometry)
            for Hk in H]
