"""Symmetric and asymmetric classification losses with analytic gradients.

Everything works on batches: ``y`` and ``p`` are ``(B, N)`` arrays (a single
``(N,)`` vector is promoted) and losses are returned per sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class LossConfig:
    """Weight ``lam`` of the asymmetric term, its asymmetry ``alpha`` and the
    softargmax temperature ``beta``."""

    lam: float = 1.0
    alpha: float = 0.1
    beta: float = 10.0

    def __post_init__(self):
        if self.lam < 0 or self.alpha < 0:
            raise ValueError("lam and alpha must be non-negative")
        if self.beta < 1:
            raise ValueError("beta must be >= 1")

    @property
    def reliability_biased(self) -> bool:
        return self.alpha < 1

    def to_dict(self) -> dict:
        return {"lam": self.lam, "alpha": self.alpha, "beta": self.beta}


SYMMETRIC = LossConfig(lam=0.0, alpha=1.0, beta=10.0)


def _2d(a):
    a = np.asarray(a, dtype=float)
    return a[None] if a.ndim == 1 else a


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(y, p) -> np.ndarray:
    """``-sum_i y_i log p_i`` with ``p`` clipped to ``[1e-12, 1]``."""
    y, p = _2d(y), _2d(p)
    return -np.sum(y * np.log(np.clip(p, PROB_FLOOR, 1.0)), axis=-1)


def softargmax(p, beta: float) -> np.ndarray:
    """Differentiable class index ``sum_i softmax(beta p)_i * i``."""
    if beta < 1:
        raise ValueError("beta must be >= 1")
    q = softmax(beta * _2d(p))
    return q @ np.arange(q.shape[-1], dtype=float)


def asymmetric_penalty(y_max, y_hat_max, alpha: float):
    """Squared class gap; over-provisioning (``y_hat_max >= y_max``) is scaled by ``alpha``."""
    y_max = np.asarray(y_max, dtype=float)
    y_hat_max = np.asarray(y_hat_max, dtype=float)
    d2 = (y_max - y_hat_max) ** 2
    return np.where(y_max > y_hat_max, d2, alpha * d2)


def total_loss(y, p, config: LossConfig) -> np.ndarray:
    """Cross-entropy plus ``lam`` times the asymmetric softargmax penalty."""
    ce = cross_entropy(y, p)
    if config.lam == 0:
        return ce
    s_y = softargmax(y, config.beta)
    s_p = softargmax(p, config.beta)
    return ce + config.lam * asymmetric_penalty(s_y, s_p, config.alpha)


def loss_grad_probs(y, p, config: LossConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample loss and its gradient with respect to the probabilities."""
    y, p = _2d(y), _2d(p)
    loss = total_loss(y, p, config)
    inside = (p >= PROB_FLOOR) & (p <= 1.0)
    g = np.where(inside, -y / np.clip(p, PROB_FLOOR, None), 0.0)
    if config.lam != 0:
        idx = np.arange(p.shape[-1], dtype=float)
        s_y = softargmax(y, config.beta)
        q = softmax(config.beta * p)
        s_p = q @ idx
        gap = s_y - s_p
        dpen_ds = -2.0 * gap * np.where(gap > 0, 1.0, config.alpha)
        ds_dp = config.beta * q * (idx[None, :] - s_p[:, None])
        g = g + config.lam * dpen_ds[:, None] * ds_dp
    return loss, g


def softmax_backward(p: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Chain a probability gradient through the softmax to its logits."""
    return p * (g - np.sum(g * p, axis=-1, keepdims=True))
