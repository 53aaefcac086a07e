"""Mini-batch Adam training for :class:`~tamlab.nam.model.NamModel`."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .losses import SYMMETRIC, LossConfig, loss_grad_probs, softmax_backward, total_loss
from .model import PARAM_ORDER, NamModel

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    patience: int = 0  # >0: stop after this many epochs without validation gain, keep the best

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class History:
    phase: str
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int | None = None


class Adam:
    def __init__(self, params: dict, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-7):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        lr_t = self.lr * np.sqrt(1 - b2**self.t) / (1 - b1**self.t)
        for k in PARAM_ORDER:
            g = grads[k]
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            params[k] -= lr_t * self.m[k] / (np.sqrt(self.v[k]) + self.eps)


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def loss_and_grads(model: NamModel, X, Y, config: LossConfig):
    """Mean batch loss and its gradient for every parameter."""
    probs, cache = model.forward(X, return_cache=True)
    loss, g = loss_grad_probs(Y, probs, config)
    dz = softmax_backward(probs, g) / X.shape[0]
    return float(loss.mean()), model.backward(cache, dz)


def mean_loss(model: NamModel, X, Y, config: LossConfig, batch: int = 4096) -> float:
    tot = 0.0
    for s in range(0, len(X), batch):
        tot += float(total_loss(Y[s:s + batch], model.forward(X[s:s + batch]), config).sum())
    return tot / len(X)


def train(model: NamModel, X_train, y_train, X_val=None, y_val=None, phase: str = "symmetric",
          loss_config: LossConfig | None = None, config: TrainConfig | None = None):
    """Train ``model`` in place; returns ``(model, history)``.

    ``phase="symmetric"`` optimizes plain cross-entropy; ``"asymmetric"``
    uses ``loss_config`` (cross-entropy plus the reliability penalty). The
    optimizer state starts fresh on every call. Batch order is drawn from
    ``config.seed`` so runs are repeatable.
    """
    config = config or TrainConfig()
    if phase == "symmetric":
        lc = SYMMETRIC
    elif phase == "asymmetric":
        lc = loss_config or LossConfig()
    else:
        raise ValueError(f"unknown phase {phase!r}")
    X_train = np.asarray(X_train, dtype=float)
    n = len(X_train)
    if n == 0:
        raise ValueError("empty training set")
    Y = one_hot(y_train, model.n_classes)
    Yv = None if X_val is None or len(X_val) == 0 else one_hot(y_val, model.n_classes)

    opt = Adam(model.params, config.learning_rate, config.beta1, config.beta2, config.eps)
    hist = History(phase=phase)
    best = (np.inf, None, 0)
    for epoch in range(config.epochs):
        order = np.random.default_rng([config.seed, epoch]).permutation(n)
        tot = 0.0
        for s in range(0, n, config.batch_size):
            idx = order[s:s + config.batch_size]
            loss, grads = loss_and_grads(model, X_train[idx], Y[idx], lc)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss in epoch {epoch}")
            opt.step(model.params, grads)
            tot += loss * len(idx)
        hist.train_loss.append(tot / n)
        if Yv is not None:
            hist.val_loss.append(mean_loss(model, X_val, Yv, lc))
        log.info("%s epoch %d: train %.4f val %s", phase, epoch + 1, hist.train_loss[-1],
                 f"{hist.val_loss[-1]:.4f}" if hist.val_loss else "-")
        if config.patience > 0 and hist.val_loss:
            if hist.val_loss[-1] < best[0]:
                best = (hist.val_loss[-1], {k: v.copy() for k, v in model.params.items()}, epoch + 1)
            elif epoch + 1 - best[2] >= config.patience:
                break
    if best[1] is not None:
        model.params.update(best[1])
        hist.best_epoch = best[2]

    model.provenance.setdefault("phases", []).append(
        {"phase": phase, "loss": lc.to_dict(), "train": config.to_dict(), "samples": n})
    return model, hist
