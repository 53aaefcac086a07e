"""Conv + two dense layer classifier in plain numpy, with backprop.

Layout follows the usual channels-last convention: inputs are
``(batch, height, width, channels)`` = ``(B, M/2, 4, K)``, the kernel is
``(a, b, n_in, n_filters)`` and dense weights are ``(inputs, units)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .losses import softmax

CHECKPOINT_FORMAT = "tamlab.nam.checkpoint"
CHECKPOINT_VERSION = 1
PARAM_ORDER = ("conv_w", "conv_b", "dense1_w", "dense1_b", "dense2_w", "dense2_b")


@dataclass(frozen=True)
class NamArchitecture:
    kernel: tuple[int, int] = (3, 3)
    n_filters: int = 16
    hidden: int = 64

    def to_dict(self) -> dict:
        return {"kernel": list(self.kernel), "n_filters": self.n_filters, "hidden": self.hidden}

    @classmethod
    def from_dict(cls, d: dict) -> "NamArchitecture":
        return cls(kernel=tuple(d["kernel"]), n_filters=d["n_filters"], hidden=d["hidden"])


class NamModel:
    """Single valid conv (ReLU) -> dense (ReLU) -> dense (softmax)."""

    def __init__(self, input_shape, n_classes: int, arch: NamArchitecture | None = None,
                 seed: int | None = 0):
        self.input_shape = tuple(int(s) for s in input_shape)
        self.n_classes = int(n_classes)
        self.arch = arch or NamArchitecture()
        H, W, C = self.input_shape
        a, b = self.arch.kernel
        if H < a or W < b:
            raise ValueError(f"kernel {self.arch.kernel} larger than input {self.input_shape}")
        self.out_hw = (H - a + 1, W - b + 1)
        self.flat = self.out_hw[0] * self.out_hw[1] * self.arch.n_filters
        self.provenance: dict = {}
        rng = np.random.default_rng(seed)

        def fan_in_uniform(shape, fan_in):
            lim = np.sqrt(6.0 / fan_in)
            return rng.uniform(-lim, lim, size=shape)

        nk, hid, N = self.arch.n_filters, self.arch.hidden, self.n_classes
        self.params = {
            "conv_w": fan_in_uniform((a, b, C, nk), a * b * C),
            "conv_b": np.zeros(nk),
            "dense1_w": fan_in_uniform((self.flat, hid), self.flat),
            "dense1_b": np.zeros(hid),
            "dense2_w": fan_in_uniform((hid, N), hid) / np.sqrt(3.0),
            "dense2_b": np.zeros(N),
        }

    @property
    def n_params(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def copy(self) -> "NamModel":
        m = NamModel.__new__(NamModel)
        m.__dict__.update(self.__dict__)
        m.params = {k: v.copy() for k, v in self.params.items()}
        m.provenance = json.loads(json.dumps(self.provenance))
        return m

    def _patches(self, X):
        a, b = self.arch.kernel
        win = sliding_window_view(X, (a, b), axis=(1, 2))      # (B, Ho, Wo, C, a, b)
        win = win.transpose(0, 1, 2, 4, 5, 3)                   # (B, Ho, Wo, a, b, C)
        return win.reshape(-1, a * b * X.shape[3])

    def forward(self, X, return_cache: bool = False):
        """Class probabilities for ``X`` of shape ``(B, H, W, C)`` or ``(H, W, C)``."""
        X = np.asarray(X, dtype=float)
        single = X.ndim == 3
        if single:
            X = X[None]
        if X.shape[1:] != self.input_shape:
            raise ValueError(f"expected input {self.input_shape}, got {X.shape[1:]}")
        p = self.params
        B = X.shape[0]
        cols = self._patches(X)
        z0 = cols @ p["conv_w"].reshape(-1, self.arch.n_filters) + p["conv_b"]
        h0 = np.maximum(z0, 0.0).reshape(B, self.flat)
        z1 = h0 @ p["dense1_w"] + p["dense1_b"]
        h1 = np.maximum(z1, 0.0)
        z2 = h1 @ p["dense2_w"] + p["dense2_b"]
        probs = softmax(z2)
        if return_cache:
            return probs, {"cols": cols, "z0": z0, "h0": h0, "z1": z1, "h1": h1, "B": B}
        return probs[0] if single else probs

    def backward(self, cache: dict, dz2: np.ndarray) -> dict:
        """Parameter gradients given the gradient w.r.t. the output logits."""
        p = self.params
        B = cache["B"]
        grads = {
            "dense2_w": cache["h1"].T @ dz2,
            "dense2_b": dz2.sum(axis=0),
        }
        dz1 = (dz2 @ p["dense2_w"].T) * (cache["z1"] > 0)
        grads["dense1_w"] = cache["h0"].T @ dz1
        grads["dense1_b"] = dz1.sum(axis=0)
        dh0 = (dz1 @ p["dense1_w"].T).reshape(B * self.out_hw[0] * self.out_hw[1], -1)
        dz0 = dh0 * (cache["z0"] > 0)
        grads["conv_w"] = (cache["cols"].T @ dz0).reshape(p["conv_w"].shape)
        grads["conv_b"] = dz0.sum(axis=0)
        return grads

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.forward(X), axis=-1)

    # checkpoint I/O

    def to_dict(self) -> dict:
        def arr(v):
            v32 = np.asarray(v, dtype=np.float32)
            return {"shape": list(v32.shape), "data": [float(str(x)) for x in v32.ravel()]}

        p = self.params
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "input_shape": list(self.input_shape),
            "n_classes": self.n_classes,
            "architecture": self.arch.to_dict(),
            "layers": [
                {"name": "conv", "type": "conv2d_valid", "activation": "relu",
                 "kernel": arr(p["conv_w"]), "bias": arr(p["conv_b"])},
                {"name": "dense1", "type": "dense", "activation": "relu",
                 "kernel": arr(p["dense1_w"]), "bias": arr(p["dense1_b"])},
                {"name": "dense2", "type": "dense", "activation": "softmax",
                 "kernel": arr(p["dense2_w"]), "bias": arr(p["dense2_b"])},
            ],
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NamModel":
        if d.get("format") != CHECKPOINT_FORMAT:
            raise ValueError("not a NAM checkpoint")
        if d.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {d.get('version')}")
        model = cls(d["input_shape"], d["n_classes"], NamArchitecture.from_dict(d["architecture"]), seed=0)
        names = {"conv": "conv", "dense1": "dense1", "dense2": "dense2"}
        for layer in d["layers"]:
            pre = names[layer["name"]]
            for part, suffix in (("kernel", "_w"), ("bias", "_b")):
                spec = layer[part]
                vals = np.asarray(spec["data"], dtype=np.float32).reshape(spec["shape"])
                if vals.shape != model.params[pre + suffix].shape:
                    raise ValueError(f"shape mismatch for {pre + suffix}")
                model.params[pre + suffix] = vals.astype(float)
        model.provenance = d.get("provenance", {})
        return model

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def save(self, path):
        with open(path, "w") as f:
            f.write(self.dumps())

    @classmethod
    def load(cls, path) -> "NamModel":
        with open(path) as f:
            return cls.from_dict(json.load(f))
