"""Analytic floating-point-operation (FPO) accounting and RF-frontend energy.

Counts are exact: everything is kept as :class:`fractions.Fraction` (or int)
until it is reported.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from .cdf import empirical_cdf

ALGORITHMS = ("fixed_column", "sequential", "greedy")


def _exact(x):
    x = Fraction(x)
    return int(x) if x.denominator == 1 else x


def fpo_iteration(M_i: int, K: int, N_k: int, L_k: int, n_prb: int):
    """FPOs of one heuristic iteration at ``M_i`` active antennas.

    ``K * (M_i^3/8 + M_i^3/8 + PRBs * (N_k M_i L_k + N_k^2 L_k + N_k L_k^2 + L_k^3))``:
    covariance, dominant eigenvector and the per-PRB rate evaluation for each
    of the ``K`` users.
    """
    if min(M_i, K, N_k, L_k) < 0 or n_prb < 0:
        raise ValueError("counts must be non-negative")
    cube = Fraction(M_i) ** 3 / 8
    per_prb = N_k * M_i * L_k + N_k**2 * L_k + N_k * L_k**2 + L_k**3
    return _exact(K * (cube + cube + n_prb * per_prb))


def _survival(probs) -> list[Fraction]:
    p = [Fraction(x).limit_denominator(10**12) if isinstance(x, float) else Fraction(x) for x in probs]
    tot = sum(p)
    if tot <= 0:
        raise ValueError("class probabilities must sum to a positive value")
    p = [x / tot for x in p]
    return [sum(p[i:]) for i in range(len(p))]


def fpo_algorithm(algorithm: str, geometry, K: int, N_k: int, L_k: int, n_prb: int,
                  distribution_mode: str = "paper", class_probs=None):
    """Expected FPOs per slot of a heuristic solver.

    With ``class_probs=None`` the outcome is assumed uniform and the closed
    forms are used: fixed-column weights ``i/N`` (``"paper"``) or
    ``(i+1)/N`` (``"corrected"``), sequential weights ``2i/M``, greedy weights
    ``2i/M * (M/2 + 1 - i)``.

    ``class_probs`` substitutes an outcome distribution (fixed-column classes,
    or popcounts ``1..M/2`` for the element-wise solvers). Iteration ``i`` is
    then weighted by the probability that the scan reaches it,
    ``P(outcome >= i)``, which is the exact mean of the per-slot cost.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    if distribution_mode not in ("paper", "corrected"):
        raise ValueError(f"unknown distribution mode {distribution_mode!r}")
    M, half = geometry.M, geometry.per_pol

    if algorithm == "fixed_column":
        N = geometry.m_col
        F = [fpo_iteration(2 * (i + 1) * geometry.m_row, K, N_k, L_k, n_prb) for i in range(N)]
        if class_probs is not None:
            w = _survival(class_probs)
            if len(w) != N:
                raise ValueError(f"need {N} class probabilities")
        elif distribution_mode == "paper":
            w = [Fraction(i, N) for i in range(N)]
        else:
            w = [Fraction(i + 1, N) for i in range(N)]
        return _exact(sum(wi * Fi for wi, Fi in zip(w, F)))

    F = [fpo_iteration(2 * i, K, N_k, L_k, n_prb) for i in range(1, half + 1)]
    if class_probs is not None:
        w = _survival(class_probs)
        if len(w) != half:
            raise ValueError(f"need {half} popcount probabilities")
    else:
        w = [Fraction(2 * i, M) for i in range(1, half + 1)]
    if algorithm == "greedy":
        w = [wi * (half + 1 - i) for wi, i in zip(w, range(1, half + 1))]
    return _exact(sum(wi * Fi for wi, Fi in zip(w, F)))


def conv_fpo(x1: int, x2: int, n_i: int, a: int, b: int, n_k: int) -> int:
    """``2 (a b n_i n_k) (x1 - a + 1)(x2 - b + 1)`` for a valid, stride-1 conv."""
    return 2 * (a * b * n_i * n_k) * (x1 - a + 1) * (x2 - b + 1)


def dense_fpo(A: int, B: int) -> int:
    """``2AB`` for ``A`` neurons fed by ``B`` inputs (multiplies + adds incl. bias)."""
    return 2 * A * B


@dataclass
class NnFpo:
    conv: int
    dense: list
    input_prep: int

    @property
    def network(self) -> int:
        return self.conv + sum(self.dense)

    @property
    def total(self) -> int:
        return self.network + self.input_prep

    @property
    def input_prep_share(self) -> float:
        return self.input_prep / self.total


def fpo_nn(arch, geometry, K: int, N: int | None = None) -> NnFpo:
    """FPOs of one NAM inference, including input preparation.

    Input preparation is the full-array covariance and dominant eigenvector of
    each of the ``K`` users, charged ``M^3/8`` each like the heuristics.
    """
    N = geometry.m_col if N is None else N
    x1, x2 = geometry.per_pol, 4
    a, b = arch.kernel
    conv = conv_fpo(x1, x2, K, a, b, arch.n_filters)
    flat = (x1 - a + 1) * (x2 - b + 1) * arch.n_filters
    dense = [dense_fpo(arch.hidden, flat), dense_fpo(N, arch.hidden)]
    M = geometry.M
    prep = _exact(K * 2 * Fraction(M) ** 3 / 8)
    return NnFpo(conv=conv, dense=dense, input_prep=prep)


def fpo_report(arch, geometry, K: int, N_k: int, L_k: int, n_prb: int,
               distribution_mode: str = "paper") -> dict:
    """All Fig.-6-style numbers for one parameter set, as plain floats."""
    algos = {a: float(fpo_algorithm(a, geometry, K, N_k, L_k, n_prb, distribution_mode))
             for a in ALGORITHMS}
    nn = fpo_nn(arch, geometry, K)
    F = {2 * i: fpo_iteration(2 * i, K, N_k, L_k, n_prb) for i in range(1, geometry.per_pol + 1)}
    return {
        "parameters": {"M": geometry.M, "K": K, "N_k": N_k, "L_k": L_k, "n_prb": n_prb,
                       "distribution_mode": distribution_mode},
        "F_i": {str(k): float(v) for k, v in F.items()},
        "algorithms": algos,
        "nn": {"conv": nn.conv, "dense": nn.dense, "input_prep": nn.input_prep,
               "network": nn.network, "total": nn.total,
               "input_prep_share": nn.input_prep_share},
        "ratios": {f"{a}/nn": algos[a] / nn.total for a in ALGORITHMS},
    }


@dataclass
class PowerModel:
    """Per-active-antenna RF frontend power terms in watts.

    The defaults are unit placeholders: only relative savings are meaningful
    unless real component figures are configured.
    """

    tx_conversion: float = 1.0
    power_amplifier: float = 1.0
    rx_conversion: float = 1.0
    low_noise_amplifier: float = 1.0
    placeholder: bool = True

    def __post_init__(self):
        for name in ("tx_conversion", "power_amplifier", "rx_conversion", "low_noise_amplifier"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def per_antenna(self) -> float:
        return self.tx_conversion + self.power_amplifier + self.rx_conversion + self.low_noise_amplifier


def energy_report(solutions, geometry, power_model: PowerModel | None = None) -> dict:
    """Mean active elements, saving vs. the full array, frontend watts and CDF.

    ``solutions`` may hold :class:`~tamlab.tam.TamSolution` objects or plain
    active-element counts.
    """
    counts = [s.active_elements if hasattr(s, "active_elements") else s for s in solutions]
    if not counts:
        raise ValueError("energy_report needs at least one solution")
    power_model = power_model or PowerModel()
    if power_model.placeholder:
        warnings.warn("PowerModel uses placeholder component powers; absolute watts are not meaningful",
                      stacklevel=2)
    mean_active = float(np.mean(counts))
    return {
        "n": len(counts),
        "M": geometry.M,
        "mean_active": mean_active,
        "saving": 1.0 - mean_active / geometry.M,
        "frontend_watts": mean_active * power_model.per_antenna,
        "full_array_watts": geometry.M * power_model.per_antenna,
        "power_model": asdict(power_model),
        "cdf": empirical_cdf(counts),
    }
