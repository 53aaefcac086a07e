"""Antenna masks, the QoS feasibility test and the non-learned muting solvers.

Solvers work on per-polarization masks: bit ``i`` switches element ``i`` and
its cross-polarized partner ``i + per_pol`` together.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ArrayGeometry, channel_covariance, per_pol_avg_covariance
from .complexity import fpo_iteration
from .txrx import LinkConfig, RateEntry, eigen_beamformer, user_rate


@dataclass(frozen=True)
class AntennaMask:
    bits: np.ndarray
    geometry: ArrayGeometry

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool).copy()
        if bits.shape != (self.geometry.per_pol,):
            raise ValueError(f"mask must have {self.geometry.per_pol} entries")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_indices(cls, indices, geometry: ArrayGeometry) -> "AntennaMask":
        bits = np.zeros(geometry.per_pol, dtype=bool)
        bits[list(indices)] = True
        return cls(bits, geometry)

    @classmethod
    def full(cls, geometry: ArrayGeometry) -> "AntennaMask":
        return cls(np.ones(geometry.per_pol, dtype=bool), geometry)

    @property
    def popcount(self) -> int:
        return int(self.bits.sum())

    @property
    def active_elements(self) -> int:
        return 2 * self.popcount

    def activation(self) -> np.ndarray:
        """Diagonal of the full-array activation matrix, ``[a; a]``."""
        return np.concatenate([self.bits, self.bits])

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.bits)

    def __eq__(self, other):
        return (isinstance(other, AntennaMask) and self.geometry == other.geometry
                and np.array_equal(self.bits, other.bits))

    def __hash__(self):
        return hash((self.bits.tobytes(), self.geometry))


@dataclass
class TamSolution:
    mask: AntennaMask
    rates: list[RateEntry]
    feasible: bool
    solver_id: str
    fpo_consumed: float = 0.0
    evaluated_popcounts: list[int] = field(default_factory=list)
    class_index: int | None = None

    @property
    def active_elements(self) -> int:
        return self.mask.active_elements

    @property
    def per_user_rates(self) -> np.ndarray:
        return np.array([r.rate for r in self.rates])


def apply_mask(H_k: np.ndarray, mask: AntennaMask) -> np.ndarray:
    """Zero the channel columns of muted antennas in both polarization blocks."""
    if H_k.shape[-1] != mask.geometry.M:
        raise ValueError("channel width does not match the mask geometry")
    return H_k * mask.activation()


def class_to_mask(y: int, geometry: ArrayGeometry, kind: str = "column") -> AntennaMask:
    """Fixed configuration ``y``: columns (or rows) ``0..y`` fully active."""
    n = n_classes(geometry, kind)
    if not 0 <= y < n:
        raise ValueError(f"class {y} out of range [0, {n})")
    idx = np.arange(geometry.per_pol)
    col, row = np.divmod(idx, geometry.m_row)
    bits = (col <= y) if kind == "column" else (row <= y)
    return AntennaMask(bits, geometry)


def n_classes(geometry: ArrayGeometry, kind: str = "column") -> int:
    if kind == "column":
        return geometry.m_col
    if kind == "row":
        return geometry.m_row
    raise ValueError(f"unknown configuration family {kind!r}")


class TamProblem:
    """One slot's muting problem: scheduled users, link config and constraints.

    ``H`` is ``(K, n_prb, n_rx, M)``. Every call to :meth:`evaluate` is
    charged one heuristic iteration ``F_i`` at ``M_i = 2 * popcount``.
    """

    def __init__(self, H: np.ndarray, geometry: ArrayGeometry, link: LinkConfig,
                 r_min: float, m_min: int = 1):
        H = np.asarray(H)
        if H.ndim == 3:
            H = H[:, None]
        if H.shape[0] < 1:
            raise ValueError("at least one scheduled user is required")
        if H.shape[-1] != geometry.M:
            raise ValueError("channel width does not match geometry")
        self.H = H
        self.geometry = geometry
        self.link = link
        self.r_min = float(r_min)
        self.m_min = int(m_min)
        self.R_avg = np.stack([per_pol_avg_covariance(channel_covariance(Hk), geometry) for Hk in H])
        self.fpo = 0.0
        self.popcounts: list[int] = []

    @property
    def n_users(self) -> int:
        return self.H.shape[0]

    def reset_counters(self):
        self.fpo = 0.0
        self.popcounts = []

    def precoders(self, mask: AntennaMask) -> list[np.ndarray]:
        link = self.link
        return [eigen_beamformer(R, link.n_streams, link.stream_power, self.geometry, active=mask.bits)
                for R in self.R_avg]

    def evaluate(self, mask: AntennaMask) -> list[RateEntry]:
        link = self.link
        p = mask.popcount
        self.popcounts.append(p)
        self.fpo += fpo_iteration(2 * p, self.n_users, self.H.shape[2], link.n_streams, self.H.shape[1])
        Ws = self.precoders(mask)
        act = mask.activation()
        return [user_rate(Hk * act, W, link.noise_power, link.bandwidth_per_prb,
                          link.slot_duration, link.se_cap)
                for Hk, W in zip(self.H, Ws)]

    def satisfied(self, rates: list[RateEntry]) -> bool:
        return all(r.rate >= self.r_min for r in rates)

    def is_feasible(self, mask: AntennaMask) -> tuple[bool, list[RateEntry]]:
        rates = self.evaluate(mask)
        return self.satisfied(rates) and mask.popcount >= self.m_min, rates

    def _solution(self, mask, rates, feasible, solver_id, class_index=None) -> TamSolution:
        return TamSolution(mask=mask, rates=rates, feasible=feasible, solver_id=solver_id,
                           fpo_consumed=self.fpo, evaluated_popcounts=list(self.popcounts),
                           class_index=class_index)


def is_feasible(H: np.ndarray, mask: AntennaMask, r_min: float, m_min: int,
                link: LinkConfig) -> tuple[bool, np.ndarray]:
    """Eigen-BF rates on the masked channels checked against ``r_min``/``m_min``."""
    ok, rates = TamProblem(H, mask.geometry, link, r_min, m_min).is_feasible(mask)
    return ok, np.array([r.rate for r in rates])


def greedy_tam(problem: TamProblem) -> TamSolution:
    """Grow the active set one element per round by best sum rate.

    Each round tries every remaining element. If some candidates meet all rate
    constraints, the best of those is kept and the search stops once
    ``m_min`` is reached too; otherwise the best infeasible candidate is kept.
    Ties go to the lowest element index.
    """
    g = problem.geometry
    problem.reset_counters()
    selected: list[int] = []
    remaining = list(range(g.per_pol))
    for _ in range(g.per_pol):
        best_ok = best_bad = None
        for i in remaining:
            mask = AntennaMask.from_indices(selected + [i], g)
            rates = problem.evaluate(mask)
            total = sum(r.rate for r in rates)
            if problem.satisfied(rates):
                if best_ok is None or total > best_ok[1]:
                    best_ok = (i, total, rates)
            elif best_bad is None or total > best_bad[1]:
                best_bad = (i, total, rates)
        pick = best_ok if best_ok is not None else best_bad
        selected.append(pick[0])
        remaining.remove(pick[0])
        if best_ok is not None and len(selected) >= problem.m_min:
            return problem._solution(AntennaMask.from_indices(selected, g), pick[2], True, "greedy")
    full = AntennaMask.full(g)
    return problem._solution(full, pick[2], False, "greedy")


def sequential_tam(problem: TamProblem) -> TamSolution:
    """Activate elements in index order until the constraints hold."""
    g = problem.geometry
    problem.reset_counters()
    rates = None
    for i in range(1, g.per_pol + 1):
        mask = AntennaMask(np.arange(g.per_pol) < i, g)
        ok, rates = problem.is_feasible(mask)
        if ok:
            return problem._solution(mask, rates, True, "sequential")
    return problem._solution(AntennaMask.full(g), rates, False, "sequential")


def fixed_column_tam(problem: TamProblem, kind: str = "column") -> tuple[int, TamSolution]:
    """Scan fixed configurations from the smallest; first feasible one wins."""
    g = problem.geometry
    problem.reset_counters()
    n = n_classes(g, kind)
    rates = None
    for y in range(n):
        mask = class_to_mask(y, g, kind)
        ok, rates = problem.is_feasible(mask)
        if ok:
            return y, problem._solution(mask, rates, True, f"fixed_{kind}", class_index=y)
    return n - 1, problem._solution(class_to_mask(n - 1, g, kind), rates, False,
                                    f"fixed_{kind}", class_index=n - 1)


SOLVERS = {
    "greedy": greedy_tam,
    "sequential": sequential_tam,
    "fixed_column": lambda p: fixed_column_tam(p)[1],
}
