"""Experiment configuration: one JSON document drives every stage."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from importlib import resources

from ..channel import PRB_BANDWIDTH_HZ, ArrayGeometry, ChannelParams
from ..nam.losses import LossConfig
from ..nam.model import NamArchitecture
from ..nam.training import TrainConfig
from ..txrx import LinkConfig


@dataclass
class ChannelSection:
    j_users: int = 10
    n_prb: int = 12
    paths_per_user: int = 6
    params: dict = field(default_factory=lambda: ChannelParams().to_dict())


@dataclass
class SchedulerSection:
    k_max: int = 4
    corr_threshold: float = 0.3


@dataclass
class TxrxSection:
    tx_power_dbm: float = 53.0
    reference_prb: int = 273
    noise_density_dbm_hz: float = -174.0
    noise_figure_db: float = 9.0
    noise_power_w: float | None = None
    n_streams: int = 2
    slot_duration: float = 0.5e-3
    se_cap: float = 8.0


@dataclass
class TamSection:
    r_min_full_band: float = 0.3e6
    m_min: int = 4
    scale_r_min_with_prb: bool = True


def _train_dict(**kw) -> dict:
    # batch order is seeded from Seeds.nam, not per phase
    d = asdict(TrainConfig(**kw))
    del d["seed"]
    return d


@dataclass
class NamSection:
    architecture: dict = field(default_factory=lambda: NamArchitecture().to_dict())
    loss: dict = field(default_factory=lambda: LossConfig().to_dict())
    symmetric: dict = field(default_factory=lambda: _train_dict(epochs=30, patience=3))
    asymmetric: dict = field(default_factory=lambda: _train_dict(epochs=10, patience=3))
    exclude_infeasible: bool = True


@dataclass
class DatasetSection:
    drops: int = 100
    slots_per_drop: int = 20
    split: list = field(default_factory=lambda: [0.8, 0.1, 0.1])


@dataclass
class Seeds:
    channel: int = 1
    split: int = 2
    nam: int = 3


_SECTIONS = {
    "channel": ChannelSection, "scheduler": SchedulerSection, "txrx": TxrxSection,
    "tam": TamSection, "nam": NamSection, "dataset": DatasetSection, "seeds": Seeds,
}


@dataclass
class ExperimentConfig:
    name: str = "desk"
    geometry: dict = field(default_factory=lambda: ArrayGeometry().to_dict())
    channel: ChannelSection = field(default_factory=ChannelSection)
    scheduler: SchedulerSection = field(default_factory=SchedulerSection)
    txrx: TxrxSection = field(default_factory=TxrxSection)
    tam: TamSection = field(default_factory=TamSection)
    nam: NamSection = field(default_factory=NamSection)
    dataset: DatasetSection = field(default_factory=DatasetSection)
    seeds: Seeds = field(default_factory=Seeds)

    def __post_init__(self):
        if abs(sum(self.dataset.split) - 1.0) > 1e-9 or len(self.dataset.split) != 3:
            raise ValueError("dataset.split must hold three fractions summing to 1")
        if self.scheduler.k_max < 1:
            raise ValueError("scheduler.k_max must be >= 1")

    # derived objects

    @property
    def array(self) -> ArrayGeometry:
        return ArrayGeometry(**self.geometry)

    @property
    def channel_params(self) -> ChannelParams:
        return ChannelParams(**self.channel.params)

    @property
    def n_classes(self) -> int:
        return self.array.m_col

    def link(self) -> LinkConfig:
        t = self.txrx
        n_prb = self.channel.n_prb
        # total power scales with the simulated share of the reference band
        p_total = 10 ** ((t.tx_power_dbm - 30) / 10) * n_prb / t.reference_prb
        if t.noise_power_w is not None:
            noise = t.noise_power_w
        else:
            noise = 10 ** ((t.noise_density_dbm_hz + t.noise_figure_db - 30) / 10) * PRB_BANDWIDTH_HZ
        return LinkConfig.from_totals(p_total, self.scheduler.k_max * t.n_streams, n_prb,
                                      noise_power=noise, n_streams=t.n_streams,
                                      bandwidth_per_prb=PRB_BANDWIDTH_HZ,
                                      slot_duration=t.slot_duration, se_cap=t.se_cap)

    @property
    def r_min(self) -> float:
        t = self.tam
        if t.scale_r_min_with_prb:
            return t.r_min_full_band * self.channel.n_prb / self.txrx.reference_prb
        return t.r_min_full_band

    def architecture(self) -> NamArchitecture:
        return NamArchitecture.from_dict(self.nam.architecture)

    def loss_config(self) -> LossConfig:
        return LossConfig(**self.nam.loss)

    def train_config(self, phase: str) -> TrainConfig:
        return TrainConfig(**getattr(self.nam, phase), seed=self.seeds.nam)

    # serialization

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def seeds_tag(self) -> str:
        s = self.seeds
        return f"channel={s.channel};split={s.split};nam={s.nam}"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        base = cls().to_dict()
        merged = _merge(base, d)
        kw = {}
        for f in fields(cls):
            v = merged[f.name]
            kw[f.name] = _SECTIONS[f.name](**v) if f.name in _SECTIONS else v
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Derive all three seeds from one override value."""
        c = copy.deepcopy(self)
        c.seeds = Seeds(channel=seed, split=seed + 1, nam=seed + 2)
        return c


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if k not in base:
            raise KeyError(f"unknown config key {k!r}")
        if isinstance(v, dict) and isinstance(base[k], dict) and k != "params":
            out[k] = _merge(base[k], v)
        elif k == "params":
            out[k] = {**base[k], **v}
        else:
            out[k] = v
    return out


def profile(name: str) -> ExperimentConfig:
    """Built-in configuration profiles shipped with the package."""
    text = resources.files("tamlab").joinpath("profiles", f"{name}.json").read_text()
    return ExperimentConfig.from_dict(json.loads(text))
