"""Dataset generation and heuristic evaluation over seeded drops."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..channel import channel_covariance, generate_drop, per_pol_avg_covariance, schedule_users
from ..nam.features import featurize, full_array_precoders
from ..nam.model import NamModel
from ..nam.training import train
from ..tam import SOLVERS, AntennaMask, TamProblem, class_to_mask, fixed_column_tam
from .config import ExperimentConfig
from .dataset import VERSION, DatasetFile, record_dtype

log = logging.getLogger(__name__)


@dataclass
class SlotInstance:
    drop: int
    slot: int
    users: list
    problem: TamProblem


def drop_seed(config: ExperimentConfig, drop: int) -> int:
    return config.seeds.channel * 1_000_003 + drop


def split_of_drops(config: ExperimentConfig) -> np.ndarray:
    """Split index (0 train, 1 val, 2 test) per drop; whole drops never straddle splits."""
    n = config.dataset.drops
    order = np.random.default_rng(config.seeds.split).permutation(n)
    f_train, f_val, _ = config.dataset.split
    n_train = int(round(f_train * n))
    n_val = int(round(f_val * n))
    split = np.empty(n, dtype=np.uint8)
    split[order[:n_train]] = 0
    split[order[n_train:n_train + n_val]] = 1
    split[order[n_train + n_val:]] = 2
    return split


def slot_instance(config: ExperimentConfig, drop: int, slot: int) -> SlotInstance:
    """Channel draw, scheduling and the muting problem of one slot."""
    g = config.array
    ch = config.channel
    cs = generate_drop(g, ch.j_users, ch.n_prb, ch.paths_per_user, drop_seed(config, drop),
                       slot=slot, params=config.channel_params)
    covs = [per_pol_avg_covariance(channel_covariance(Hk), g) for Hk in cs.H]
    users = schedule_users(cs, covs, config.scheduler.k_max, config.scheduler.corr_threshold)
    problem = TamProblem(cs.H[users], g, config.link(), config.r_min, config.tam.m_min)
    return SlotInstance(drop=drop, slot=slot, users=users, problem=problem)


def iter_slots(config: ExperimentConfig, drops=None):
    drops = range(config.dataset.drops) if drops is None else drops
    for d in drops:
        for s in range(config.dataset.slots_per_drop):
            yield slot_instance(config, int(d), s)


def generate_dataset(config: ExperimentConfig, drops=None) -> DatasetFile:
    """Label every slot with the smallest feasible column class and featurize it."""
    g = config.array
    K = config.scheduler.k_max
    split = split_of_drops(config)
    n_total = (config.dataset.drops if drops is None else len(drops)) * config.dataset.slots_per_drop
    recs = np.zeros(n_total, dtype=record_dtype(g.per_pol, K))
    for i, inst in enumerate(iter_slots(config, drops)):
        y, sol = fixed_column_tam(inst.problem)
        H = inst.problem.H
        X = featurize(H, full_array_precoders(H, inst.problem.link, g), g, K)
        recs[i] = (inst.drop, inst.slot, len(inst.users), y, 0 if sol.feasible else 1,
                   split[inst.drop], X.astype(np.float32))
    header = {
        "version": VERSION,
        "config_hash": config.config_hash(),
        "config_name": config.name,
        "seeds": config.seeds_tag(),
        "geometry": config.geometry,
        "geometry_per_pol": g.per_pol,
        "K": K,
        "N": config.n_classes,
        "count": n_total,
        "label_rule": "fixed_column",
    }
    return DatasetFile(header=header, records=recs)


@dataclass
class HeuristicRun:
    rows: list = field(default_factory=list)
    solutions: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)


def _check(inst: SlotInstance, name: str, sol, run: HeuristicRun):
    """Invariants every solver output must satisfy."""
    p = inst.problem
    where = f"drop {inst.drop} slot {inst.slot} {name}"
    if sol.mask.active_elements != 2 * sol.mask.popcount:
        run.violations.append(f"{where}: active count is not twice the popcount")
    if sol.feasible:
        # re-derive feasibility on a fresh problem so cached state cannot mask errors
        fresh = TamProblem(p.H, p.geometry, p.link, p.r_min, p.m_min)
        ok, _ = fresh.is_feasible(sol.mask)
        if not ok:
            run.violations.append(f"{where}: reported feasible mask fails the rate check")
    elif sol.mask != AntennaMask.full(p.geometry) and name != "nam":
        run.violations.append(f"{where}: infeasible outcome must fall back to the full array")


def run_heuristics(config: ExperimentConfig, drops=None, solvers=("greedy", "sequential", "fixed_column"),
                   model=None, check_invariants: bool = True) -> HeuristicRun:
    """Run the muting heuristics (and optionally a trained classifier) per slot.

    Returns per-slot rows with active elements, feasibility, FPOs and the
    mean per-PRB spectral efficiency of every scheduled user.
    """
    g = config.array
    K = config.scheduler.k_max
    run = HeuristicRun()
    names = list(solvers) + (["nam"] if model is not None else [])
    for name in names:
        run.solutions[name] = []
    for inst in iter_slots(config, drops):
        p = inst.problem
        for name in solvers:
            sol = SOLVERS[name](p)
            if check_invariants:
                _check(inst, name, sol, run)
            run.solutions[name].append(sol)
            run.rows.append(_row(inst, name, sol))
        if model is not None:
            X = featurize(p.H, full_array_precoders(p.H, p.link, g), g, K)
            y = int(model.predict(X[None])[0])
            p.reset_counters()
            mask = class_to_mask(y, g)
            ok, rates = p.is_feasible(mask)
            sol = p._solution(mask, rates, ok, "nam", class_index=y)
            sol.fpo_consumed = 0.0
            sol.evaluated_popcounts = []
            if check_invariants:
                _check(inst, "nam", sol, run)
            run.solutions["nam"].append(sol)
            run.rows.append(_row(inst, "nam", sol))
    return run


def _row(inst: SlotInstance, name: str, sol) -> dict:
    return {
        "drop": inst.drop,
        "slot": inst.slot,
        "solver": name,
        "n_users": len(inst.users),
        "active_elements": sol.active_elements,
        "feasible": int(sol.feasible),
        "class_index": "" if sol.class_index is None else sol.class_index,
        "evaluations": len(sol.evaluated_popcounts),
        "fpo": float(sol.fpo_consumed),
        "mean_se": ";".join(repr(round(r.mean_se, 9)) for r in sol.rates),
        "min_rate": repr(round(float(min(r.rate for r in sol.rates)), 6)),
    }


def monotone_class_violations(config: ExperimentConfig, drops=None) -> tuple[int, int]:
    """Count slots where a larger column class is infeasible although a smaller one is feasible."""
    g = config.array
    bad = total = 0
    for inst in iter_slots(config, drops):
        feas = [inst.problem.is_feasible(class_to_mask(y, g))[0] for y in range(config.n_classes)]
        total += 1
        first = next((y for y, f in enumerate(feas) if f), None)
        if first is not None and not all(feas[first:]):
            bad += 1
    return bad, total


def new_model(config: ExperimentConfig, dataset: DatasetFile):
    g = config.array
    model = NamModel((g.per_pol, 4, config.scheduler.k_max), config.n_classes,
                     config.architecture(), seed=config.seeds.nam)
    model.provenance.update({"config_hash": config.config_hash(), "seeds": config.seeds_tag(),
                             "dataset_hash": dataset.header["config_hash"]})
    return model


def train_phase(config: ExperimentConfig, dataset: DatasetFile, phase: str, model=None):
    """Train one phase; the asymmetric phase fine-tunes ``model`` (a copy is made)."""
    incl = not config.nam.exclude_infeasible
    Xt, yt = dataset.split("train", incl)
    Xv, yv = dataset.split("val", incl)
    if model is None:
        if phase == "asymmetric":
            raise ValueError("the asymmetric phase needs a symmetric checkpoint to start from")
        model = new_model(config, dataset)
    else:
        model = model.copy()
    tc = config.train_config(phase)
    return train(model, Xt, yt, Xv, yv, phase=phase, loss_config=config.loss_config(), config=tc)
