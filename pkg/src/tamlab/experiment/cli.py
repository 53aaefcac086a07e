"""``tamlab`` command line: data generation, training, evaluation and reports."""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from fractions import Fraction
from pathlib import Path

import numpy as np

from ..complexity import ALGORITHMS, energy_report, fpo_algorithm, fpo_report
from ..nam.metrics import evaluate
from ..nam.model import NamModel
from ..nam.training import TrainingDiverged
from . import report as rep
from .config import ExperimentConfig, profile
from .dataset import DatasetFile
from .pipeline import generate_dataset, run_heuristics, split_of_drops, train_phase

log = logging.getLogger("tamlab")

EXIT_INVARIANT = 3
EXIT_DIVERGED = 4
PHASES = ("symmetric", "asymmetric")


def load_config(spec: str | None, seed: int | None) -> ExperimentConfig:
    """``spec`` is a JSON path or the name of a built-in profile."""
    if spec is None:
        cfg = profile("desk")
    elif Path(spec).is_file():
        cfg = ExperimentConfig.load(spec)
    else:
        cfg = profile(spec)
    return cfg if seed is None else cfg.with_seed(seed)


def _out(args, cfg) -> Path:
    out = Path(args.out) if args.out else Path("runs") / cfg.name
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_data(args, cfg, out: Path) -> int:
    ds = generate_dataset(cfg)
    ds.save(out / "dataset.bin")
    (out / "config.json").write_text(cfg.dumps() + "\n")
    counts = np.bincount(ds.labels, minlength=cfg.n_classes)
    log.info("wrote %d samples, label counts %s, infeasible %d", len(ds), counts.tolist(),
             int(ds.records["infeasible"].sum()))
    return 0


def _dataset(out: Path, cfg) -> DatasetFile:
    ds = DatasetFile.load(out / "dataset.bin")
    if ds.header["config_hash"] != cfg.config_hash():
        log.warning("dataset was generated under config %s, current config is %s",
                    ds.header["config_hash"], cfg.config_hash())
    return ds


def cmd_train(args, cfg, out: Path) -> int:
    ds = _dataset(out, cfg)
    init = None
    if args.phase == "asymmetric":
        ckpt = Path(args.init or out / "nam_symmetric.json")
        if not ckpt.exists():
            log.error("asymmetric phase needs a symmetric checkpoint (%s missing)", ckpt)
            return 1
        init = NamModel.load(ckpt)
    try:
        model, hist = train_phase(cfg, ds, args.phase, init)
    except TrainingDiverged as e:
        log.error("training diverged: %s", e)
        return EXIT_DIVERGED
    model.save(out / f"nam_{args.phase}.json")
    rows = [{"epoch": i + 1, "train_loss": t, "val_loss": hist.val_loss[i] if hist.val_loss else ""}
            for i, t in enumerate(hist.train_loss)]
    rep.write_csv(out / f"history_{args.phase}.csv", rows, cfg)
    return 0


def cmd_eval(args, cfg, out: Path) -> int:
    ds = _dataset(out, cfg)
    incl = not cfg.nam.exclude_infeasible
    results, table = {}, []
    for phase in PHASES:
        path = out / f"nam_{phase}.json"
        if not path.exists():
            continue
        model = NamModel.load(path)
        results[phase] = {}
        for split in ("train", "test"):
            X, y = ds.split(split, incl)
            if len(y) == 0:
                continue
            m = evaluate(model, X, y)
            results[phase][split] = m.to_dict()
            table.append({"phase": phase, "split": split, "n": m.n,
                          "accuracy": m.accuracy, "qos_guarantee": m.qos_guarantee})
            if split == "test":
                rep.write_csv(out / f"confusion_{phase}.csv", rep.confusion_rows(m.confusion), cfg)
    if not results:
        log.error("no trained checkpoints in %s", out)
        return 1
    rep.write_json(out / "metrics.json", {"metrics": results}, cfg)
    rep.write_csv(out / "nam_table.csv", table, cfg)
    for r in table:
        log.info("%-10s %-5s acc %.4f qos %.4f (n=%d)", r["phase"], r["split"], r["accuracy"],
                 r["qos_guarantee"], r["n"])
    return 0


def _drops(args, cfg):
    if args.drops == "all":
        return None
    split = split_of_drops(cfg)
    return [int(d) for d in np.flatnonzero(split == {"train": 0, "val": 1, "test": 2}[args.drops])]


def cmd_run_heuristics(args, cfg, out: Path) -> int:
    model = None
    if args.with_nam:
        model = NamModel.load(out / f"nam_{args.with_nam}.json")
    run = run_heuristics(cfg, _drops(args, cfg), solvers=args.solvers, model=model)
    rep.write_csv(out / "heuristics.csv", run.rows, cfg)
    if run.violations:
        (out / "violations.txt").write_text("\n".join(run.violations) + "\n")
        for v in run.violations[:20]:
            log.error("invariant violated: %s", v)
        return EXIT_INVARIANT
    return 0


def cmd_complexity(args, cfg, out: Path) -> int:
    g = cfg.array
    K = cfg.scheduler.k_max
    N_k = cfg.channel_params.n_rx
    L_k = cfg.txrx.n_streams
    n_prb = args.n_prb if args.n_prb is not None else cfg.txrx.reference_prb
    doc = fpo_report(cfg.architecture(), g, K, N_k, L_k, n_prb, args.mode)
    doc["parameters"]["n_prb"] = n_prb

    heur = out / "heuristics.csv"
    if heur.exists():
        # instrumented counts were charged at the simulated bandwidth
        rows = rep.read_csv(heur)
        measured = {}
        for a in ALGORITHMS:
            rs = [r for r in rows if r["solver"] == a]
            if not rs:
                continue
            measured[a] = {"instrumented_mean": float(np.mean([float(r["fpo"]) for r in rs])),
                           "analytic_from_distribution": float(analytic_from_rows(a, rs, cfg)),
                           "slots": len(rs)}
        doc["instrumented"] = {"n_prb": cfg.channel.n_prb, "algorithms": measured}
    rep.write_json(out / "complexity.json", doc, cfg)
    rows = [{"algorithm": a, "fpo": float(v)} for a, v in doc["algorithms"].items()]
    rows.append({"algorithm": "nn", "fpo": float(doc["nn"]["total"])})
    rep.write_csv(out / "fpo.csv", rows, cfg)
    for r in rows:
        log.info("%-13s %.4g FPOs", r["algorithm"], r["fpo"])
    return 0


def analytic_from_rows(algorithm: str, rows: list[dict], cfg):
    """Expected FPOs from the observed outcome distribution, grouped by user count."""
    g = cfg.array
    total = 0
    for k in sorted({int(r["n_users"]) for r in rows}):
        grp = [r for r in rows if int(r["n_users"]) == k]
        if algorithm == "fixed_column":
            probs = np.bincount([int(r["class_index"]) for r in grp], minlength=g.m_col)
        else:
            probs = np.bincount([int(r["active_elements"]) // 2 - 1 for r in grp], minlength=g.per_pol)
        cost = fpo_algorithm(algorithm, g, k, cfg.channel_params.n_rx, cfg.txrx.n_streams,
                             cfg.channel.n_prb, class_probs=[int(p) for p in probs])
        total += cost * Fraction(len(grp), len(rows))
    return total


def cmd_report(args, cfg, out: Path) -> int:
    heur = out / "heuristics.csv"
    if not heur.exists():
        log.error("run `tamlab run-heuristics` first (%s missing)", heur)
        return 1
    tables = rep.heuristic_tables(rep.read_csv(heur))
    rep.write_csv(out / "summary.csv", tables["summary"], cfg)
    rep.write_csv(out / "active_cdf.csv", tables["active_cdf"], cfg)
    rep.write_csv(out / "se_cdf.csv", tables["se_cdf"], cfg)
    by: dict = {}
    for r in rep.read_csv(heur):
        by.setdefault(r["solver"], []).append(int(r["active_elements"]))
    energy = {}
    with warnings.catch_warnings():
        # the placeholder power model is reported as such in the JSON
        warnings.simplefilter("ignore")
        for name, counts in by.items():
            e = energy_report(counts, cfg.array)
            e.pop("cdf")
            energy[name] = e
    rep.write_json(out / "energy.json", {"energy": energy, "note": "placeholder power model"}, cfg)
    for s in tables["summary"]:
        log.info("%-13s active %.2f feasible %.3f se %.3f", s["solver"], s["mean_active"],
                 s["feasible_fraction"], s["mean_user_se"])
    return 0


def cmd_all(args, cfg, out: Path) -> int:
    for step in (cmd_gen_data,):
        rc = step(args, cfg, out)
        if rc:
            return rc
    for phase in PHASES:
        args.phase, args.init = phase, None
        rc = cmd_train(args, cfg, out)
        if rc:
            return rc
    for step in (cmd_eval, cmd_run_heuristics, cmd_complexity, cmd_report):
        rc = step(args, cfg, out)
        if rc:
            return rc
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config JSON path or built-in profile name (desk, acceptance, paper)")
    common.add_argument("--seed", type=int, help="override all seeds from one value")
    common.add_argument("--out", help="artifact directory (default: runs/<config name>)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="tamlab", description="Transmit antenna muting experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", parents=[common], help="generate and label the dataset")
    t = sub.add_parser("train", parents=[common], help="train one classifier phase")
    t.add_argument("--phase", choices=PHASES, required=True)
    t.add_argument("--init", help="checkpoint to fine-tune (asymmetric phase)")
    sub.add_parser("eval", parents=[common], help="accuracy, QoS guarantee and confusion")
    for name in ("run-heuristics", "all"):
        h = sub.add_parser(name, parents=[common],
                           help="run the muting solvers" if name == "run-heuristics" else "every stage in order")
        h.add_argument("--drops", choices=("test", "val", "train", "all"), default="test")
        h.add_argument("--solvers", nargs="+", choices=tuple(ALGORITHMS), default=list(ALGORITHMS))
        h.add_argument("--with-nam", choices=PHASES, default=None if name == "run-heuristics" else "asymmetric")
        h.add_argument("--mode", choices=("paper", "corrected"), default="paper")
        h.add_argument("--n-prb", type=int)
    c = sub.add_parser("complexity-report", parents=[common], help="analytic and instrumented FPOs")
    c.add_argument("--mode", choices=("paper", "corrected"), default="paper")
    c.add_argument("--n-prb", type=int, help="PRBs for the analytic counts (default: reference band)")
    sub.add_parser("report", parents=[common], help="summary tables, CDFs and energy")
    return p


COMMANDS = {
    "gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval,
    "run-heuristics": cmd_run_heuristics, "complexity-report": cmd_complexity,
    "report": cmd_report, "all": cmd_all,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.seed)
    except (OSError, KeyError, ValueError, TypeError) as e:
        log.error("bad configuration: %s", e)
        return 2
    out = _out(args, cfg)
    return COMMANDS[args.command](args, cfg, out)


if __name__ == "__main__":
    sys.exit(main())
