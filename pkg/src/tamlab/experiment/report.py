"""CSV/JSON artifacts. Every file records the config hash and seeds."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from ..cdf import empirical_cdf


def _provenance(config) -> dict:
    return {"config_hash": config.config_hash(), "config_name": config.name, "seeds": config.seeds_tag()}


def write_json(path, payload: dict, config):
    doc = {"provenance": _provenance(config), **payload}
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2, default=_plain) + "\n")


def _plain(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    return str(o)


def write_csv(path, rows: list[dict], config, columns=None):
    """CSV with a ``#``-prefixed provenance line before the header row."""
    columns = columns or (list(rows[0]) if rows else [])
    buf = io.StringIO()
    p = _provenance(config)
    buf.write(f"# config_hash={p['config_hash']} config={p['config_name']} seeds={p['seeds']}\n")
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _cell(r[k]) for k in columns})
    Path(path).write_text(buf.getvalue())


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    return v


def read_csv(path) -> list[dict]:
    with open(path) as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def cdf_rows(values_by_name: dict) -> list[dict]:
    rows = []
    for name, values in values_by_name.items():
        rows.extend({"series": name, "value": x, "cdf": f} for x, f in empirical_cdf(values))
    return rows


def heuristic_tables(rows: list[dict]) -> dict:
    """Per-solver summaries and CDF rows derived from the heuristics CSV."""
    by: dict = {}
    for r in rows:
        by.setdefault(r["solver"], []).append(r)
    summary, active, se = [], {}, {}
    for name, rs in by.items():
        act = [int(r["active_elements"]) for r in rs]
        feas = [int(r["feasible"]) for r in rs]
        fpo = [float(r["fpo"]) for r in rs]
        user_se = [float(v) for r in rs for v in str(r["mean_se"]).split(";") if v != ""]
        active[name] = act
        se[name] = user_se
        summary.append({
            "solver": name, "slots": len(rs), "mean_active": float(np.mean(act)),
            "feasible_fraction": float(np.mean(feas)), "mean_fpo": float(np.mean(fpo)),
            "mean_user_se": float(np.mean(user_se)),
        })
    return {"summary": summary, "active_cdf": cdf_rows(active), "se_cdf": cdf_rows(se)}


def confusion_rows(confusion) -> list[dict]:
    conf = np.asarray(confusion)
    return [{"true_class": i, **{f"pred_{j}": float(conf[i, j]) for j in range(conf.shape[1])}}
            for i in range(conf.shape[0])]
