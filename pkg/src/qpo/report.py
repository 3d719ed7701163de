"""Cross-seed summaries and on-disk run artifacts."""

from __future__ import annotations

import csv
import json
import math
import os
from collections import defaultdict

import numpy as np

from .loop import CampaignState
from .metrics import MetricSnapshot, mean_sem


def metric_columns(snap: MetricSnapshot) -> dict:
    """Flatten a snapshot into ``{column: value}``."""
    out = {}
    for k, v in sorted(snap.top_k_avg.items(), key=lambda kv: int(kv[0])):
        out[f"top{k}_avg"] = v
    for p, v in sorted(snap.fraction_top.items(), key=lambda kv: float(kv[0])):
        out[f"frac_top_{_pct(p)}"] = v
    out["simple_regret"] = snap.simple_regret
    out["cumulative_regret"] = snap.cumulative_regret
    return out


def _pct(p) -> str:
    return f"{float(p) * 100:g}pct"


def state_curves(state: CampaignState) -> list[dict]:
    """Per-iteration flattened metrics, iteration 0 being the seed batch."""
    rows = [dict(iteration=0, **metric_columns(state.seed_metrics or MetricSnapshot()))]
    for rec in state.records:
        rows.append(dict(iteration=rec.iteration, **metric_columns(rec.metrics)))
    return rows


def summarize(states: dict) -> list[dict]:
    """Mean and SEM per (label, iteration, metric) across seeds.

    ``states`` maps a label (policy or variant) to a list of campaign states.
    """
    rows = []
    for label, group in states.items():
        per_iter = defaultdict(lambda: defaultdict(list))
        for st in group:
            for row in state_curves(st):
                for key, v in row.items():
                    if key != "iteration":
                        per_iter[row["iteration"]][key].append(v)
        for it in sorted(per_iter):
            out = {"label": label, "iteration": it, "seeds": len(group)}
            for key, vals in per_iter[it].items():
                m, s = mean_sem(vals)
                out[f"{key}_mean"] = m
                out[f"{key}_sem"] = s
            rows.append(out)
    return rows


def write_table(rows: list[dict], path: str) -> None:
    """Tab-separated table; columns are the union of row keys in first-seen order."""
    cols: list[str] = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in cols])


def write_jsonl(rows: list[dict], path: str) -> None:
    with open(path, "w") as fh:
        for r in rows:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return v


def write_campaign(state: CampaignState, log_dir: str, name: str) -> str:
    path = os.path.join(log_dir, f"{name}.jsonl")
    with open(path, "w") as fh:
        fh.write("\n".join(state.log_lines()) + "\n")
    return path


def comparison_rows(summary: list[dict], metrics: list[str]) -> list[dict]:
    """Pivot a summary so each label's mean and SEM sit side by side per iteration."""
    by_iter = defaultdict(dict)
    labels = []
    for r in summary:
        if r["label"] not in labels:
            labels.append(r["label"])
        for m in metrics:
            by_iter[r["iteration"]][f"{r['label']}:{m}_mean"] = r.get(f"{m}_mean", np.nan)
            by_iter[r["iteration"]][f"{r['label']}:{m}_sem"] = r.get(f"{m}_sem", np.nan)
    return [dict(iteration=it, **by_iter[it]) for it in sorted(by_iter)]
