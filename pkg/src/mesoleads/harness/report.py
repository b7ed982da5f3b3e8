"""Deterministic file output: summary, histograms, convergence traces and events.

Floats are written with 17 significant digits, so identical inputs give
byte-identical files.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .experiments import ENTROPIES
from .stats import EnsembleStats


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _clean(obj):
    # JSON has no NaN or infinity
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def write_summary(out: Path, report: dict) -> Path:
    path = Path(out) / "summary.json"
    path.write_text(json.dumps(_clean(report), sort_keys=True, indent=2) + "\n")
    return path


def write_histogram(out: Path, name: str, stats: EnsembleStats, q: str, bins) -> dict:
    edges, counts = stats.histogram(q, bins)
    lines = ["bin_left,bin_right,count"]
    lines += [f"{_fmt(a)},{_fmt(b)},{int(c)}" for a, b, c in zip(edges[:-1], edges[1:], counts)]
    (Path(out) / f"hist_{name}.csv").write_text("\n".join(lines) + "\n")
    return {"bins": int(counts.size), "bin_width": float(edges[1] - edges[0]),
            "rule": "freedman-diaconis" if bins == "auto" else "fixed-count"}


def write_convergence(out: Path, name: str, stats: EnsembleStats, q: str) -> None:
    rows = stats.convergence(q)
    lines = ["n,estimator,se"]
    lines += [f"{int(n)},{_fmt(m)},{_fmt(se)}" for n, m, se in rows]
    (Path(out) / f"convergence_{name}.csv").write_text("\n".join(lines) + "\n")


def write_events(out: Path, stats: EnsembleStats, prefix: str = "") -> None:
    for i, (t, k, s) in sorted(stats.records.items()):
        lines = ["t,mode,sigma"]
        lines += [f"{_fmt(a)},{int(b)},{int(c)}" for a, b, c in zip(t, k, s)]
        (Path(out) / f"events_{prefix}{i}.csv").write_text("\n".join(lines) + "\n")


def write_steady(out, stats: EnsembleStats, report: dict, bins="auto") -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    meta = {}
    if stats.count:
        for q in ENTROPIES:
            meta[q] = write_histogram(out, q, stats, q, bins)
            write_convergence(out, q, stats, q)
        meta["heat"] = write_histogram(out, "heat", stats, "heat", bins)
    write_events(out, stats)
    write_summary(out, {**report, "histograms": meta})


def write_erasure(out, all_stats: dict, report: dict, bins="auto") -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    meta = {}
    for label, stats in all_stats.items():
        if stats.count:
            meta[label] = write_histogram(out, f"dissipated_heat_{label}", stats, "dissipated_heat", bins)
        write_events(out, stats, prefix=f"{label}_")
    write_summary(out, {**report, "histograms": meta})
