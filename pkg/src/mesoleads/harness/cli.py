"""Command-line entry point: ``mesoleads <subcommand> --config file.ini``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .checks import oracle_check
from .config import ExperimentConfig, load_config
from .experiments import run_erasure, run_steady_ft, unconditional_report
from .report import write_erasure, write_steady, write_summary


def _bins(text: str):
    return text if text == "auto" else int(text)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mesoleads", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("steady-ft", "fluctuation theorems for a dot in the steady state"),
        ("erasure", "heat statistics of bit erasure over a grid of durations"),
        ("unconditional", "ensemble-averaged currents and heats without sampling"),
        ("oracle-check", "compare against the dense many-body model on a small lead"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", type=Path, help="INI file with [system] [lead] [protocol] [run]")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--trajectories", type=int, help="number of trajectories")
        p.add_argument("--workers", type=int, help="worker processes")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--emit-events", action="store_true", help="write per-trajectory jump records")
        p.add_argument("--bins", type=_bins, help="histogram bin count or 'auto'")
    return ap


def _config(args, kind: str | None) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if kind is not None and args.config is None:
        cfg = cfg.with_protocol(kind=kind)
    return cfg.with_run(
        seed=args.seed, trajectories=args.trajectories, workers=args.workers, bins=args.bins,
        emit_events=True if args.emit_events else None,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out: Path = args.out
    if args.command == "steady-ft":
        cfg = _config(args, "steady")
        stats, report = run_steady_ft(cfg)
        write_steady(out, stats, report, cfg.run.bins)
        _print_steady(report)
    elif args.command == "erasure":
        cfg = _config(args, "erasure")
        all_stats, report = run_erasure(cfg)
        write_erasure(out, all_stats, report, cfg.run.bins)
        _print_erasure(report)
    elif args.command == "unconditional":
        cfg = _config(args, None)
        out.mkdir(parents=True, exist_ok=True)
        report = unconditional_report(cfg)
        write_summary(out, report)
        print(json.dumps(report.get("steady_state", report.get("protocols")), indent=2, sort_keys=True))
    else:
        cfg = _config(args, None)
        out.mkdir(parents=True, exist_ok=True)
        report = oracle_check(cfg)
        write_summary(out, report)
        print(f"unconditional max error {report['unconditional_error']:.3g}")
        for t in report["trajectories"]:
            print(f"trajectory {t['index']}: jumps {t['jumps']}, records match {t['records_match']}, "
                  f"covariance error {t['covariance_error']:.3g}")
        print("PASS" if report["passed"] else "FAIL")
        return 0 if report["passed"] else 1
    return 0


def _print_steady(report: dict) -> None:
    print(f"{report['trajectories']} trajectories, floored {report['counters'].get('floored', 0)}")
    for q, d in sorted(report["quantities"].items()):
        line = f"{q:>20s}  mean {d['mean']: .6g} +- {d['sem']:.3g}"
        if "ift_mean_exp" in d:
            line += f"   <exp(-S)> {d['ift_mean_exp']:.5f} +- {d['ift_se']:.5f}"
        print(line)


def _print_erasure(report: dict) -> None:
    print(f"T log 2 = {report['landauer_bound']:.7g}")
    for label, e in report["protocols"].items():
        u = e["unconditional"]
        q = e.get("quantities", {}).get("dissipated_heat")
        line = f"Gamma_max tau = {e['gamma_max_tau']:g}: fidelity {u['fidelity']:.5f}, -<Q> exact {-u['heat']:.6g}"
        if q:
            line += f", sampled {q['mean']:.6g} +- {q['sem']:.3g}, variance {q['variance']:.4g}"
        print(line)


if __name__ == "__main__":
    sys.exit(main())
