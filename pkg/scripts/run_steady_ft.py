"""Fluctuation-theorem run for a dot in the steady state.

Writes summary.json, histograms and convergence traces, then prints the
estimators at a few trajectory counts.

    python3 scripts/run_steady_ft.py --config configs/steady_ft_desk.ini --out out/ft
"""
import argparse
from pathlib import Path

from mesoleads.harness.config import load_config
from mesoleads.harness.experiments import ENTROPIES, run_steady_ft
from mesoleads.harness.report import write_steady

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "steady_ft_desk.ini")
    ap.add_argument("--trajectories", type=int)
    ap.add_argument("--workers", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", type=Path, default=Path("out/steady_ft"))
    args = ap.parse_args()

    cfg = load_config(args.config).with_run(
        trajectories=args.trajectories, workers=args.workers, seed=args.seed)
    stats, report = run_steady_ft(cfg)
    write_steady(args.out, stats, report, cfg.run.bins)

    print(f"L={cfg.lead.L}, {stats.count} trajectories -> {args.out}")
    print(f"{'n':>7s}  " + "  ".join(f"{q:>22s}" for q in ENTROPIES))
    traces = {q: stats.convergence(q) for q in ENTROPIES}
    n_values = traces[ENTROPIES[0]][:, 0]
    for n in (100, 1000, 5000, 10000, 30000):
        if n > n_values[-1]:
            break
        row = []
        for q in ENTROPIES:
            t = traces[q]
            j = min(int((t[:, 0] <= n).sum()) - 1, len(t) - 1)
            row.append(f"{t[j, 1]:.4f} +- {t[j, 2]:.4f}".rjust(22))
        print(f"{n:7d}  " + "  ".join(row))


if __name__ == "__main__":
    main()
