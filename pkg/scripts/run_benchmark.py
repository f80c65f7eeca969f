"""Closed-loop benchmark: every profile over the same seeds on one scenario.

Writes summary.csv and per-profile metrics CSVs, then prints paired
bootstrap intervals for the risk, speed and freeze-time differences.

    python3 scripts/run_benchmark.py --runs 100 --out bench_out
"""

import argparse
import time
from pathlib import Path

import numpy as np

from pedrisk.config import bundled_config, read_config
from pedrisk.planner import PROFILES
from pedrisk.scenario import bundled_scenario, read_scenario
from pedrisk.simloop import atomic_write, batch, metrics_csv, summarize, summary_csv


def paired_ci(a, b, n_boot=10_000, seed=0):
    d = np.asarray(a, float) - np.asarray(b, float)
    idx = np.random.default_rng(seed).integers(0, len(d), size=(n_boot, len(d)))
    means = d[idx].mean(axis=1)
    return d.mean(), np.quantile(means, 0.025), np.quantile(means, 0.975)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default="straight_road")
    ap.add_argument("--config")
    ap.add_argument("--runs", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0, help="master seed")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--policy-cache")
    ap.add_argument("--out", default="bench_out")
    args = ap.parse_args()

    path = Path(args.scenario)
    scenario = read_scenario(path) if path.exists() else bundled_scenario(args.scenario)
    cfg = read_config(args.config) if args.config else bundled_config(path.stem)
    cfg = cfg.with_overrides(seed=args.seed)

    t0 = time.perf_counter()
    res = batch(scenario, cfg, args.runs, profiles=list(PROFILES), jobs=args.jobs, cache_dir=args.policy_cache)
    elapsed = time.perf_counter() - t0

    out = Path(args.out)
    rows = summarize(res)
    atomic_write(out / "summary.csv", summary_csv(rows))
    for prof, runs in res.items():
        atomic_write(out / f"metrics_{prof}.csv", metrics_csv(runs))
    print(summary_csv(rows), end="")

    def col(prof, name):
        return [getattr(m, name) for _, m, _, _ in res[prof]]

    for label, a, b, name in (("risk  aggressive - risk_aware", "aggressive", "risk_aware", "r_mean"),
                              ("speed risk_aware - baseline", "risk_aware", "baseline", "v_mean"),
                              ("speed aggressive - risk_aware", "aggressive", "risk_aware", "v_mean"),
                              ("freeze baseline - risk_aware", "baseline", "risk_aware", "freeze_time")):
        d, lo, hi = paired_ci(col(a, name), col(b, name))
        print(f"{label}: {d:+.4f} [{lo:+.4f}, {hi:+.4f}]")
    print(f"{args.runs} seeds x {len(PROFILES)} profiles in {elapsed:.0f}s")


if __name__ == "__main__":
    main()
