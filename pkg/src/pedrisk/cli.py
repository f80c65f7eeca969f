"""Command-line entry point: ``pedrisk {policy,run,batch,risk-check,render}``.

Exit codes: 0 success, 1 configuration or input error (or a failed
risk check), 2 a simulated collision occurred.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .config import ConfigError, RunConfig, bundled_config, read_config, with_profile
from .planner import PROFILES
from .policy import cached_policy
from .prediction import GaussianState
from .render import render_speed_profile, render_tick
from .risk import EgoBox, bvn_cdf, collision_probability, mc_collision_probability
from .scenario import ScenarioError, bundled_scenario, rasterize, read_scenario
from .simloop import Environment, atomic_write, batch, metrics_csv, run, summarize, summary_csv

EXIT_OK, EXIT_ERROR, EXIT_COLLISION = 0, 1, 2
DATA_DIR = Path(__file__).parent / "data"


class InputError(Exception):
    pass


def _load_scenario(name: str):
    path = Path(name)
    if path.exists():
        return read_scenario(path)
    if (DATA_DIR / f"{name}.json").exists():
        return bundled_scenario(name)
    raise InputError(f"--scenario: no file or bundled fixture named {name!r}")


def _load_config(args) -> RunConfig:
    if args.config:
        cfg = read_config(args.config)
    elif (DATA_DIR / f"{Path(args.scenario).stem}.config.json").exists():
        cfg = bundled_config(Path(args.scenario).stem)
    else:
        cfg = RunConfig()
    if getattr(args, "profile", None):
        cfg = with_profile(cfg, args.profile)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    return cfg


def _point(text: str) -> tuple[float, float]:
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected X,Y, got {text!r}") from None
    return x, y


# ---------------------------------------------------------------------------
# subcommands


def cmd_policy(args) -> int:
    scenario = _load_scenario(args.scenario)
    cfg = _load_config(args)
    cell = args.cell_size or cfg.cell_size
    grid = rasterize(scenario, cell, cfg.region_costs)
    goals = args.goal or list(scenario.goals)
    if not goals:
        raise InputError("policy: scenario has no goals; pass --goal X,Y")
    out = Path(args.out or args.policy_cache or "policy_cache")
    for g in goals:
        t0 = time.perf_counter()
        field_, hit = cached_policy(grid, g, args.n, None, out)
        dt = time.perf_counter() - t0
        status = "hit" if hit else "built"
        timing = "" if args.deterministic else f" {dt:.3f}s"
        print(f"goal ({g[0]:g},{g[1]:g}) {status} iterations={field_.iterations}{timing}")
    return EXIT_OK


def cmd_run(args) -> int:
    scenario = _load_scenario(args.scenario)
    cfg = _load_config(args)
    env = Environment(scenario, cfg, args.policy_cache)
    res = run(scenario, cfg, env=env)
    out = Path(args.out or "run_out")
    atomic_write(out / "trace.ndjson", res.trace_text())
    atomic_write(out / "metrics.csv", metrics_csv([(cfg.seed, res.metrics, res.termination)]))
    m = res.metrics
    print(f"{cfg.profile} seed={cfg.seed} termination={res.termination} ticks={m.ticks} "
          f"v_mean={m.v_mean:.3f} r_max={m.r_max:.4f} collisions={m.collisions}")
    return EXIT_COLLISION if m.collisions else EXIT_OK


def cmd_batch(args) -> int:
    scenario = _load_scenario(args.scenario)
    cfg = _load_config(args)
    profiles = [args.profile] if args.profile else list(PROFILES)
    t0 = time.perf_counter()
    res = batch(scenario, cfg, args.runs, profiles=profiles, jobs=args.jobs, cache_dir=args.policy_cache)
    out = Path(args.out or "batch_out")
    rows = summarize(res)
    atomic_write(out / "summary.csv", summary_csv(rows))
    for prof, runs in res.items():
        atomic_write(out / f"metrics_{prof}.csv", metrics_csv(runs))
    for r in rows:
        print(f"{r['profile']}: runs={r['runs']} v_mean={r['v_mean']:.3f} risk_mean={r['risk_mean']:.4f} "
              f"risk_max={r['risk_max']:.4f} collisions={r['collisions']} freeze={r['freeze_time']:.2f}s")
    if not args.deterministic:
        print(f"elapsed {time.perf_counter() - t0:.1f}s")
    return EXIT_COLLISION if any(r["collisions"] for r in rows) else EXIT_OK


def random_box_case(rng: np.random.Generator):
    """A random Gaussian and oriented box with non-trivial overlap."""
    sx, sy = rng.uniform(0.2, 2.0, size=2)
    rho = rng.uniform(-0.95, 0.95)
    cov = np.array([[sx * sx, rho * sx * sy], [rho * sx * sy, sy * sy]])
    mean = rng.uniform(-2.0, 2.0, size=2)
    box = EgoBox(tuple(rng.uniform(-1.0, 1.0, size=2)), float(rng.uniform(-math.pi, math.pi)),
                 float(rng.uniform(0.3, 3.0)), float(rng.uniform(0.2, 1.5)), float(rng.uniform(0.0, 0.3)))
    return GaussianState(0.0, mean, cov), box


def cmd_risk_check(args) -> int:
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    n = args.samples
    worst, failures = 0.0, 0
    for i in range(args.cases):
        g, box = random_box_case(rng)
        p = collision_probability(g, box)
        q = mc_collision_probability(g, box, n, seed=rng.integers(2**63))
        tol = 3.0 * math.sqrt(max(p * (1 - p), 1.0 / n) / n)
        ratio = abs(p - q) / tol
        worst = max(worst, ratio)
        failures += ratio > 1.0
        if args.verbose:
            print(f"case {i}: analytic={p:.6f} mc={q:.6f} |diff|/tol={ratio:.3f}")
    spots = [
        ("bvn_cdf(0,0,0)", float(bvn_cdf(0.0, 0.0, 0.0)), 0.25, 1e-9),
        ("bvn_cdf(0,0,0.5)", float(bvn_cdf(0.0, 0.0, 0.5)), 0.25 + math.asin(0.5) / (2 * math.pi), 1e-6),
    ]
    centered = collision_probability(GaussianState(0.0, [0.0, 0.0], np.eye(2)), EgoBox((0.0, 0.0), 0.0, 1.0, 1.0))
    spots.append(("centered unit box", centered, (2 * ndtr(1.0) - 1) ** 2, 1e-6))
    ok = failures == 0
    print(f"monte carlo: {args.cases} cases, N={n}, failures={failures}, worst |diff|/tol={worst:.3f}")
    for name, got, want, tol in spots:
        good = abs(got - want) <= tol
        ok &= good
        print(f"{name} = {got:.10f} (expected {want:.10f}) {'ok' if good else 'FAIL'}")
    return EXIT_OK if ok else EXIT_ERROR


def _parse_ticks(text: str | None, n: int) -> list[int]:
    if text is None:
        return [0]
    if text == "all":
        return list(range(n))
    try:
        if ":" in text:
            lo, hi = text.split(":")
            return list(range(int(lo or 0), min(int(hi) if hi else n, n)))
        return [int(text)]
    except ValueError:
        raise InputError(f"--tick: expected N, A:B or 'all', got {text!r}") from None


def cmd_render(args) -> int:
    lines = Path(args.trace).read_text().splitlines()
    try:
        records = [json.loads(l) for l in lines if l.strip()]
    except json.JSONDecodeError as exc:
        raise InputError(f"--trace: invalid record: {exc.msg}") from exc
    header = next((r for r in records if r.get("type") == "header"), None)
    ticks = [r for r in records if r.get("type") == "tick"]
    if header is None or not ticks:
        raise InputError("--trace: needs a header and at least one tick record")
    out = Path(args.out or "render_out")
    if args.speed_profile:
        atomic_write(out / "speed_profile.svg", render_speed_profile(ticks))
    for k in _parse_ticks(args.tick, len(ticks)):
        if not 0 <= k < len(ticks):
            raise InputError(f"--tick: {k} outside 0..{len(ticks) - 1}")
        atomic_write(out / f"tick_{k:04d}.svg", render_tick(header, ticks[k], ticks[:k + 1]))
    print(f"wrote {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser, *, seed=True, profile=True, config=True) -> None:
    p.add_argument("--scenario", default="straight_road",
                   help="scenario JSON path or bundled fixture name (default: straight_road)")
    if config:
        p.add_argument("--config", help="run configuration JSON; defaults to the fixture's bundled config")
    if profile:
        p.add_argument("--profile", choices=PROFILES, help="planner profile override")
    if seed:
        p.add_argument("--seed", type=int, help="seed override (master seed for batch)")
    p.add_argument("--policy-cache", help="directory for cached policy fields")
    p.add_argument("--out", help="output directory")
    p.add_argument("--deterministic", action="store_true", help="suppress wall-clock timings in output")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pedrisk", description="Pedestrian crowd simulation with a risk-aware planner.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("policy", help="build or reuse cached policy fields for scenario goals")
    _common(p, seed=False, profile=False)
    p.add_argument("--goal", type=_point, action="append", help="goal X,Y (repeatable; default: scenario goals)")
    p.add_argument("--n", type=int, default=16, choices=(4, 8, 16), help="number of grid actions")
    p.add_argument("--cell-size", type=float, help="grid cell size in meters (default: from config)")
    p.set_defaults(func=cmd_policy)

    p = sub.add_parser("run", help="simulate one seed and write trace.ndjson and metrics.csv")
    _common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("batch", help="simulate many seeds per profile and write summary CSVs")
    _common(p)
    p.add_argument("--runs", type=int, default=100, help="seeds per profile (default: 100)")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes (default: 1)")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("risk-check", help="compare analytic collision probabilities with Monte Carlo")
    p.add_argument("--cases", type=int, default=100, help="random cases (default: 100)")
    p.add_argument("--samples", type=int, default=1_000_000, help="Monte Carlo samples per case")
    p.add_argument("--seed", type=int, help="case generator seed (default: 0)")
    p.add_argument("--verbose", action="store_true", help="print every case")
    p.add_argument("--deterministic", action="store_true", help="accepted for uniformity; output has no timings")
    p.set_defaults(func=cmd_risk_check)

    p = sub.add_parser("render", help="write SVG snapshots from a trace")
    p.add_argument("--trace", required=True, help="trace.ndjson written by 'run'")
    p.add_argument("--tick", help="tick index, range A:B or 'all' (default: 0)")
    p.add_argument("--speed-profile", action="store_true", help="also write speed_profile.svg")
    p.add_argument("--out", help="output directory")
    p.add_argument("--deterministic", action="store_true", help="accepted for uniformity; output is always stable")
    p.set_defaults(func=cmd_render)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ScenarioError, InputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
