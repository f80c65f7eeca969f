"""Scripted crosswalk: risk-aware and aggressive speed profiles side by side.

Writes a trace, a speed-profile SVG and a snapshot at the slowest tick for
each profile.

    python3 scripts/crosswalk_demo.py --out crosswalk_out
"""

import argparse
from pathlib import Path

import numpy as np

from pedrisk.config import bundled_config, with_profile
from pedrisk.geometry import distance_to_polygon
from pedrisk.render import render_speed_profile, render_tick
from pedrisk.scenario import bundled_scenario
from pedrisk.simloop import atomic_write, run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="crosswalk_out")
    args = ap.parse_args()

    scenario = bundled_scenario("crosswalk")
    cw = np.asarray(scenario.regions_of("crosswalk")[0].polygon)
    base = bundled_config("crosswalk")
    out = Path(args.out)
    for profile in ("risk_aware", "aggressive"):
        res = run(scenario, with_profile(base, profile))
        header = next(r for r in res.trace if r["type"] == "header")
        ticks = [r for r in res.trace if r["type"] == "tick"]
        near = [t for t in ticks if distance_to_polygon((t["ego"]["x"], t["ego"]["y"]), cw) <= 10.0]
        slowest = min(range(len(ticks)), key=lambda k: ticks[k]["ego"]["v"])
        atomic_write(out / profile / "trace.ndjson", res.trace_text())
        atomic_write(out / profile / "speed_profile.svg", render_speed_profile(ticks))
        atomic_write(out / profile / "slowest.svg", render_tick(header, ticks[slowest], ticks[:slowest + 1]))
        v_near = [t["ego"]["v"] for t in near]
        print(f"{profile}: termination={res.termination} collisions={res.metrics.collisions} "
              f"min v near crosswalk={min(v_near):.3f} entry v={v_near[0]:.3f}")


if __name__ == "__main__":
    main()
