#!/usr/bin/env python3
"""Run the shipped sample recipe headless and summarize tracking quality.

Writes the full CSV next to the summary so the run can be inspected or fed
to the dashboard. Equivalent to `openchamber simulate` plus a per-variable
report.

Usage: python scripts/run_sample.py [--hours 48] [--seed 7] [--out sample_run.csv]
"""

import argparse
import statistics
from collections import defaultdict
from pathlib import Path

from openchamber.chamber import Chamber
from openchamber.control import ControllerConfig, run_recipe
from openchamber.recipe import parse_recipe
from openchamber.store import points_to_csv

SAMPLE = Path(__file__).resolve().parents[1] / "data" / "sample_recipe.json"


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--hours", type=float, default=48.0)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--preset", default="default_desktop")
    parser.add_argument("--out", default="sample_run.csv")
    args = parser.parse_args()

    recipe = parse_recipe(SAMPLE.read_bytes())
    log = run_recipe(recipe, Chamber.from_preset(args.preset), ControllerConfig(),
                     int(args.hours * 3600), rng_seed=args.seed)
    Path(args.out).write_bytes(points_to_csv(log.points))

    series = defaultdict(dict)
    for p in log.points:
        series[(p.variable, p.stream)][p.timestamp] = p.value
    print(f"run {log.run_id}: {len(log.points)} points, phase {log.run_state.phase}")
    print(f"{'variable':>32} {'mean |err|':>11} {'max |err|':>10} {'final':>9}")
    for variable in sorted({v for v, _ in series}):
        desired = series[(variable, "desired")]
        measured = series[(variable, "measured")]
        errors = [abs(measured[t] - desired[t]) for t in desired
                  if desired[t] is not None and measured.get(t) is not None]
        final = getattr(log.final_env, variable)
        if errors:
            print(f"{variable:>32} {statistics.fmean(errors):11.3f} "
                  f"{max(errors):10.3f} {final:9.2f}")
        else:
            print(f"{variable:>32} {'-':>11} {'-':>10} {final:9.2f}")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
