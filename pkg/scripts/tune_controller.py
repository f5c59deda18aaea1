#!/usr/bin/env python3
"""Gain sweep for the air-temperature PID on the default desktop chamber.

Runs the shipped sample recipe for 48 simulated hours per gain candidate and
reports the share of ticks (after the first hour) with the measured air
temperature within +/-0.5 °C of the setpoint, plus the worst excursion. The
shipped defaults (kp 0.4, ki 0.01, kd 0.05, windup 30) were frozen from this
sweep.

Usage: python scripts/tune_controller.py [--hours 48]
"""

import argparse
import itertools
import json
from dataclasses import replace
from pathlib import Path

from openchamber.chamber import Chamber
from openchamber.control import ControllerConfig, run_recipe
from openchamber.recipe import parse_recipe

SAMPLE = Path(__file__).resolve().parents[1] / "data" / "sample_recipe.json"

KP = [0.2, 0.4, 0.8]
KI = [0.005, 0.01, 0.02]
WINDUP = [20.0, 30.0, 60.0]


def score(recipe, hours, kp, ki, windup):
    config = ControllerConfig()
    config.variables["air_temperature"] = replace(
        config.variables["air_temperature"], kp=kp, ki=ki, windup_limit=windup)
    log = run_recipe(recipe, Chamber.from_preset("default_desktop"),
                     config, int(hours * 3600), rng_seed=7)
    measured, desired = {}, {}
    for p in log.points:
        if p.variable == "air_temperature":
            (measured if p.stream == "measured" else desired)[p.timestamp] = p.value
    ticks = [t for t in measured if t >= 3600]
    errors = [abs(measured[t] - desired[t]) for t in ticks]
    in_band = sum(1 for e in errors if e <= 0.5) / len(errors)
    return in_band, max(errors)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--hours", type=float, default=48.0)
    args = parser.parse_args()
    recipe = parse_recipe(SAMPLE.read_bytes())

    print(f"{'kp':>5} {'ki':>7} {'windup':>7} {'in-band':>9} {'max |e|':>8}")
    best = None
    for kp, ki, windup in itertools.product(KP, KI, WINDUP):
        in_band, worst = score(recipe, args.hours, kp, ki, windup)
        print(f"{kp:5.2f} {ki:7.3f} {windup:7.1f} {in_band:9.2%} {worst:8.3f}")
        if best is None or in_band > best[0]:
            best = (in_band, worst, kp, ki, windup)
    in_band, worst, kp, ki, windup = best
    print(json.dumps({"best": {"kp": kp, "ki": ki, "windup_limit": windup,
                               "in_band": round(in_band, 4),
                               "max_error": round(worst, 3)}}))


if __name__ == "__main__":
    main()
