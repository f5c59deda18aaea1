"""Command-line entry point: validate, simulate, serve, sync, cloud, export.

Exit codes: 0 success, 1 validation failure (bad recipe, bad config, unknown
run), 2 runtime error (network, bind, I/O). Logs go to standard error as one
JSON object per line; primary output (reports, "ok") goes to standard out.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

from . import __version__, sync as sync_mod
from .chamber import UnknownPreset, PRESET_NAMES
from .config import ENV_VAR, ConfigError, load_setup
from .control import run_recipe
from .httpserver import BindFailure
from .recipe import RecipeError, parse_recipe
from .runtime import Supervisor
from .store import DocumentStore, RunWriter, UnknownRun, export_csv, points_to_csv
from .api import serve_api

log = logging.getLogger("openchamber.cli")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class _JsonLogFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        entry = {
            "ts": round(record.created, 3),
            "level": record.levelname.lower(),
            "logger": record.name,
            "msg": record.getMessage(),
        }
        if record.exc_info:
            entry["exc"] = self.formatException(record.exc_info)
        return json.dumps(entry, ensure_ascii=False)


def _setup_logging(verbose: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_JsonLogFormatter())
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="openchamber",
                                     description="growth chamber control stack")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a recipe file")
    p.add_argument("recipe")

    p = sub.add_parser("simulate", help="run a recipe headless against the simulator")
    p.add_argument("--recipe", required=True)
    p.add_argument("--preset", default=None, choices=PRESET_NAMES)
    p.add_argument("--hours", type=float, default=None,
                   help="duration limit (default: the recipe's own duration)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--config", default=os.environ.get(ENV_VAR))
    p.add_argument("--store", default=None, help="also persist the run into this store")

    p = sub.add_parser("serve", help="run the HTTP API plus the live control loop")
    p.add_argument("--config", default=os.environ.get(ENV_VAR))
    p.add_argument("--preset", default=None, choices=PRESET_NAMES)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=5000)
    p.add_argument("--store", default="openchamber.store")
    p.add_argument("--speed", default="1",
                   help="simulated seconds per wall second, or 'max'")
    p.add_argument("--token", default=None)
    p.add_argument("--ui", default=None, help="dashboard bundle directory")

    p = sub.add_parser("sync", help="one replication round against a cloud server")
    p.add_argument("--server", required=True)
    p.add_argument("--store", default="openchamber.store")
    p.add_argument("--client-id", default="chamber-1")
    p.add_argument("--filter", default="recipe",
                   help="comma-separated document kinds to pull ('all' for everything)")
    p.add_argument("--token", default=None)

    p = sub.add_parser("cloud", help="run the cloud-side replication endpoint")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=5984)
    p.add_argument("--store", default="cloud.store")
    p.add_argument("--token", default=None)

    p = sub.add_parser("export", help="CSV-export one stored run")
    p.add_argument("--run", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--store", default="openchamber.store")
    p.add_argument("--streams", default=None, help="comma-separated subset of streams")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    _setup_logging(args.verbose)
    handler = {
        "validate": _cmd_validate,
        "simulate": _cmd_simulate,
        "serve": _cmd_serve,
        "sync": _cmd_sync,
        "cloud": _cmd_cloud,
        "export": _cmd_export,
    }[args.command]
    try:
        return handler(args)
    except (RecipeError, ConfigError, UnknownPreset, UnknownRun) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (sync_mod.NetworkUnavailable, sync_mod.ProtocolVersionMismatch,
            sync_mod.ChecksumMismatch, sync_mod.SyncProtocolError,
            BindFailure, OSError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_RUNTIME


def _read_recipe(path: str):
    with open(path, "rb") as f:
        return parse_recipe(f.read())


def _cmd_validate(args) -> int:
    _read_recipe(args.recipe)
    print("ok")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    recipe = _read_recipe(args.recipe)
    setup = load_setup(args.config, preset_override=args.preset)
    limit = recipe.duration if args.hours is None else int(args.hours * 3600)
    started = time.monotonic()
    run = run_recipe(recipe, setup.chamber, setup.control, limit,
                     rng_seed=args.seed or setup.seed, calibration=setup.calibration)
    log.info("simulated %s s in %.2f s wall (%d points, phase %s)",
             run.run_state.elapsed, time.monotonic() - started,
             len(run.points), run.run_state.phase)
    with open(args.out, "wb") as f:
        f.write(points_to_csv(run.points))
    if args.store:
        with DocumentStore(args.store) as store:
            store.put(run.run_id, "run_meta", {
                "run_id": run.run_id, "recipe_id": recipe.id,
                "phase": run.run_state.phase, "elapsed": run.run_state.elapsed,
                "timebase": "simulated", "period_s": setup.control.period_s,
                "seed": args.seed,
            })
            writer = RunWriter(store, run.run_id)
            tick: list = []
            for point in run.points:
                if tick and point.timestamp != tick[0].timestamp:
                    writer.add_tick(tick)
                    tick = []
                tick.append(point)
            writer.add_tick(tick)
            writer.close()
    return EXIT_OK


def _parse_speed(raw: str) -> float | None:
    if raw == "max":
        return None
    speed = float(raw)
    if speed <= 0:
        raise ConfigError("--speed must be positive or 'max'")
    return speed


def _cmd_serve(args) -> int:
    setup = load_setup(args.config, preset_override=args.preset)
    speed = _parse_speed(args.speed)
    ui_dir = args.ui
    if ui_dir is None and os.path.isdir("frontend/dist"):
        ui_dir = "frontend/dist"
    with DocumentStore(args.store) as store:
        supervisor = Supervisor(store, setup.chamber, setup.control, speed=speed,
                                rng_seed=setup.seed, calibration=setup.calibration)
        supervisor.start()
        try:
            handle = serve_api(supervisor, store, args.host, args.port,
                               token=args.token, ui_dir=ui_dir)
        except BindFailure:
            supervisor.stop()
            raise
        log.info("serving API on %s (store %s, preset %s, speed %s)",
                 handle.url, args.store, setup.preset, args.speed)
        try:
            while True:
                time.sleep(3600)
        except KeyboardInterrupt:
            log.info("shutting down")
        finally:
            handle.stop()
            supervisor.stop()
    return EXIT_OK


def _cmd_sync(args) -> int:
    pull = tuple(k for k in args.filter.split(",") if k)
    if "all" in pull:
        pull = ("recipe", "datapoint_batch", "run_meta")
    with DocumentStore(args.store) as store:
        report = sync_mod.sync(store, args.server, client_id=args.client_id,
                               pull_filter=pull, token=args.token)
    print(json.dumps(report.as_dict(), ensure_ascii=False))
    return EXIT_OK


def _cmd_cloud(args) -> int:
    with DocumentStore(args.store) as store:
        handle = sync_mod.serve(store, args.host, args.port, token=args.token)
        log.info("replication endpoint on %s (store %s)", handle.url, args.store)
        try:
            while True:
                time.sleep(3600)
        except KeyboardInterrupt:
            log.info("shutting down")
        finally:
            handle.stop()
    return EXIT_OK


def _cmd_export(args) -> int:
    streams = tuple(args.streams.split(",")) if args.streams else None
    with DocumentStore(args.store) as store:
        data = export_csv(store, args.run, streams)
    with open(args.out, "wb") as f:
        f.write(data)
    log.info("wrote %d bytes to %s", len(data), args.out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
