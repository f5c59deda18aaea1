"""The live control loop behind `serve`: one chamber, at most one run.

A single supervisor thread repeats the sense-plan-act tick at the control
period (scaled by a speed factor, or free-running at maximum speed). All
mutations — starting and aborting runs, manual actuation, config changes —
are validated synchronously but take effect at the next tick boundary, so
observable state is always pre- or post-command, never in between.

While idle the chamber drifts toward ambient under whatever manual effects
are standing. When a run finishes under the hold_last policy the session
keeps controlling to the final setpoints ("holding") without recording
further telemetry; a new run, or an abort, releases it.
"""

from __future__ import annotations

import itertools
import logging
import threading
import time
from collections import deque
from dataclasses import asdict, replace

from .chamber import ALL_OFF, Chamber, read_sensors, step
from .control import (ControllerConfig, ControlSession, EffectCommand, EFFECTS,
                      VOLUME_ML, _tick_seed, translate)
from .recipe import Recipe
from .store import DataPoint, DocumentStore, RunWriter
from .variables import VARIABLE_ORDER

log = logging.getLogger("openchamber.runtime")


class StateConflict(Exception):
    """A mutation clashes with the current run state (HTTP 409)."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class Supervisor:
    """Owns the simulated chamber and the one-at-a-time control loop."""

    def __init__(self, store: DocumentStore, chamber: Chamber,
                 config: ControllerConfig, *, speed: float | None = 1.0,
                 rng_seed: int = 0, calibration=None, actuation_log_size: int = 100):
        self.store = store
        self.env = chamber.state
        self.params = chamber.params
        self.sensors = chamber.sensors
        self.config = config
        self.speed = speed  # None = free-running (max)
        self.rng_seed = rng_seed
        self.calibration = calibration

        self.sim_time = 0  # seconds since power-on (drives sensor warm-up)
        self.bank = ALL_OFF
        self.readings: dict[str, float | None] = {}
        self.desired: dict[str, float] = {}

        self._session: ControlSession | None = None
        self._writer: RunWriter | None = None
        self._recording = False
        self._run_counter = itertools.count(1)
        self._standing: dict[str, tuple[float, int]] = {}  # effect -> (magnitude, until)
        self._doses: list[EffectCommand] = []
        self._idle_carry: dict[str, float] = {}
        self.actuation_log: deque = deque(maxlen=actuation_log_size)

        self._lock = threading.RLock()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    # -- lifecycle -------------------------------------------------------

    def start(self) -> None:
        self._thread = threading.Thread(target=self._loop, name="openchamber-loop",
                                        daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=10)
        with self._lock:
            if self._writer is not None:
                self._writer.close()

    def _loop(self) -> None:
        while not self._stop.is_set():
            started = time.monotonic()
            try:
                self.tick()
            except Exception:
                log.exception("control tick failed")
            if self.speed is not None:
                delay = self.config.period_s / self.speed - (time.monotonic() - started)
                if delay > 0:
                    self._stop.wait(delay)

    # -- mutations (validated now, applied at the next tick) --------------

    def start_run(self, recipe: Recipe, duration_limit_s: int | None = None) -> str:
        with self._lock:
            if self._session is not None and self._session.run.phase == "running":
                raise StateConflict("run_active", "a recipe run is already active")
            self._finish_session(drop=True)
            run_id = f"run-{next(self._run_counter):04d}"
            session = ControlSession(
                recipe, Chamber(self.env, self.params, self.sensors), self.config,
                duration_limit_s, run_id=run_id,
                rng_seed=_tick_seed(self.rng_seed, self.sim_time),
                calibration=self.calibration, power_on_offset_s=self.sim_time)
            self.store.put(run_id, "run_meta", {
                "run_id": run_id, "recipe_id": recipe.id, "phase": "running",
                "started_wall": time.time(), "timebase": "simulated",
                "period_s": self.config.period_s, "recipe_duration": recipe.duration,
            })
            self._session = session
            self._writer = RunWriter(self.store, run_id)
            self._recording = True
            return run_id

    def abort_run(self) -> str:
        with self._lock:
            if self._session is None:
                raise StateConflict("no_active_run", "no run to abort")
            run_id = self._session.run_id
            self._session.abort()
            self._finish_session(drop=True)
            self.bank = ALL_OFF
            return run_id

    def actuate(self, effect: str, magnitude: float, duration_s: int | None = None,
                override: bool = False) -> None:
        command = EffectCommand(effect, float(magnitude))  # raises ValueError on bad input
        with self._lock:
            if self._session is not None and not override:
                raise StateConflict(
                    "run_active",
                    "a recipe controller is active; pass override=true to actuate anyway")
            if EFFECTS[effect] == VOLUME_ML:
                self._doses.append(command)
            else:
                until = self.sim_time + (duration_s if duration_s else self.config.period_s)
                self._standing[effect] = (command.magnitude, until)
            self.actuation_log.append({
                "sim_time": self.sim_time, "effect": effect,
                "magnitude": command.magnitude, "duration_s": duration_s,
                "override": bool(override),
            })

    def update_config(self, config: ControllerConfig) -> None:
        with self._lock:
            self.config = config
            if self._session is not None:
                self._session.config = config

    # -- the tick ----------------------------------------------------------

    def tick(self) -> None:
        with self._lock:
            manual = self._collect_manual()
            session = self._session
            if session is not None:
                result = session.tick(manual)
                self.env = session.env
                self.bank = session.bank
                self.readings = result.readings
                self.desired = dict(result.desired)
                if self._recording:
                    self._writer.add_tick(result.points)
                if session.finished and self._recording:
                    self._finish_session(drop=not session.holding)
                    if self._session is None:
                        self.bank = ALL_OFF
            else:
                self.readings = read_sensors(
                    self.env, self.sensors, _tick_seed(self.rng_seed, self.sim_time),
                    self.sim_time)
                self.desired = {}
                self.bank, self._idle_carry = translate(
                    manual, self.calibration, self.config.period_s, self._idle_carry)
                self.env = step(self.env, self.bank, self.params, self.config.period_s)
            self.sim_time += self.config.period_s

    def _collect_manual(self) -> list[EffectCommand]:
        expired = [e for e, (_, until) in self._standing.items() if until <= self.sim_time]
        for e in expired:
            del self._standing[e]
        commands = [EffectCommand(e, m) for e, (m, _) in self._standing.items()]
        commands.extend(self._doses)
        self._doses = []
        return commands

    def _finish_session(self, drop: bool) -> None:
        """Close out the current run's recording; optionally drop the session."""
        session = self._session
        if session is None:
            return
        if self._recording:
            self._writer.close()
            self._writer = None
            self._recording = False
            meta = self.store.get(session.run_id)
            body = dict(meta.body) if meta else {"run_id": session.run_id}
            body["phase"] = session.run.phase
            body["elapsed"] = session.run.elapsed
            self.store.put(session.run_id, "run_meta", body)
        if drop:
            self._session = None

    # -- views -------------------------------------------------------------

    def state_view(self) -> dict:
        with self._lock:
            session = self._session
            if session is None:
                phase, run_id, elapsed, duration, holding = "idle", None, None, None, False
                progress = None
            else:
                phase = session.run.phase
                run_id = session.run_id
                elapsed = session.run.elapsed
                duration = session.timeline.duration
                progress = session.progress()
                holding = session.finished and phase == "ended"
            return {
                "phase": phase,
                "run_id": run_id,
                "elapsed": elapsed,
                "recipe_duration": duration,
                "progress": progress,
                "holding": holding,
                "sim_time": self.sim_time,
                "sensed": dict(self.readings),
                "desired": dict(self.desired),
                "actuators": _bank_view(self.bank),
                "actuation_log": list(self.actuation_log)[-10:],
            }

    def current_run_id(self) -> str | None:
        with self._lock:
            return self._session.run_id if self._session else None


def _bank_view(bank) -> dict:
    view = asdict(bank)
    for pump in ("ph_up", "ph_down", "nutrient_a", "nutrient_b", "fresh_water"):
        order = view[pump]
        view[pump] = {"flow_ml_s": order["flow_ml_s"], "run_s": order["run_s"]}
    return view
