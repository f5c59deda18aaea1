"""The planning stage: sensed-vs-desired errors to hardware-agnostic effects.

Controllers work per variable (PID or bang-bang with a dead band) and emit
EffectCommands like "heat at fraction 0.4" or "dose 20 ml"; a separate
translation step converts those into concrete actuator settings using the
dosing pump calibration, carrying any volume that does not fit into the
current control period over to the next tick.

``run_recipe`` drives the full sense-plan-act loop against a simulated
chamber; ``ControlSession`` exposes the same loop one tick at a time for the
live runtime.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

from . import chamber as chamber_mod
from .chamber import (ALL_OFF, ActuatorBank, Chamber, DOSING_PUMPS, PumpOrder,
                      read_sensors, step)
from .recipe import Recipe, RecipeTimeline, compile_recipe, setpoints_at
from .store import DataPoint
from .variables import VARIABLE_ORDER

# Effect vocabulary and magnitude domains.
FRACTION, VOLUME_ML, SWITCH = "fraction", "volume_ml", "switch"
EFFECTS: dict[str, str] = {
    "heat": FRACTION,
    "cool": FRACTION,
    "humidify": FRACTION,
    "vent": SWITCH,
    "illuminate_red": FRACTION,
    "illuminate_blue": FRACTION,
    "illuminate_white": FRACTION,
    "circulate": SWITCH,
    "dose_ph_up": VOLUME_ML,
    "dose_ph_down": VOLUME_ML,
    "dose_nutrient_a": VOLUME_ML,
    "dose_nutrient_b": VOLUME_ML,
    "add_fresh_water": VOLUME_ML,
    "aerate": SWITCH,
}

_EFFECT_TO_PUMP = {
    "dose_ph_up": "ph_up",
    "dose_ph_down": "ph_down",
    "dose_nutrient_a": "nutrient_a",
    "dose_nutrient_b": "nutrient_b",
    "add_fresh_water": "fresh_water",
}

_EFFECT_TO_FIELD = {
    "heat": "heater",
    "cool": "chiller",
    "humidify": "humidifier",
    "illuminate_red": "light_red",
    "illuminate_blue": "light_blue",
    "illuminate_white": "light_white",
    "circulate": "circulation_fan",
}

# The canonical pump calibration: 10 ml/s turns a 20 ml order into a 2 s run.
DEFAULT_CALIBRATION: dict[str, float] = {p: 10.0 for p in DOSING_PUMPS}


class BadCalibration(ValueError):
    """A dosing pump flow calibration is zero or negative."""


class AbortRequested(Exception):
    """Raised through the command queue to stop a run; actuators go all-off."""


@dataclass(frozen=True, slots=True)
class EffectCommand:
    """One hardware-agnostic actuation order."""

    effect: str
    magnitude: float

    def __post_init__(self):
        domain = EFFECTS.get(self.effect)
        if domain is None:
            raise ValueError(f"unknown effect {self.effect!r}")
        m = self.magnitude
        if domain == FRACTION and not 0.0 <= m <= 1.0:
            raise ValueError(f"{self.effect}: fraction {m} outside [0, 1]")
        if domain == VOLUME_ML and m < 0.0:
            raise ValueError(f"{self.effect}: volume {m} ml is negative")
        if domain == SWITCH and m not in (0.0, 1.0, 0, 1):
            raise ValueError(f"{self.effect}: switch magnitude must be 0 or 1")


def validate_effect(effect: str, magnitude: float) -> EffectCommand:
    """Construct-or-raise helper for API input validation."""
    return EffectCommand(effect, float(magnitude))


@dataclass(frozen=True, slots=True)
class PidState:
    """Positional PID with a clamped integral (anti-windup) and output limits."""

    kp: float
    ki: float
    kd: float
    output_min: float = -1.0
    output_max: float = 1.0
    windup_limit: float = 1.0
    integral: float = 0.0
    previous_error: float | None = None

    def __post_init__(self):
        if not self.output_min < self.output_max:
            raise ValueError("output_min must be below output_max")
        if self.windup_limit <= 0:
            raise ValueError("windup_limit must be positive")
        if abs(self.integral) > self.windup_limit:
            raise ValueError("integral exceeds windup limit")


def pid_update(pid: PidState, error: float, dt: float) -> tuple[float, PidState]:
    """One PID step; the derivative term is zero on the first update."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    integral = pid.integral + error * dt
    integral = max(-pid.windup_limit, min(pid.windup_limit, integral))
    if pid.previous_error is None:
        derivative = 0.0
    else:
        derivative = (error - pid.previous_error) / dt
    output = pid.kp * error + pid.ki * integral + pid.kd * derivative
    output = max(pid.output_min, min(pid.output_max, output))
    return output, replace(pid, integral=integral, previous_error=error)


@dataclass(frozen=True, slots=True)
class VariableControl:
    """Controller choice and tuning for one variable."""

    kind: str = "none"  # pid | bangbang | none
    kp: float = 0.0
    ki: float = 0.0
    kd: float = 0.0
    output_min: float = -1.0
    output_max: float = 1.0
    windup_limit: float = 1.0
    hysteresis: float = 0.0  # bang-bang dead-band width (acts outside +/- h/2)
    dose_ml: float = 0.0     # ml per control period for bang-bang dosing

    def __post_init__(self):
        if self.kind not in ("pid", "bangbang", "none"):
            raise ValueError(f"unknown controller kind {self.kind!r}")
        if self.kind == "bangbang" and self.hysteresis <= 0:
            raise ValueError("bang-bang controllers need a positive hysteresis width")


def _default_variable_controls() -> dict[str, VariableControl]:
    return {
        "air_temperature": VariableControl("pid", kp=0.4, ki=0.01, kd=0.05,
                                           windup_limit=30.0),
        "air_humidity": VariableControl("pid", kp=0.05, ki=0.002, kd=0.0,
                                        windup_limit=100.0),
        "air_carbon_dioxide": VariableControl("bangbang", hysteresis=100.0),
        "water_temperature": VariableControl("none"),
        "water_potential_hydrogen": VariableControl("bangbang", hysteresis=0.4,
                                                    dose_ml=1.0),
        "water_electrical_conductivity": VariableControl("bangbang", hysteresis=200.0,
                                                         dose_ml=2.0),
        "light_illuminance": VariableControl("none"),  # open-loop channel mapping
        "water_level": VariableControl("bangbang", hysteresis=10.0, dose_ml=100.0),
    }


@dataclass(frozen=True)
class ControllerConfig:
    """Loop-wide control settings plus one VariableControl per variable."""

    period_s: int = 10
    post_recipe: str = "hold_last"  # hold_last | all_off
    light_full_scale_lux: float = 40000.0
    variables: dict[str, VariableControl] = field(default_factory=_default_variable_controls)

    def __post_init__(self):
        if self.period_s < 1:
            raise ValueError("control period must be >= 1 s")
        if self.post_recipe not in ("hold_last", "all_off"):
            raise ValueError("post_recipe must be hold_last or all_off")
        for var in VARIABLE_ORDER:
            self.variables.setdefault(var, VariableControl())


@dataclass(frozen=True)
class RunState:
    """Progress of one recipe run."""

    recipe_id: str
    started_at: float
    elapsed: int = 0
    phase: str = "running"  # running | ended | aborted
    pids: dict[str, PidState] = field(default_factory=dict)


# (positive-error effect, negative-error effect) per controlled variable.
# VENT is a marker: requests are OR-ed into a single vent command.
_VENT = "__vent__"
_ACTION_MAP: dict[str, tuple[str | None, str | None]] = {
    "air_temperature": ("heat", "cool"),
    "air_humidity": ("humidify", _VENT),
    "air_carbon_dioxide": (None, _VENT),
    "water_potential_hydrogen": ("dose_ph_up", "dose_ph_down"),
    "water_electrical_conductivity": ("dose_nutrient_a", None),
    "water_level": ("add_fresh_water", None),
}


def plan(sensed: Mapping[str, float | None], desired: Mapping[str, float],
         config: ControllerConfig, run: RunState, dt: float) -> tuple[list[EffectCommand], RunState]:
    """Compute effect commands from the sensed-vs-desired errors of one tick.

    Variables whose reading is None (invalid) are skipped for the tick.
    Light is open-loop: the white channel fraction comes straight from
    desired / full-scale. Circulation and aeration are always commanded on.
    """
    commands: list[EffectCommand] = []
    pids = dict(run.pids)
    vent = False

    for var in VARIABLE_ORDER:
        if var not in desired:
            continue
        target = desired[var]
        if var == "light_illuminance":
            fraction = min(max(target / config.light_full_scale_lux, 0.0), 1.0)
            commands.append(EffectCommand("illuminate_white", fraction))
            continue
        actions = _ACTION_MAP.get(var)
        if actions is None:
            continue
        reading = sensed.get(var)
        if reading is None:
            continue  # fail-safe: no command for invalid readings
        vc = config.variables.get(var, VariableControl())
        if vc.kind == "none":
            continue
        error = target - reading

        if vc.kind == "pid":
            pid = pids.get(var)
            if pid is None:
                pid = PidState(kp=vc.kp, ki=vc.ki, kd=vc.kd,
                               output_min=vc.output_min, output_max=vc.output_max,
                               windup_limit=vc.windup_limit)
            output, pids[var] = pid_update(pid, error, dt)
            if output > 0:
                vent = _emit(commands, actions[0], abs(output), vent)
            elif output < 0:
                vent = _emit(commands, actions[1], abs(output), vent)
        else:  # bangbang
            half = vc.hysteresis / 2.0
            if error > half:
                vent = _emit(commands, actions[0], vc.dose_ml or 1.0, vent)
            elif error < -half:
                vent = _emit(commands, actions[1], vc.dose_ml or 1.0, vent)

    if vent:
        commands.append(EffectCommand("vent", 1))
    commands.append(EffectCommand("circulate", 1))
    commands.append(EffectCommand("aerate", 1))
    return commands, replace(run, pids=pids)


def _emit(commands: list[EffectCommand], action: str | None, magnitude: float,
          vent: bool) -> bool:
    if action is None:
        return vent
    if action == _VENT:
        return True
    if EFFECTS[action] == FRACTION:
        magnitude = min(magnitude, 1.0)
    commands.append(EffectCommand(action, magnitude))
    if action == "dose_nutrient_a":
        # EC raises through both nutrient lines equally.
        commands.append(EffectCommand("dose_nutrient_b", magnitude))
    return vent


def translate(commands: Iterable[EffectCommand],
              dosing_calibration: Mapping[str, float] | None = None,
              period_s: int = 10,
              carry: Mapping[str, float] | None = None
              ) -> tuple[ActuatorBank, dict[str, float]]:
    """Convert effect commands into an actuator bank for one control period.

    Continuous and switch effects map one-to-one onto actuator fields (a
    later command for the same effect wins). Dose volumes accumulate, run the
    pump for volume / flow seconds capped at the period, and return any
    remainder in the carry map for the next tick.
    """
    calibration = dict(DEFAULT_CALIBRATION)
    if dosing_calibration:
        calibration.update(dosing_calibration)
    for pump, flow in calibration.items():
        if flow <= 0:
            raise BadCalibration(f"{pump}: flow must be positive, got {flow}")

    fields: dict[str, object] = {}
    volumes = dict.fromkeys(DOSING_PUMPS, 0.0)
    if carry:
        for pump, ml in carry.items():
            volumes[pump] += ml

    for cmd in commands:
        if cmd.effect == "vent":
            fields["vent_open"] = bool(cmd.magnitude)
        elif cmd.effect == "aerate":
            fields["aerator"] = bool(cmd.magnitude)
        elif cmd.effect in _EFFECT_TO_PUMP:
            volumes[_EFFECT_TO_PUMP[cmd.effect]] += cmd.magnitude
        else:
            fields[_EFFECT_TO_FIELD[cmd.effect]] = float(cmd.magnitude)

    new_carry: dict[str, float] = {}
    for pump in DOSING_PUMPS:
        ml = volumes[pump]
        if ml <= 0:
            continue
        flow = calibration[pump]
        run_s = ml / flow
        if run_s <= period_s:
            fields[pump] = PumpOrder(flow, run_s)
        else:
            fields[pump] = PumpOrder(flow, float(period_s))
            new_carry[pump] = ml - flow * period_s
    return ActuatorBank(**fields), new_carry


@dataclass
class TickResult:
    elapsed: int
    readings: dict[str, float | None]
    desired: dict[str, float]
    commands: list[EffectCommand]
    bank: ActuatorBank
    points: list[DataPoint]
    ended: bool


@dataclass
class RunLog:
    """Everything a finished run produced."""

    run_id: str
    points: list[DataPoint]
    run_state: RunState
    final_env: chamber_mod.EnvironmentState
    final_bank: ActuatorBank


def _tick_seed(base: int, elapsed: int) -> int:
    return (base * 0x9E3779B97F4A7C15 + elapsed) & ((1 << 63) - 1)


class ControlSession:
    """The sense-plan-act loop, one tick at a time.

    Ticks run at elapsed = 0, period, 2*period, ... up to duration_limit_s
    inclusive. Each tick senses, schedules, plans, translates, records one
    DataPoint per registered variable on both streams, then steps the
    simulated chamber by one period.
    """

    def __init__(self, recipe: Recipe, chamber: Chamber, config: ControllerConfig,
                 duration_limit_s: int | None = None, *, run_id: str | None = None,
                 rng_seed: int = 0, calibration: Mapping[str, float] | None = None,
                 power_on_offset_s: int = 0):
        if duration_limit_s is None:
            duration_limit_s = recipe.duration
        if duration_limit_s < 0:
            raise ValueError("duration limit must be >= 0")
        self.recipe = recipe
        self.timeline: RecipeTimeline = compile_recipe(recipe)
        self.config = config
        self.duration_limit_s = duration_limit_s
        self.run_id = run_id or f"run-{recipe.id}"
        self.rng_seed = rng_seed
        self.calibration = dict(calibration) if calibration else None
        self.power_on_offset_s = power_on_offset_s

        self.env = chamber.state
        self.params = chamber.params
        self.sensors = chamber.sensors
        self.run = RunState(recipe.id, started_at=time.time())
        self.carry: dict[str, float] = {}
        self.bank: ActuatorBank = ALL_OFF
        self.elapsed = 0
        self.finished = False
        self._recipe_ended = False

    @property
    def holding(self) -> bool:
        """The recipe completed under hold_last: keep controlling, stop recording."""
        return (self.finished and self._recipe_ended
                and self.config.post_recipe == "hold_last")

    def tick(self, extra_commands: Sequence[EffectCommand] = ()) -> TickResult:
        if self.finished and not self.holding:
            raise RuntimeError("session is finished")
        e = self.elapsed
        readings = read_sensors(self.env, self.sensors, _tick_seed(self.rng_seed, e),
                                self.power_on_offset_s + e)
        desired, ended = setpoints_at(self.timeline, e)

        phase = self.run.phase
        if ended and phase == "running":
            phase = "ended"
        stop_all_off = ended and self.config.post_recipe == "all_off"

        if stop_all_off:
            self.run = replace(self.run, phase=phase, elapsed=e)
            commands: list[EffectCommand] = []
            bank = ALL_OFF
            self.carry = {}
        else:
            self.run = replace(self.run, phase=phase, elapsed=e)
            commands, self.run = plan(readings, desired, self.config, self.run,
                                      float(self.config.period_s))
            merged = list(commands) + list(extra_commands)
            bank, self.carry = translate(merged, self.calibration,
                                         self.config.period_s, self.carry)

        points = []
        for var in VARIABLE_ORDER:
            points.append(DataPoint(e, var, readings[var], "measured", self.run_id))
        for var in VARIABLE_ORDER:
            points.append(DataPoint(e, var, desired.get(var), "desired", self.run_id))

        self.bank = bank
        self.env = step(self.env, bank, self.params, self.config.period_s)
        self.elapsed = e + self.config.period_s
        self._recipe_ended = ended
        if not self.finished:
            self.finished = stop_all_off or self.elapsed > self.duration_limit_s
        if self.finished and self.run.phase == "running":
            # A duration-limit stop still ends the run.
            self.run = replace(self.run, phase="ended")
        return TickResult(e, readings, desired, commands, bank, points, ended)

    def abort(self) -> None:
        """Stop the run; the actuators drop to the all-off bank."""
        if self.run.phase == "running":
            self.run = replace(self.run, phase="aborted")
        self.bank = ALL_OFF
        self.carry = {}
        self.finished = True

    def progress(self) -> float:
        if self.timeline.duration == 0:
            return 1.0
        return min(self.run.elapsed / self.timeline.duration, 1.0)


def run_recipe(recipe: Recipe, chamber: Chamber, config: ControllerConfig,
               duration_limit_s: int | None = None, *, rng_seed: int = 0,
               calibration: Mapping[str, float] | None = None,
               run_id: str | None = None,
               abort_check: Callable[[], bool] | None = None) -> RunLog:
    """Run a recipe to completion against a simulated chamber.

    Stops when the recipe ends (honoring the post-recipe policy), when
    duration_limit_s is reached, or when abort_check returns True at a tick
    boundary (phase becomes "aborted" and the actuators go all-off).
    """
    session = ControlSession(recipe, chamber, config, duration_limit_s,
                             run_id=run_id, rng_seed=rng_seed, calibration=calibration)
    points: list[DataPoint] = []
    while not session.finished:
        if abort_check is not None and abort_check():
            session.abort()
            break
        points.extend(session.tick().points)
    return RunLog(session.run_id, points, session.run, session.env, session.bank)
