"""Flat key/value configuration files for the chamber and controller.

Format: one ``key = value`` pair per line, ``#`` starts a comment line,
values are parsed as int, float, true/false, or a bare string. Keys use a
flat dotted namespace; the full schema is documented in docs/config.md and
enforced here — unknown keys are an error so typos cannot silently pass.

A config overlays a named scenario preset (``preset = default_desktop`` by
default); everything not mentioned keeps the preset value. The path usually
arrives via --config or the OPENCHAMBER_CONFIG environment variable.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .chamber import (Chamber, ChamberParams, EnvironmentState, SensorChannel,
                      SensorModel, DOSING_PUMPS, scenario_preset)
from .control import ControllerConfig, DEFAULT_CALIBRATION, VariableControl
from .variables import VARIABLE_ORDER

ENV_VAR = "OPENCHAMBER_CONFIG"

_CHAMBER_FIELDS = (
    "thermal_mass_j_per_c", "heater_power_w", "chiller_power_w", "vent_rate_per_s",
    "humidifier_rh_per_s", "co2_drawdown_ppm_per_s", "ph_shift_per_ml",
    "ec_rise_per_ml", "reference_volume_l", "reservoir_volume_l", "level_mm_per_ml",
    "evaporation_mm_per_s", "lux_red_full", "lux_blue_full", "lux_white_full",
    "integration_step_s",
)
_SENSOR_FIELDS = ("quantization", "sigma", "warm_up_s")
_CONTROL_LOOP_FIELDS = ("period_s", "post_recipe", "light_full_scale_lux")
_CONTROL_VAR_FIELDS = ("kind", "kp", "ki", "kd", "output_min", "output_max",
                       "windup_limit", "hysteresis", "dose_ml")


class ConfigError(ValueError):
    """A configuration file failed to parse or named an unknown key."""


@dataclass
class Setup:
    """Everything a simulation or serve process needs to start."""

    chamber: Chamber
    control: ControllerConfig
    calibration: dict[str, float]
    seed: int = 0
    preset: str = "default_desktop"


def parse_config(text: str) -> dict[str, object]:
    """Parse key = value lines into a typed flat mapping."""
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        values[key] = _parse_value(value.strip())
    return values


def _parse_value(raw: str) -> object:
    lowered = raw.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw


def load_setup(path: str | None = None, text: str | None = None,
               preset_override: str | None = None) -> Setup:
    """Build a full Setup from a config file (or inline text), over a preset."""
    if text is None:
        if path is None:
            values: dict[str, object] = {}
        else:
            try:
                with open(path, "r", encoding="utf-8") as f:
                    values = parse_config(f.read())
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
    else:
        values = parse_config(text)
    return apply_config(values, preset_override)


def apply_config(values: dict[str, object],
                 preset_override: str | None = None) -> Setup:
    preset = preset_override or values.get("preset", "default_desktop")
    if not isinstance(preset, str):
        raise ConfigError("preset must be a name")
    state, params, sensors = scenario_preset(preset)
    control = ControllerConfig()
    calibration = dict(DEFAULT_CALIBRATION)
    seed = 0

    chamber_updates: dict[str, object] = {}
    ambient_updates: dict[str, float] = {}
    initial_updates: dict[str, float] = {}
    coupling = dict(params.coupling)
    channels = dict(sensors.channels)
    loop_updates: dict[str, object] = {}
    var_controls = dict(control.variables)

    for key, value in values.items():
        parts = key.split(".")
        try:
            if key == "preset":
                continue
            elif key == "run.seed":
                seed = int(value)
            elif parts[0] == "chamber" and len(parts) == 2 and parts[1] in _CHAMBER_FIELDS:
                chamber_updates[parts[1]] = value
            elif parts[0] == "chamber" and len(parts) == 3 and parts[1] == "ambient" \
                    and parts[2] in VARIABLE_ORDER:
                ambient_updates[parts[2]] = float(value)
            elif parts[0] == "chamber" and len(parts) == 3 and parts[1] == "initial" \
                    and parts[2] in VARIABLE_ORDER:
                initial_updates[parts[2]] = float(value)
            elif parts[0] == "chamber" and len(parts) == 3 and parts[1] == "coupling" \
                    and parts[2] in VARIABLE_ORDER:
                coupling[parts[2]] = float(value)
            elif parts[0] == "sensor" and len(parts) == 3 and parts[1] in VARIABLE_ORDER \
                    and parts[2] in _SENSOR_FIELDS:
                current = channels.get(parts[1], SensorChannel())
                channels[parts[1]] = replace(current, **{parts[2]: value})
            elif parts[0] == "control" and len(parts) == 2 and parts[1] in _CONTROL_LOOP_FIELDS:
                loop_updates[parts[1]] = value
            elif parts[0] == "control" and len(parts) == 3 and parts[1] in VARIABLE_ORDER \
                    and parts[2] in _CONTROL_VAR_FIELDS:
                current = var_controls.get(parts[1], VariableControl())
                var_controls[parts[1]] = replace(current, **{parts[2]: value})
            elif parts[0] == "calibration" and len(parts) == 2 and parts[1] in DOSING_PUMPS:
                calibration[parts[1]] = float(value)
            else:
                raise ConfigError(f"unknown config key {key!r}")
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from exc

    try:
        if ambient_updates:
            chamber_updates["ambient"] = replace(params.ambient, **ambient_updates)
        params = replace(params, coupling=coupling, **chamber_updates)
        if initial_updates:
            state = replace(state, **initial_updates)
        control = replace(control, variables=var_controls, **loop_updates)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    return Setup(Chamber(state, params, SensorModel(channels)), control,
                 calibration, seed, preset if isinstance(preset, str) else "default_desktop")
