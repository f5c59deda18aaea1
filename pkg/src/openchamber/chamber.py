"""Deterministic discrete-time simulation of the growth chamber.

State evolves by forward-Euler integration of first-order dynamics: actuator
source terms plus linear coupling toward an ambient state, with an optional
fresh-air vent that exchanges the air variables at a shared rate. Light is
purely algebraic in the LED channel fractions. Every variable is clamped to
its registry range after each substep.

Sensor readout is modelled separately (quantization, seeded gaussian noise,
and a warm-up window during which the CO2 channel reads invalid).

All functions here are pure: same arguments (seed included), same result.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace

from .variables import VARIABLES, VARIABLE_ORDER

PRESET_NAMES = ("default_desktop", "noisy_sensors", "hot_ambient")

# Air variables exchanged with the outside when the fresh-air valve is open.
_VENTED = ("air_temperature", "air_humidity", "air_carbon_dioxide")

DOSING_PUMPS = ("ph_up", "ph_down", "nutrient_a", "nutrient_b", "fresh_water")


class StepMismatch(ValueError):
    """dt is not a positive multiple of the integration step."""


class UnknownPreset(KeyError):
    """No scenario preset registered under that name."""


@dataclass(frozen=True, slots=True)
class EnvironmentState:
    """Ground-truth chamber variable values at one simulation instant."""

    air_temperature: float = 22.0
    air_humidity: float = 45.0
    air_carbon_dioxide: float = 400.0
    water_temperature: float = 22.0
    water_potential_hydrogen: float = 6.0
    water_electrical_conductivity: float = 1400.0
    light_illuminance: float = 0.0
    water_level: float = 150.0
    sim_time: int = 0

    def as_dict(self) -> dict[str, float]:
        return {v: getattr(self, v) for v in VARIABLE_ORDER}


@dataclass(frozen=True, slots=True)
class PumpOrder:
    """Run order for one peristaltic pump within a control period."""

    flow_ml_s: float = 0.0
    run_s: float = 0.0

    def volume_ml(self, dt: float) -> float:
        return self.flow_ml_s * min(self.run_s, dt)


@dataclass(frozen=True, slots=True)
class ActuatorBank:
    """Hardware-facing actuator settings for one tick.

    Continuous actuators are duty fractions in [0, 1]; the vent valve, water
    pump, and aerator are on/off; each dosing pump carries a flow and a run
    time within the period. The water pump has no modelled effect and no
    built-in effect command drives it.
    """

    heater: float = 0.0
    chiller: float = 0.0
    humidifier: float = 0.0
    vent_open: bool = False
    light_red: float = 0.0
    light_blue: float = 0.0
    light_white: float = 0.0
    circulation_fan: float = 0.0
    water_pump: bool = False
    aerator: bool = False
    ph_up: PumpOrder = PumpOrder()
    ph_down: PumpOrder = PumpOrder()
    nutrient_a: PumpOrder = PumpOrder()
    nutrient_b: PumpOrder = PumpOrder()
    fresh_water: PumpOrder = PumpOrder()

    def __post_init__(self):
        for name in ("heater", "chiller", "humidifier", "light_red", "light_blue",
                     "light_white", "circulation_fan"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} fraction {v} outside [0, 1]")
        for name in DOSING_PUMPS:
            order = getattr(self, name)
            if order.flow_ml_s < 0 or order.run_s < 0:
                raise ValueError(f"{name}: negative flow or run time")


ALL_OFF = ActuatorBank()


@dataclass(frozen=True, slots=True)
class SensorChannel:
    """Readout model for one variable."""

    quantization: float = 0.0  # 0 disables quantization
    sigma: float = 0.0
    warm_up_s: int = 0

    def __post_init__(self):
        if self.quantization < 0 or self.sigma < 0 or self.warm_up_s < 0:
            raise ValueError("sensor channel parameters must be non-negative")


@dataclass(frozen=True)
class SensorModel:
    """Per-variable readout models; hard range comes from the registry."""

    channels: dict[str, SensorChannel]

    def __post_init__(self):
        for var in VARIABLE_ORDER:
            self.channels.setdefault(var, SensorChannel())


def _default_ambient() -> EnvironmentState:
    return EnvironmentState()


def _default_coupling() -> dict[str, float]:
    return {
        "air_temperature": 1.5e-4,
        "air_humidity": 1.0e-4,
        "air_carbon_dioxide": 1.0e-4,
        "water_temperature": 5.0e-5,
        "water_potential_hydrogen": 0.0,
        "water_electrical_conductivity": 0.0,
        "light_illuminance": 0.0,
        "water_level": 0.0,
    }


@dataclass(frozen=True)
class ChamberParams:
    """Physical parameters of the simulated chamber.

    The defaults are the "default_desktop" bundle: a sealed desktop chamber
    whose 150 W heater brings the air from 22 to 25 °C in roughly ten
    minutes. The dosing response is linear, defined at ``reference_volume_l``
    and scaled inversely with the actual reservoir volume.
    """

    thermal_mass_j_per_c: float = 30000.0
    heater_power_w: float = 150.0
    chiller_power_w: float = 200.0
    ambient: EnvironmentState = field(default_factory=_default_ambient)
    coupling: dict[str, float] = field(default_factory=_default_coupling)
    vent_rate_per_s: float = 5.0e-4
    humidifier_rh_per_s: float = 0.05
    co2_drawdown_ppm_per_s: float = 0.05
    ph_shift_per_ml: float = 0.05
    ec_rise_per_ml: float = 40.0
    reference_volume_l: float = 10.0
    reservoir_volume_l: float = 10.0
    level_mm_per_ml: float = 0.004
    evaporation_mm_per_s: float = 0.0
    lux_red_full: float = 10000.0
    lux_blue_full: float = 8000.0
    lux_white_full: float = 40000.0
    integration_step_s: int = 1

    def __post_init__(self):
        for v in VARIABLE_ORDER:
            self.coupling.setdefault(v, 0.0)
        if self.thermal_mass_j_per_c <= 0:
            raise ValueError("thermal mass must be positive")
        if self.integration_step_s < 1:
            raise ValueError("integration step must be >= 1 s")
        rates = (
            self.vent_rate_per_s, self.humidifier_rh_per_s,
            self.co2_drawdown_ppm_per_s, self.evaporation_mm_per_s,
            *(self.coupling.get(v, 0.0) for v in VARIABLE_ORDER),
        )
        if any(r < 0 for r in rates):
            raise ValueError("rates must be non-negative")
        if self.reservoir_volume_l <= 0 or self.reference_volume_l <= 0:
            raise ValueError("reservoir volumes must be positive")


def light_output_lux(bank: ActuatorBank, params: ChamberParams) -> float:
    """Instantaneous illuminance from the channel fractions (no dynamics)."""
    lux = (bank.light_red * params.lux_red_full
           + bank.light_blue * params.lux_blue_full
           + bank.light_white * params.lux_white_full)
    return VARIABLES["light_illuminance"].clamp(lux)


def step(state: EnvironmentState, actuators: ActuatorBank, params: ChamberParams,
         dt: int) -> EnvironmentState:
    """Advance the chamber by dt seconds under fixed actuator settings.

    dt must be a positive multiple of params.integration_step_s. Dosed
    volumes (flow x run time, capped at dt) are spread uniformly over the
    substeps; the pH/EC shift per ml is scaled by reference/reservoir volume.
    """
    h = params.integration_step_s
    if dt < 1 or dt % h != 0:
        raise StepMismatch(f"dt {dt} is not a positive multiple of the {h} s integration step")
    n = dt // h

    amb = params.ambient
    k = params.coupling
    vent = params.vent_rate_per_s if actuators.vent_open else 0.0
    dilution = params.reference_volume_l / params.reservoir_volume_l
    light_mean = (actuators.light_red + actuators.light_blue + actuators.light_white) / 3.0

    # Per-substep dosed volumes (uniform spread over the tick).
    share = {p: getattr(actuators, p).volume_ml(dt) / n for p in DOSING_PUMPS}

    temp = state.air_temperature
    hum = state.air_humidity
    co2 = state.air_carbon_dioxide
    wtemp = state.water_temperature
    ph = state.water_potential_hydrogen
    ec = state.water_electrical_conductivity
    level = state.water_level

    heat_rate = (actuators.heater * params.heater_power_w
                 - actuators.chiller * params.chiller_power_w) / params.thermal_mass_j_per_c

    for _ in range(n):
        d_temp = heat_rate + (k["air_temperature"] + vent) * (amb.air_temperature - temp)
        d_hum = (actuators.humidifier * params.humidifier_rh_per_s
                 + (k["air_humidity"] + vent) * (amb.air_humidity - hum))
        d_co2 = ((k["air_carbon_dioxide"] + vent) * (amb.air_carbon_dioxide - co2)
                 - params.co2_drawdown_ppm_per_s * light_mean)
        d_wtemp = k["water_temperature"] * (amb.water_temperature - wtemp)
        d_ph = k["water_potential_hydrogen"] * (amb.water_potential_hydrogen - ph)
        d_ec = k["water_electrical_conductivity"] * (amb.water_electrical_conductivity - ec)
        d_level = k["water_level"] * (amb.water_level - level) - params.evaporation_mm_per_s

        temp = _clamp("air_temperature", temp + h * d_temp)
        hum = _clamp("air_humidity", hum + h * d_hum)
        co2 = _clamp("air_carbon_dioxide", co2 + h * d_co2)
        wtemp = _clamp("water_temperature", wtemp + h * d_wtemp)
        ph = _clamp("water_potential_hydrogen",
                    ph + h * d_ph + (share["ph_up"] - share["ph_down"])
                    * params.ph_shift_per_ml * dilution)
        ec = _clamp("water_electrical_conductivity",
                    ec + h * d_ec + (share["nutrient_a"] + share["nutrient_b"])
                    * params.ec_rise_per_ml * dilution)
        level = _clamp("water_level",
                       level + h * d_level + share["fresh_water"] * params.level_mm_per_ml)

    return EnvironmentState(
        air_temperature=temp,
        air_humidity=hum,
        air_carbon_dioxide=co2,
        water_temperature=wtemp,
        water_potential_hydrogen=ph,
        water_electrical_conductivity=ec,
        light_illuminance=light_output_lux(actuators, params),
        water_level=level,
        sim_time=state.sim_time + dt,
    )


def _clamp(var: str, value: float) -> float:
    return VARIABLES[var].clamp(value)


def read_sensors(state: EnvironmentState, model: SensorModel, rng_seed: int,
                 elapsed_since_power_on: int) -> dict[str, float | None]:
    """Imperfect sensor readout of a chamber state.

    Returns one entry per registered variable: a float reading, or None while
    the channel is still inside its warm-up window. Noise is drawn from a
    generator seeded with rng_seed, one draw per variable in registry order,
    so a fixed seed gives a fixed readout.
    """
    rng = random.Random(rng_seed)
    readings: dict[str, float | None] = {}
    for var in VARIABLE_ORDER:
        noise = rng.gauss(0.0, 1.0)
        ch = model.channels[var]
        if elapsed_since_power_on < ch.warm_up_s:
            readings[var] = None
            continue
        value = getattr(state, var) + noise * ch.sigma
        if ch.quantization > 0:
            value = round(value / ch.quantization) * ch.quantization
        readings[var] = VARIABLES[var].clamp(value)
    return readings


@dataclass(frozen=True)
class Chamber:
    """A simulation bundle: current state plus physics and sensor models."""

    state: EnvironmentState
    params: ChamberParams
    sensors: SensorModel

    @classmethod
    def from_preset(cls, name: str) -> "Chamber":
        return cls(*scenario_preset(name))


def _default_sensor_channels() -> dict[str, SensorChannel]:
    return {
        "air_temperature": SensorChannel(quantization=0.1),
        "air_humidity": SensorChannel(quantization=0.1),
        "air_carbon_dioxide": SensorChannel(quantization=1.0, warm_up_s=150),
        "water_temperature": SensorChannel(quantization=0.1),
        "water_potential_hydrogen": SensorChannel(quantization=0.01),
        "water_electrical_conductivity": SensorChannel(quantization=1.0),
        "light_illuminance": SensorChannel(quantization=1.0),
        "water_level": SensorChannel(quantization=1.0),
    }


def _noisy_sensor_channels() -> dict[str, SensorChannel]:
    # Accuracy figures are mapped to gaussian noise with 2*sigma = accuracy.
    ch = _default_sensor_channels()
    sigmas = {
        "air_temperature": 0.05,
        "air_humidity": 0.05,
        "air_carbon_dioxide": 25.0,
        "water_temperature": 0.25,
        "water_potential_hydrogen": 0.01,
        "water_electrical_conductivity": 10.0,
        "light_illuminance": 20.0,
        "water_level": 0.5,
    }
    return {var: replace(ch[var], sigma=sigmas[var]) for var in ch}


def scenario_preset(name: str) -> tuple[EnvironmentState, ChamberParams, SensorModel]:
    """Documented parameter bundles used by tests and the CLI.

    Preset schema version 1:
      default_desktop -- 22 °C / 45 %RH / 400 ppm ambient, quiet sensors,
                         chamber initially equilibrated with ambient.
      noisy_sensors   -- same plant, gaussian sensor noise at the published
                         accuracies (2*sigma = accuracy).
      hot_ambient     -- 32 °C ambient and slow reservoir evaporation.
    """
    if name == "default_desktop":
        params = ChamberParams()
        return params.ambient, params, SensorModel(_default_sensor_channels())
    if name == "noisy_sensors":
        params = ChamberParams()
        return params.ambient, params, SensorModel(_noisy_sensor_channels())
    if name == "hot_ambient":
        ambient = EnvironmentState(air_temperature=32.0, air_humidity=55.0,
                                   water_temperature=30.0)
        params = ChamberParams(ambient=ambient, evaporation_mm_per_s=1e-5)
        return ambient, params, SensorModel(_default_sensor_channels())
    raise UnknownPreset(name)
