import pytest

from openchamber.config import ConfigError, load_setup, parse_config

GOOD = """
# overrides on top of the default desktop preset
preset = default_desktop
chamber.thermal_mass_j_per_c = 20000
chamber.ambient.air_temperature = 18.5
chamber.coupling.air_temperature = 0.0002
chamber.initial.water_potential_hydrogen = 5.8
sensor.air_carbon_dioxide.warm_up_s = 90
sensor.air_temperature.sigma = 0.05
control.period_s = 5
control.post_recipe = all_off
control.air_temperature.kp = 0.9
control.water_potential_hydrogen.dose_ml = 2.5
calibration.ph_up = 4
run.seed = 99
"""


def test_parse_config_types():
    values = parse_config("a = 1\nb = 2.5\nc = true\nd = hold_last\n# note\n\n")
    assert values == {"a": 1, "b": 2.5, "c": True, "d": "hold_last"}


def test_full_setup_overlay():
    setup = load_setup(text=GOOD)
    assert setup.chamber.params.thermal_mass_j_per_c == 20000
    assert setup.chamber.params.ambient.air_temperature == 18.5
    assert setup.chamber.params.coupling["air_temperature"] == 0.0002
    assert setup.chamber.state.water_potential_hydrogen == 5.8
    assert setup.chamber.sensors.channels["air_carbon_dioxide"].warm_up_s == 90
    assert setup.chamber.sensors.channels["air_temperature"].sigma == 0.05
    assert setup.control.period_s == 5
    assert setup.control.post_recipe == "all_off"
    assert setup.control.variables["air_temperature"].kp == 0.9
    assert setup.control.variables["water_potential_hydrogen"].dose_ml == 2.5
    assert setup.calibration["ph_up"] == 4.0
    assert setup.seed == 99
    # untouched values keep their preset defaults
    assert setup.chamber.params.heater_power_w == 150.0
    assert setup.control.variables["air_temperature"].ki == 0.01


def test_empty_setup_is_the_preset():
    setup = load_setup()
    assert setup.preset == "default_desktop"
    assert setup.chamber.params.thermal_mass_j_per_c == 30000.0


def test_preset_override_flag_wins():
    setup = load_setup(text="preset = default_desktop",
                       preset_override="hot_ambient")
    assert setup.chamber.params.ambient.air_temperature == 32.0


@pytest.mark.parametrize("line", [
    "no_equals_sign",
    "= 5",
    "chamber.warp_drive = 1",
    "sensor.air_temperature.flavor = 3",
    "control.air_temperature.warp = 1",
    "chamber.ambient.vibes = 2",
    "calibration.warp = 1",
])
def test_unknown_or_malformed_keys_rejected(line):
    with pytest.raises(ConfigError):
        load_setup(text=line)


def test_invalid_values_rejected():
    with pytest.raises(ConfigError):
        load_setup(text="chamber.thermal_mass_j_per_c = -5")
    with pytest.raises(ConfigError):
        load_setup(text="control.period_s = 0")
    with pytest.raises(ConfigError):
        load_setup(text="control.air_temperature.kind = psychic")


def test_missing_file():
    with pytest.raises(ConfigError):
        load_setup(path="/nonexistent/openchamber.conf")
