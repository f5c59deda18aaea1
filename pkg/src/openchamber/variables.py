"""Registry of the environmental variables the chamber measures and controls.

Every other module keys its state, telemetry, and setpoints by these names.
The registry is fixed: recipes naming anything else are rejected.
"""

from dataclasses import dataclass


@dataclass(frozen=True, slots=True)
class VariableDescriptor:
    """One environmental variable with its unit and hard sensor range."""

    name: str
    unit: str
    min: float
    max: float

    def __post_init__(self) -> None:
        if not self.min < self.max:
            raise ValueError(f"{self.name}: min must be strictly below max")

    def clamp(self, value: float) -> float:
        return min(max(value, self.min), self.max)

    def in_range(self, value) -> bool:
        return self.min <= value <= self.max


VARIABLES: dict[str, VariableDescriptor] = {
    d.name: d
    for d in (
        VariableDescriptor("air_temperature", "°C", -40.0, 125.0),
        VariableDescriptor("air_humidity", "%RH", 0.0, 100.0),
        VariableDescriptor("air_carbon_dioxide", "ppm", 0.0, 2000.0),
        VariableDescriptor("water_temperature", "°C", -10.0, 85.0),
        VariableDescriptor("water_potential_hydrogen", "pH", 0.0, 14.0),
        VariableDescriptor("water_electrical_conductivity", "µS/cm", 5.0, 200000.0),
        VariableDescriptor("light_illuminance", "lux", 0.0, 40000.0),
        VariableDescriptor("water_level", "mm", 0.0, 1000.0),
    )
}

# Canonical iteration order (state vectors, sensor readout, telemetry).
VARIABLE_ORDER: tuple[str, ...] = tuple(VARIABLES)
