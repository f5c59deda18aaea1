"""Growth-chamber control stack: recipes, simulation, control, storage, sync."""

__version__ = "0.1.0"
