"""Floating-base momentum control toolkit: dynamics, controllers, simulation,
and numerical stability certificates for the constrained closed loop."""

from importlib import resources


def bundled_model_path(name: str):
    """Path to a bundled model file, e.g. 'desk_humanoid'."""
    if not name.endswith(".json"):
        name += ".json"
    return resources.files(__package__) / "models" / name


def bundled_scenario_path(name: str):
    """Path to a bundled scenario file, e.g. 'stable_one_foot'."""
    if not name.endswith(".toml"):
        name += ".toml"
    return resources.files(__package__) / "scenarios" / name
