"""Scenario configuration: TOML in, validated dataclass out, TOML back out.

Gains may be given as scalars (expanded to scalar*identity of the right size
when the controller is built) or as full row-major matrices.
"""
from __future__ import annotations

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np


class ConfigError(ValueError):
    pass


_CONTACTS = ("one_foot", "two_feet")
_CONTROLLERS = ("classical", "modified", "two_feet_qp")
_REFERENCES = ("hold", "com_sine")
_AXES = {"x": 0, "y": 1, "z": 2}


@dataclass
class ScenarioConfig:
    model: str
    contact: str = "one_foot"
    controller: str = "modified"
    duration: float = 10.0
    dt: float = 1e-3
    log_every: int = 10
    seed: int = 0

    ref_type: str = "hold"
    ref_axis: str = "y"
    ref_amplitude: float = 0.05
    ref_frequency: float = 0.3

    # scalar or row-major nested list
    kp_momentum: object = 10.0
    ki_momentum: object = 2.0
    kp_joint: object = 20.0
    kd_joint: object = 5.0

    initial_joints: list = field(default_factory=list)
    perturbation_joints: list = field(default_factory=list)
    perturbation_magnitude: float = 0.0

    k_pos: float = 100.0
    k_vel: float = 20.0
    mu: float = 0.7
    half_length: float = 0.1
    half_width: float = 0.05
    fz_min: float = 1.0

    def __post_init__(self):
        if self.contact not in _CONTACTS:
            raise ConfigError(f"contact must be one of {_CONTACTS}, got '{self.contact}'")
        if self.controller not in _CONTROLLERS:
            raise ConfigError(
                f"controller must be one of {_CONTROLLERS}, got '{self.controller}'"
            )
        if self.ref_type not in _REFERENCES:
            raise ConfigError(f"reference type must be one of {_REFERENCES}")
        if self.ref_axis not in _AXES:
            raise ConfigError(f"reference axis must be x, y or z, got '{self.ref_axis}'")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.duration < 0:
            raise ConfigError("duration must be nonnegative")
        if self.ref_amplitude < 0:
            raise ConfigError("reference amplitude must be nonnegative")
        if self.log_every < 1:
            raise ConfigError("log_every must be a positive integer")
        if self.k_pos < 0 or self.k_vel < 0:
            raise ConfigError("stabilization gains must be nonnegative")
        if self.controller == "two_feet_qp" and self.contact != "two_feet":
            raise ConfigError("two_feet_qp controller requires two_feet contact")
        if self.contact == "two_feet" and self.controller != "two_feet_qp":
            raise ConfigError("two_feet contact requires the two_feet_qp controller")

    @property
    def axis_vector(self) -> np.ndarray:
        v = np.zeros(3)
        v[_AXES[self.ref_axis]] = 1.0
        return v

    def gain_matrix(self, name: str, size: int) -> np.ndarray:
        raw = getattr(self, name)
        if isinstance(raw, (int, float)):
            return float(raw) * np.eye(size)
        mat = np.asarray(raw, dtype=float)
        if mat.shape != (size, size):
            raise ConfigError(f"{name} must be a scalar or a {size}x{size} matrix")
        return mat


def _section(data: dict, name: str) -> dict:
    sec = data.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    return sec


def from_toml_text(text: str) -> ScenarioConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"invalid TOML: {e}") from e
    sc = _section(data, "scenario")
    if "model" not in sc:
        raise ConfigError("[scenario] must set 'model'")
    ref = _section(data, "reference")
    gains = _section(data, "gains")
    init = _section(data, "initial")
    contact = _section(data, "contact_params")
    kwargs = dict(
        model=sc["model"],
        contact=sc.get("contact", "one_foot"),
        controller=sc.get("controller", "modified"),
        duration=float(sc.get("duration", 10.0)),
        dt=float(sc.get("dt", 1e-3)),
        log_every=int(sc.get("log_every", 10)),
        seed=int(sc.get("seed", 0)),
        ref_type=ref.get("type", "hold"),
        ref_axis=ref.get("axis", "y"),
        ref_amplitude=float(ref.get("amplitude", 0.05)),
        ref_frequency=float(ref.get("frequency", 0.3)),
        kp_momentum=gains.get("kp_momentum", 10.0),
        ki_momentum=gains.get("ki_momentum", 2.0),
        kp_joint=gains.get("kp_joint", 20.0),
        kd_joint=gains.get("kd_joint", 5.0),
        initial_joints=list(init.get("joints", [])),
        perturbation_joints=list(init.get("perturbation_joints", [])),
        perturbation_magnitude=float(init.get("perturbation_magnitude", 0.0)),
        k_pos=float(contact.get("k_pos", 100.0)),
        k_vel=float(contact.get("k_vel", 20.0)),
        mu=float(contact.get("mu", 0.7)),
        half_length=float(contact.get("half_length", 0.1)),
        half_width=float(contact.get("half_width", 0.05)),
        fz_min=float(contact.get("fz_min", 1.0)),
    )
    return ScenarioConfig(**kwargs)


def load_scenario(path) -> ScenarioConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"scenario file not found: {p}")
    return from_toml_text(p.read_text(encoding="utf-8"))


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    raise ConfigError(f"cannot serialize value of type {type(value).__name__}")


def to_toml_text(cfg: ScenarioConfig) -> str:
    lines = ["[scenario]"]
    for k in ("model", "contact", "controller", "duration", "dt", "log_every", "seed"):
        lines.append(f"{k} = {_fmt(getattr(cfg, k))}")
    lines += ["", "[reference]", f'type = {_fmt(cfg.ref_type)}',
              f"axis = {_fmt(cfg.ref_axis)}", f"amplitude = {_fmt(cfg.ref_amplitude)}",
              f"frequency = {_fmt(cfg.ref_frequency)}"]
    lines += ["", "[gains]"]
    for k in ("kp_momentum", "ki_momentum", "kp_joint", "kd_joint"):
        lines.append(f"{k} = {_fmt(getattr(cfg, k))}")
    lines += ["", "[initial]", f"joints = {_fmt(cfg.initial_joints)}",
              f"perturbation_joints = {_fmt(cfg.perturbation_joints)}",
              f"perturbation_magnitude = {_fmt(cfg.perturbation_magnitude)}"]
    lines += ["", "[contact_params]"]
    for k in ("k_pos", "k_vel", "mu", "half_length", "half_width", "fz_min"):
        lines.append(f"{k} = {_fmt(getattr(cfg, k))}")
    return "\n".join(lines) + "\n"
