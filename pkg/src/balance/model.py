"""Kinematic/inertial tree model and floating-base state."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .so3 import quat_to_matrix, rpy_to_matrix

GRAVITY = 9.81


class ModelError(ValueError):
    """Raised for malformed model files (named offender in the message)."""


@dataclass(frozen=True)
class Link:
    name: str
    mass: float
    com: np.ndarray          # CoM offset in the link frame
    inertia: np.ndarray      # 3x3 about the link CoM, link-frame axes


@dataclass(frozen=True)
class Joint:
    name: str
    parent: str
    child: str
    origin_r: np.ndarray     # fixed rotation parent link -> joint frame
    origin_p: np.ndarray
    axis: np.ndarray         # revolute axis, unit, joint frame


@dataclass(frozen=True)
class Frame:
    name: str
    link: str
    origin_r: np.ndarray
    origin_p: np.ndarray


@dataclass(frozen=True)
class RobotModel:
    """Immutable tree of rigid links; joint order defines the DOF order."""

    name: str
    base_link: str
    links: tuple
    joints: tuple
    frames: tuple
    link_index: dict = field(repr=False)
    joint_index: dict = field(repr=False)
    frame_index: dict = field(repr=False)
    parent_joint: tuple = field(repr=False)   # per link: joint index or -1 for base
    ancestor_joints: tuple = field(repr=False)  # per link: joint indices base -> link
    order: tuple = field(repr=False)          # link indices, parents first

    @property
    def n(self) -> int:
        return len(self.joints)

    @property
    def total_mass(self) -> float:
        return float(sum(l.mass for l in self.links))

    def frame_link(self, name: str):
        """Resolve a frame or link name to (link index, fixed R, fixed p)."""
        if name in self.frame_index:
            f = self.frames[self.frame_index[name]]
            return self.link_index[f.link], f.origin_r, f.origin_p
        if name in self.link_index:
            return self.link_index[name], np.eye(3), np.zeros(3)
        raise KeyError(f"unknown frame '{name}'")


def _as_vec3(x, what):
    a = np.asarray(x, dtype=float)
    if a.shape != (3,):
        raise ModelError(f"{what}: expected 3 numbers, got shape {a.shape}")
    return a


def load_model(text: str) -> RobotModel:
    """Parse and validate a JSON model description."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelError(f"model JSON parse error: {e}") from e

    name = raw.get("name", "robot")
    try:
        base = raw["base_link"]
        raw_links = raw["links"]
    except KeyError as e:
        raise ModelError(f"missing top-level key {e}") from e

    links = []
    for rl in raw_links:
        lname = rl.get("name", "<unnamed>")
        mass = float(rl["mass"])
        if mass <= 0:
            raise ModelError(f"link '{lname}': mass must be positive, got {mass}")
        inertia = np.asarray(rl["inertia"], dtype=float).reshape(3, 3)
        if np.linalg.norm(inertia - inertia.T) > 1e-9 * max(1.0, np.linalg.norm(inertia)):
            raise ModelError(f"link '{lname}': inertia matrix is not symmetric")
        if np.min(np.linalg.eigvalsh(inertia)) <= 0:
            raise ModelError(f"link '{lname}': inertia matrix is not positive definite")
        links.append(Link(lname, mass, _as_vec3(rl["com"], f"link '{lname}' com"), inertia))
    link_index = {l.name: i for i, l in enumerate(links)}
    if len(link_index) != len(links):
        raise ModelError("duplicate link names")
    if base not in link_index:
        raise ModelError(f"base_link '{base}' is not a declared link")

    joints = []
    for rj in raw.get("joints", []):
        jname = rj.get("name", "<unnamed>")
        axis = _as_vec3(rj["axis"], f"joint '{jname}' axis")
        if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
            raise ModelError(f"joint '{jname}': axis must be unit norm")
        for side in ("parent", "child"):
            if rj[side] not in link_index:
                raise ModelError(f"joint '{jname}': unknown {side} link '{rj[side]}'")
        joints.append(
            Joint(
                jname,
                rj["parent"],
                rj["child"],
                rpy_to_matrix(rj.get("origin_rpy", (0, 0, 0))),
                _as_vec3(rj.get("origin_xyz", (0, 0, 0)), f"joint '{jname}' origin_xyz"),
                axis,
            )
        )
    joint_index = {j.name: i for i, j in enumerate(joints)}

    # tree check: every non-base link has exactly one parent joint, no cycles
    parent_joint = [-1] * len(links)
    for ji, j in enumerate(joints):
        ci = link_index[j.child]
        if j.child == base:
            raise ModelError(f"joint '{j.name}': base link cannot be a joint child")
        if parent_joint[ci] != -1:
            raise ModelError(f"link '{j.child}' has more than one parent joint")
        parent_joint[ci] = ji
    for li, l in enumerate(links):
        if l.name != base and parent_joint[li] == -1:
            raise ModelError(f"link '{l.name}' is not connected to the tree")

    ancestors = [None] * len(links)
    order = []
    for li, l in enumerate(links):
        chain, cur, seen = [], li, set()
        while links[cur].name != base:
            if cur in seen:
                raise ModelError(f"cycle in tree involving link '{links[cur].name}'")
            seen.add(cur)
            ji = parent_joint[cur]
            chain.append(ji)
            cur = link_index[joints[ji].parent]
            if len(chain) > len(joints):
                raise ModelError(f"cycle in tree involving joint '{joints[ji].name}'")
        ancestors[li] = tuple(reversed(chain))
    order = sorted(range(len(links)), key=lambda li: len(ancestors[li]))

    frames = []
    for rf in raw.get("frames", []):
        fname = rf.get("name", "<unnamed>")
        if rf["link"] not in link_index:
            raise ModelError(f"frame '{fname}': unknown link '{rf['link']}'")
        frames.append(
            Frame(
                fname,
                rf["link"],
                rpy_to_matrix(rf.get("origin_rpy", (0, 0, 0))),
                _as_vec3(rf.get("origin_xyz", (0, 0, 0)), f"frame '{fname}' origin_xyz"),
            )
        )
    frame_index = {f.name: i for i, f in enumerate(frames)}

    return RobotModel(
        name=name,
        base_link=base,
        links=tuple(links),
        joints=tuple(joints),
        frames=tuple(frames),
        link_index=link_index,
        joint_index=joint_index,
        frame_index=frame_index,
        parent_joint=tuple(parent_joint),
        ancestor_joints=tuple(ancestors),
        order=tuple(order),
    )


def load_model_file(path) -> RobotModel:
    with open(path, "r", encoding="utf-8") as fh:
        return load_model(fh.read())


@dataclass
class RobotState:
    """Base pose (position + unit quaternion), joint angles, and velocities.

    The base twist is (p_dot, omega) with the angular velocity expressed in
    the inertial frame (mixed representation).
    """

    base_pos: np.ndarray
    base_quat: np.ndarray     # (w, x, y, z)
    joint_pos: np.ndarray
    base_vel: np.ndarray      # (p_dot, omega), inertial frame
    joint_vel: np.ndarray

    @staticmethod
    def zero(model: RobotModel) -> "RobotState":
        n = model.n
        return RobotState(
            np.zeros(3), np.array([1.0, 0, 0, 0]), np.zeros(n), np.zeros(6), np.zeros(n)
        )

    def validate(self, model: RobotModel) -> None:
        if abs(np.linalg.norm(self.base_quat) - 1.0) > 1e-9:
            raise ValueError("base quaternion is not unit norm")
        for arr, dim, what in (
            (self.joint_pos, model.n, "joint_pos"),
            (self.joint_vel, model.n, "joint_vel"),
            (self.base_pos, 3, "base_pos"),
            (self.base_vel, 6, "base_vel"),
        ):
            if np.asarray(arr).shape != (dim,):
                raise ValueError(f"{what}: expected shape ({dim},)")

    @property
    def base_rot(self) -> np.ndarray:
        return quat_to_matrix(self.base_quat)

    @property
    def nu(self) -> np.ndarray:
        return np.concatenate([self.base_vel, self.joint_vel])

    def with_nu(self, nu: np.ndarray) -> "RobotState":
        nu = np.asarray(nu, dtype=float)
        return replace(self, base_vel=nu[:6].copy(), joint_vel=nu[6:].copy())

    def copy(self) -> "RobotState":
        return RobotState(
            self.base_pos.copy(),
            self.base_quat.copy(),
            self.joint_pos.copy(),
            self.base_vel.copy(),
            self.joint_vel.copy(),
        )


@dataclass
class SpatialVector:
    """6-vector with a linear and an angular part."""

    linear: np.ndarray
    angular: np.ndarray
    role: str = "twist"   # twist | wrench | momentum

    @property
    def array(self) -> np.ndarray:
        return np.concatenate([self.linear, self.angular])

    @staticmethod
    def from_array(a: np.ndarray, role: str = "twist") -> "SpatialVector":
        a = np.asarray(a, dtype=float).reshape(6)
        return SpatialVector(a[:3].copy(), a[3:].copy(), role)
