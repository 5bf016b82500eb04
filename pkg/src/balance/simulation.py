"""Closed-loop simulation of the foot-constrained robot.

Forward dynamics solves the contact KKT system with acceleration-level
constraint stabilization; integration is fixed-step RK4 over the chart
(p_B, Q, q_j, nu) with the quaternion renormalized after every step. The
controller torque is held constant across the four stages (zero-order hold).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from . import control as ctl_mod
from .config import ScenarioConfig
from .control import FrictionConeParams, GainSet, OneFootController, Reference, TwoFeetController
from .dynamics import _inverse_dynamics, _mass_matrix, com_position, total_energy
from .kinematics import Kin, constraint_consistent_state
from .model import RobotModel, RobotState
from .so3 import matrix_to_rotvec, quat_derivative, quat_normalize, quat_to_matrix

TIKHONOV = 1e-10


class SimulationError(RuntimeError):
    pass


@dataclass
class ContactSetup:
    """Welded frames with their anchor poses (captured at t=0) and
    acceleration-level stabilization gains."""

    frames: tuple
    anchors: dict                     # frame -> (R, p)
    k_pos: float = 100.0
    k_vel: float = 20.0

    def __post_init__(self):
        self.frames = tuple(self.frames)
        if self.k_pos < 0 or self.k_vel < 0:
            raise ValueError("stabilization gains must be nonnegative")
        for f in self.frames:
            if f not in self.anchors:
                raise ValueError(f"missing anchor pose for frame '{f}'")

    @staticmethod
    def from_state(model: RobotModel, state: RobotState, frames,
                   k_pos: float = 100.0, k_vel: float = 20.0) -> "ContactSetup":
        kin = Kin(model, state)
        anchors = {f: kin.frame_pose(f) for f in frames}
        return ContactSetup(tuple(frames), anchors, k_pos, k_vel)


@dataclass
class SimState:
    state: RobotState
    t: float = 0.0


def _pose_error(kin: Kin, frame: str, anchor) -> np.ndarray:
    r, p = kin.frame_pose(frame)
    ar, ap = anchor
    return np.concatenate([p - ap, matrix_to_rotvec(r @ ar.T)])


def constrained_forward_dynamics(model: RobotModel, state: RobotState,
                                 tau: np.ndarray, contact: ContactSetup):
    """Accelerations and constraint wrenches of the welded-feet dynamics."""
    n = model.n
    ndof = n + 6
    kin = Kin(model, state)
    m = _mass_matrix(kin)
    h = _inverse_dynamics(kin, np.zeros(ndof))
    gen = np.concatenate([np.zeros(6), np.asarray(tau, dtype=float)]) - h
    if not contact.frames:
        return np.linalg.solve(m, gen), np.zeros(0)

    j = np.vstack([kin.frame_jacobian(f) for f in contact.frames])
    pdd, wd, _ = kin.acceleration_pass(np.zeros(ndof))
    jdnu = np.concatenate([kin.frame_acceleration(f, pdd, wd) for f in contact.frames])
    err = np.concatenate([_pose_error(kin, f, contact.anchors[f]) for f in contact.frames])
    rhs_c = -jdnu - 2.0 * contact.k_vel * (j @ state.nu) - contact.k_pos * err

    k = j.shape[0]
    kkt = np.block([[m, -j.T], [j, np.zeros((k, k))]])
    rhs = np.concatenate([gen, rhs_c])
    if k > 6:
        # redundant double support: damp the wrench block
        kkt[ndof:, ndof:] = -TIKHONOV * np.eye(k)
        sol = np.linalg.solve(kkt, rhs)
    else:
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            rank = np.linalg.matrix_rank(kkt)
            raise SimulationError(
                f"singular contact KKT matrix (rank {rank} of {kkt.shape[0]})"
            ) from None
    return sol[:ndof], sol[ndof:]


def _derivative(model: RobotModel, state: RobotState, tau, contact):
    nu_dot, f = constrained_forward_dynamics(model, state, tau, contact)
    qdot = quat_derivative(state.base_quat, state.base_vel[3:])
    return state.base_vel[:3], qdot, state.joint_vel, nu_dot, f


def _advance(state: RobotState, dp, dq, djp, dnu) -> RobotState:
    nu = state.nu + dnu
    return RobotState(
        base_pos=state.base_pos + dp,
        base_quat=state.base_quat + dq,
        joint_pos=state.joint_pos + djp,
        base_vel=nu[:6],
        joint_vel=nu[6:],
    )


def step(model: RobotModel, sim_state: SimState, tau, contact: ContactSetup,
         dt: float) -> SimState:
    """One RK4 step with the torque held constant (zero-order hold)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    s0 = sim_state.state
    tau = np.asarray(tau, dtype=float)
    k1 = _derivative(model, s0, tau, contact)
    k2 = _derivative(model, _advance(s0, *(0.5 * dt * v for v in k1[:4])), tau, contact)
    k3 = _derivative(model, _advance(s0, *(0.5 * dt * v for v in k2[:4])), tau, contact)
    k4 = _derivative(model, _advance(s0, *(dt * v for v in k3[:4])), tau, contact)
    incs = [
        (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) for i in range(4)
    ]
    new = _advance(s0, *incs)
    new = replace(new, base_quat=quat_normalize(new.base_quat))
    flat = np.concatenate([new.base_pos, new.base_quat, new.joint_pos, new.nu])
    if not np.all(np.isfinite(flat)):
        raise SimulationError("state became non-finite (NaN/inf) during integration")
    return SimState(new, sim_state.t + dt)


def log_columns(n: int, k: int):
    cols = ["t", "jerr_norm"]
    cols += [f"H_{i}" for i in range(1, 7)]
    cols += [f"Ht_{i}" for i in range(1, 7)]
    cols += [f"I_{i}" for i in range(1, 7)]
    cols += [f"f_{i}" for i in range(1, k + 1)]
    cols += [f"tau_{i}" for i in range(1, n + 1)]
    cols += ["cres", "energy", "com_x", "com_y", "com_z"]
    return cols


@dataclass
class TrajectoryLog:
    columns: list
    rows: np.ndarray
    final_state: SimState | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rows = np.atleast_2d(np.asarray(self.rows, dtype=float))
        if self.rows.shape[1] != len(self.columns):
            raise ValueError("row width does not match column schema")
        t = self.column("t")
        if np.any(np.diff(t) <= 0):
            raise ValueError("log times must be strictly increasing")

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.columns.index(name)]

    def block(self, prefix: str) -> np.ndarray:
        idx = [i for i, c in enumerate(self.columns) if c.startswith(prefix + "_")]
        return self.rows[:, idx]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for row in self.rows:
                w.writerow([f"{v:.12e}" for v in row])

    @staticmethod
    def read_csv(path) -> "TrajectoryLog":
        with open(path, "r", newline="") as fh:
            r = csv.reader(fh)
            columns = next(r)
            rows = [[float(v) for v in row] for row in r]
        return TrajectoryLog(columns, np.asarray(rows))


def _build_gains(cfg: ScenarioConfig, n: int) -> GainSet:
    kp = cfg.gain_matrix("kp_momentum", 6)
    kpj = cfg.gain_matrix("kp_joint", n)
    kdj = cfg.gain_matrix("kd_joint", n)
    if cfg.controller == "classical":
        ki_raw = cfg.ki_momentum
        ki_lin = (
            float(ki_raw) * np.eye(3)
            if isinstance(ki_raw, (int, float))
            else np.asarray(ki_raw, dtype=float)[:3, :3]
        )
        return GainSet.classical(kp, ki_lin, kpj, kdj)
    return GainSet.modified(kp, cfg.gain_matrix("ki_momentum", 6), kpj, kdj)


def build_scenario(model: RobotModel, cfg: ScenarioConfig, seed: int | None = None):
    """Initial state, controller and contact setup for a scenario.

    The posture reference is the unperturbed initial joint vector; the
    perturbation is applied on top of it before the sole is re-anchored.
    """
    n = model.n
    q_nom = np.asarray(cfg.initial_joints, dtype=float) if cfg.initial_joints else np.zeros(n)
    if q_nom.shape != (n,):
        raise SimulationError(f"initial joints must have length {n}")

    if cfg.perturbation_joints:
        dq = np.asarray(cfg.perturbation_joints, dtype=float)
        if dq.shape != (n,):
            raise SimulationError(f"perturbation joints must have length {n}")
    else:
        rng = np.random.default_rng(cfg.seed if seed is None else seed)
        dq = cfg.perturbation_magnitude * rng.standard_normal(n)

    anchor = (np.eye(3), np.zeros(3))
    nominal = constraint_consistent_state(model, "left_sole", anchor, q_nom, np.zeros(n))
    state0 = constraint_consistent_state(model, "left_sole", anchor, q_nom + dq, np.zeros(n))

    reference = Reference(
        q_des=q_nom,
        com0=com_position(model, nominal),
        mass=model.total_mass,
        amplitude=cfg.ref_amplitude if cfg.ref_type == "com_sine" else 0.0,
        frequency=cfg.ref_frequency if cfg.ref_type == "com_sine" else 0.0,
        axis=cfg.axis_vector,
    )
    gains = _build_gains(cfg, n)
    if cfg.controller == "two_feet_qp":
        frames = ("left_sole", "right_sole")
        cone = FrictionConeParams(cfg.mu, cfg.half_length, cfg.half_width, cfg.fz_min)
        controller = TwoFeetController(model, gains, reference, cone, frames)
    else:
        frames = ("left_sole",)
        controller = OneFootController(model, gains, reference, "left_sole")
    contact = ContactSetup.from_state(model, state0, frames, cfg.k_pos, cfg.k_vel)
    controller.initialize(state0)
    return SimState(state0, 0.0), controller, contact, reference


def run_scenario(model: RobotModel, cfg: ScenarioConfig,
                 seed: int | None = None) -> TrajectoryLog:
    sim, controller, contact, reference = build_scenario(model, cfg, seed)
    n = model.n
    k = 6 * len(contact.frames)
    steps = int(round(cfg.duration / cfg.dt))
    columns = log_columns(n, k)
    rows = []

    def record(sim_state: SimState, out) -> None:
        st = sim_state.state
        kin = Kin(model, st)
        j = np.vstack([kin.frame_jacobian(f) for f in contact.frames])
        cres = float(np.linalg.norm(j @ st.nu))
        h = out.diagnostics["h_err"] + reference.momentum(sim_state.t)
        rows.append(
            np.concatenate(
                [
                    [sim_state.t, np.linalg.norm(st.joint_pos - reference.q_des)],
                    h,
                    out.diagnostics["h_err"],
                    out.diagnostics["integral"],
                    out.wrench,
                    out.tau,
                    [cres, total_energy(model, st)],
                    com_position(model, st),
                ]
            )
        )

    for i in range(steps):
        out = controller.step(sim.state, sim.t, cfg.dt)
        if i % cfg.log_every == 0:
            record(sim, out)
        try:
            sim = step(model, sim, out.tau, contact, cfg.dt)
        except SimulationError as e:
            raise SimulationError(f"{e} at step {i} (t={sim.t:.4f})") from None
    out = controller.compute(sim.state, sim.t)
    record(sim, out)
    return TrajectoryLog(columns, np.asarray(rows), final_state=sim,
                         meta={"steps": steps, "dt": cfg.dt, "contact": contact.frames})
