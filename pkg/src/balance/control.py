"""Momentum-based stack-of-tasks balance controllers.

Three flavours share the momentum outer loop:
  * classical one-foot: integral of the raw momentum error, zero angular
    integral gain, raw postural PD gains;
  * modified one-foot: joint-velocity-driven momentum integral (angular rows
    frozen at the reference posture) and postural gains projected through the
    null space of the momentum task, which makes the constrained closed loop
    provably asymptotically stable;
  * two-feet: same outer loop, contact wrenches allocated by a QP that
    minimizes the torque norm inside linearized friction cones.

All formulas operate on transformed (block-diagonal) dynamics quantities.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import qp
from .centroidal import ControlQuantities, control_quantities
from .kinematics import Kin, constraint_consistent_state
from .model import GRAVITY, RobotModel, RobotState


def _check_spd(mat: np.ndarray, what: str, psd: bool = False) -> None:
    mat = np.asarray(mat, dtype=float)
    if np.linalg.norm(mat - mat.T) > 1e-9 * max(1.0, np.linalg.norm(mat)):
        raise ValueError(f"{what} must be symmetric")
    ev = np.linalg.eigvalsh(mat)
    if psd:
        if ev[0] < -1e-10 * max(1.0, ev[-1]):
            raise ValueError(f"{what} must be positive semidefinite")
    elif ev[0] <= 0:
        raise ValueError(f"{what} must be positive definite")


@dataclass
class GainSet:
    """Controller gains; definiteness is checked per mode at construction."""

    mode: str                 # "classical" | "modified"
    kp_momentum: np.ndarray   # 6x6 SPD
    ki_momentum: np.ndarray   # 6x6; classical: angular block zero
    kp_joint: np.ndarray      # n x n; classical: raw gain, modified: weight in K N M_j
    kd_joint: np.ndarray

    def __post_init__(self):
        if self.mode not in ("classical", "modified"):
            raise ValueError(f"unknown controller mode '{self.mode}'")
        _check_spd(self.kp_momentum, "momentum proportional gain")
        _check_spd(self.kp_joint, "joint proportional gain")
        _check_spd(self.kd_joint, "joint derivative gain")
        if self.mode == "classical":
            _check_spd(self.ki_momentum, "momentum integral gain", psd=True)
            if np.abs(self.ki_momentum[3:, :]).max() > 0 or np.abs(self.ki_momentum[:3, 3:]).max() > 0:
                raise ValueError("classical integral gain must have a zero angular block")
            _check_spd(self.ki_momentum[:3, :3], "linear momentum integral gain")
        else:
            _check_spd(self.ki_momentum, "momentum integral gain")

    @staticmethod
    def classical(kp, ki_linear, kp_joint, kd_joint) -> "GainSet":
        ki = np.zeros((6, 6))
        ki[:3, :3] = np.asarray(ki_linear, dtype=float)
        return GainSet("classical", np.asarray(kp, float), ki,
                       np.asarray(kp_joint, float), np.asarray(kd_joint, float))

    @staticmethod
    def modified(kp, ki, kp_joint, kd_joint) -> "GainSet":
        return GainSet("modified", np.asarray(kp, float), np.asarray(ki, float),
                       np.asarray(kp_joint, float), np.asarray(kd_joint, float))


@dataclass
class Reference:
    """Desired CoM trajectory (optionally sinusoidal) and joint posture."""

    q_des: np.ndarray
    com0: np.ndarray
    mass: float
    amplitude: float = 0.0
    frequency: float = 0.0
    axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))

    def com(self, t: float) -> np.ndarray:
        w = 2.0 * np.pi * self.frequency
        return self.com0 + self.axis * (self.amplitude * np.sin(w * t))

    def com_vel(self, t: float) -> np.ndarray:
        w = 2.0 * np.pi * self.frequency
        return self.axis * (self.amplitude * w * np.cos(w * t))

    def com_acc(self, t: float) -> np.ndarray:
        w = 2.0 * np.pi * self.frequency
        return self.axis * (-self.amplitude * w * w * np.sin(w * t))

    def momentum(self, t: float) -> np.ndarray:
        return np.concatenate([self.mass * self.com_vel(t), np.zeros(3)])

    def momentum_rate(self, t: float) -> np.ndarray:
        return np.concatenate([self.mass * self.com_acc(t), np.zeros(3)])

    @property
    def is_static(self) -> bool:
        return self.amplitude == 0.0


@dataclass
class ControllerState:
    """Integral of the momentum error; reset() zeroes it."""

    integral: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def reset(self) -> None:
        self.integral = np.zeros(6)


@dataclass
class ControlOutput:
    tau: np.ndarray
    wrench: np.ndarray          # 6 (one foot) or 12 (two feet)
    hdot_star: np.ndarray
    tau0: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def momentum_reference(gains: GainSet, ctrl_state: ControllerState, h: np.ndarray,
                       reference: Reference, t: float) -> np.ndarray:
    """Desired momentum rate from PI feedback plus feedforward."""
    h_err = h - reference.momentum(t)
    return (
        reference.momentum_rate(t)
        - gains.kp_momentum @ h_err
        - gains.ki_momentum @ ctrl_state.integral
    )


def _constrained_cmm_blocks(q: ControlQuantities, frame: str) -> np.ndarray:
    return -q.m_b @ np.linalg.solve(q.j_b[frame], q.j_j[frame])


def _integrand(gains: GainSet, q: ControlQuantities, state: RobotState,
               reference: Reference, t: float, frame: str,
               omega_rows_des: np.ndarray) -> np.ndarray:
    if gains.mode == "classical":
        return q.h_momentum - reference.momentum(t)
    jg = _constrained_cmm_blocks(q, frame)
    rate = np.concatenate([jg[:3] @ state.joint_vel, omega_rows_des @ state.joint_vel])
    return rate - reference.momentum(t)


def omega_rows_at_reference(model: RobotModel, state: RobotState, reference: Reference,
                            frame: str) -> np.ndarray:
    """Angular rows of the constrained momentum map, frozen at the posture reference."""
    kin = Kin(model, state)
    anchor = kin.frame_pose(frame)
    st_des = constraint_consistent_state(model, frame, anchor, reference.q_des,
                                         np.zeros(model.n))
    q_des = control_quantities(model, st_des, (frame,))
    return _constrained_cmm_blocks(q_des, frame)[3:]


def integrate_momentum_error(gains: GainSet, ctrl_state: ControllerState,
                             model: RobotModel, state: RobotState,
                             reference: Reference, dt: float,
                             support_frame: str = "left_sole") -> ControllerState:
    """Forward-Euler update of the momentum-error integral."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    q = control_quantities(model, state, (support_frame,))
    rows = (
        omega_rows_at_reference(model, state, reference, support_frame)
        if gains.mode == "modified"
        else np.zeros((3, model.n))
    )
    inc = _integrand(gains, q, state, reference, 0.0, support_frame, rows)
    return ControllerState(ctrl_state.integral + dt * inc)


def _wrench(q: ControlQuantities, frame: str, hdot_star: np.ndarray) -> np.ndarray:
    rhs = hdot_star + np.array([0.0, 0.0, q.mass * GRAVITY, 0.0, 0.0, 0.0])
    return np.linalg.solve(q.j_b[frame].T, rhs)


def one_foot_wrench(model: RobotModel, state: RobotState, hdot_star: np.ndarray,
                    support_frame: str = "left_sole") -> np.ndarray:
    """Contact wrench realizing the desired momentum rate (single support)."""
    q = control_quantities(model, state, (support_frame,))
    return _wrench(q, support_frame, hdot_star)


def _effective_joint_gains(gains: GainSet, q: ControlQuantities, frames):
    if gains.mode == "classical":
        return gains.kp_joint, gains.kd_joint
    lam = _task_matrix(q, frames)
    n_lam = _nullspace_projector(lam)
    kp = gains.kp_joint @ n_lam @ q.m_j
    kd = gains.kd_joint @ n_lam @ q.m_j
    return kp, kd


def _postural(q: ControlQuantities, frames, f: np.ndarray, gains: GainSet,
              state: RobotState, reference: Reference) -> np.ndarray:
    jjt_f = np.zeros(q.m_j.shape[0])
    for k, frame in enumerate(frames):
        jjt_f += q.j_j[frame].T @ f[6 * k : 6 * k + 6]
    kp, kd = _effective_joint_gains(gains, q, frames)
    return (
        q.bias_j - jjt_f
        - kp @ (state.joint_pos - reference.q_des)
        - kd @ state.joint_vel
    )


def postural_torque(model: RobotModel, state: RobotState, f: np.ndarray, gains: GainSet,
                    reference: Reference, support_frame: str = "left_sole") -> np.ndarray:
    """Null-space torque: gravity/wrench compensation plus joint PD."""
    q = control_quantities(model, state, (support_frame,))
    return _postural(q, (support_frame,), np.asarray(f, float), gains, state, reference)


def _task_matrix(q: ControlQuantities, frames) -> np.ndarray:
    j_j = np.vstack([q.j_j[f] for f in frames])
    return j_j @ np.linalg.inv(q.m_j)


def _nullspace_projector(lam: np.ndarray) -> np.ndarray:
    return np.eye(lam.shape[1]) - qp.pinv_svd(lam) @ lam


def _minv_product(q: ControlQuantities, frame_order, vec_b: np.ndarray,
                  vec_j: np.ndarray) -> np.ndarray:
    """J_bar M_bar^-1 applied blockwise to a (base, joint) pair."""
    xb = np.linalg.solve(q.m_b, vec_b)
    xj = np.linalg.solve(q.m_j, vec_j)
    return np.vstack([np.hstack([q.j_b[f], q.j_j[f]]) for f in frame_order]) @ np.concatenate(
        [xb, xj]
    )


def _one_foot_tau(q: ControlQuantities, frame: str, f: np.ndarray,
                  tau0: np.ndarray) -> tuple:
    lam = _task_matrix(q, (frame,))
    lam_pinv = qp.pinv_svd(lam)
    if np.linalg.matrix_rank(lam, tol=1e-8 * max(1.0, np.linalg.norm(lam))) < 6:
        raise ValueError("momentum task matrix is rank deficient (needs n >= 6)")
    n_lam = np.eye(lam.shape[1]) - lam_pinv @ lam
    drift = _minv_product(q, (frame,), q.bias_b - q.j_b[frame].T @ f,
                          q.bias_j - q.j_j[frame].T @ f)
    task = drift - q.jdot_nu[frame]
    tau = lam_pinv @ task + n_lam @ tau0
    return tau, lam, lam_pinv, n_lam


def one_foot_torques(model: RobotModel, state: RobotState, f: np.ndarray,
                     tau0: np.ndarray, support_frame: str = "left_sole") -> np.ndarray:
    """Torques realizing the contact wrench while keeping the sole still."""
    q = control_quantities(model, state, (support_frame,))
    tau, *_ = _one_foot_tau(q, support_frame, np.asarray(f, float), np.asarray(tau0, float))
    return tau


@dataclass
class FrictionConeParams:
    mu: float
    half_length: float    # CoP bound along x
    half_width: float     # CoP bound along y
    fz_min: float = 0.0

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("friction coefficient must be positive")
        if self.fz_min < 0:
            raise ValueError("fz_min must be nonnegative")


def friction_cone(params: FrictionConeParams):
    """11-row pyramid C f <= b for one foot wrench (fx, fy, fz, tx, ty, tz)."""
    mu, hl, hw = params.mu, params.half_length, params.half_width
    mu_t = mu * min(hl, hw)
    c = np.array(
        [
            [1, 0, -mu, 0, 0, 0],
            [-1, 0, -mu, 0, 0, 0],
            [0, 1, -mu, 0, 0, 0],
            [0, -1, -mu, 0, 0, 0],
            [0, 0, -1, 0, 0, 0],
            [0, 0, -hl, 0, 1, 0],
            [0, 0, -hl, 0, -1, 0],
            [0, 0, -hw, 1, 0, 0],
            [0, 0, -hw, -1, 0, 0],
            [0, 0, -mu_t, 0, 0, 1],
            [0, 0, -mu_t, 0, 0, -1],
        ],
        dtype=float,
    )
    b = np.zeros(11)
    b[4] = -params.fz_min
    return c, b


def two_feet_controller(model: RobotModel, state: RobotState, hdot_star: np.ndarray,
                        gains: GainSet, reference: Reference,
                        cone: FrictionConeParams,
                        frames=("left_sole", "right_sole")) -> ControlOutput:
    """Wrench allocation QP: minimize the torque norm subject to the desired
    momentum rate and per-foot friction cones; the inner torque problem is
    eliminated in closed form (torques are affine in the stacked wrench)."""
    q = control_quantities(model, state, frames)
    return _two_feet(q, model, state, hdot_star, gains, reference, cone, frames)


def _two_feet(q: ControlQuantities, model: RobotModel, state: RobotState,
              hdot_star: np.ndarray, gains: GainSet, reference: Reference,
              cone: FrictionConeParams, frames) -> ControlOutput:
    n = model.n
    tau0 = _postural(q, frames, np.zeros(6 * len(frames)), gains, state, reference)
    # tau0 above lacks the -J_j^T f term; fold it into the affine map below
    lam_f = _task_matrix(q, frames)                      # 12 x n
    lam_pinv = qp.pinv_svd(lam_f)
    j_stack = np.vstack([np.hstack([q.j_b[f], q.j_j[f]]) for f in frames])
    j_b_stack = np.vstack([q.j_b[f] for f in frames])    # 12 x 6
    j_j_stack = np.vstack([q.j_j[f] for f in frames])    # 12 x n
    minv_jt = np.vstack(
        [np.linalg.solve(q.m_b, j_b_stack.T), np.linalg.solve(q.m_j, j_j_stack.T)]
    )
    jmj = j_stack @ minv_jt                              # 12 x 12
    rhs0 = -np.concatenate([q.jdot_nu[f] for f in frames]) + _minv_product(
        q, frames, q.bias_b, q.bias_j
    )
    # tau*(f) = c + d f, including the postural wrench-compensation term
    n_lam = np.eye(n) - lam_pinv @ lam_f
    c_vec = tau0 + lam_pinv @ (rhs0 - lam_f @ tau0)
    d_mat = -lam_pinv @ jmj - n_lam @ j_j_stack.T

    a_eq = j_b_stack.T                                   # 6 x 12: sum of J_b^T f_k
    b_eq = hdot_star + np.array([0.0, 0.0, q.mass * GRAVITY, 0.0, 0.0, 0.0])
    cone_c, cone_b = friction_cone(cone)
    a_in = np.kron(np.eye(len(frames)), cone_c)
    b_in = np.tile(cone_b, len(frames))

    hess = d_mat.T @ d_mat
    grad = d_mat.T @ c_vec
    try:
        problem = qp.QpProblem(hess, grad, a_eq, b_eq, a_in, b_in)
    except qp.QpError as e:
        raise ValueError(f"wrench allocation problem is degenerate: {e}") from e
    sol = qp.solve(problem)
    if sol.status != "optimal":
        x_ls = qp.solve_equality_ls(a_eq, b_eq, np.zeros(12))
        violated = np.flatnonzero(a_in @ x_ls - b_in > 0).tolist()
        raise ValueError(
            f"wrench allocation QP {sol.status}; cone rows violated at the "
            f"least-norm momentum-feasible point: {violated}"
        )
    f = sol.x
    tau = c_vec + d_mat @ f
    return ControlOutput(
        tau=tau,
        wrench=f,
        hdot_star=hdot_star,
        tau0=tau0 - j_j_stack.T @ f,
        diagnostics={
            "qp_status": sol.status,
            "qp_iterations": sol.iterations,
            "qp_active_set": sol.active_set,
            "qp_kkt": qp.kkt_residuals(problem, sol),
            "qp_objective": problem.objective(f),
        },
    )


class OneFootController:
    """Stateful single-support controller: holds the momentum-error integral."""

    def __init__(self, model: RobotModel, gains: GainSet, reference: Reference,
                 support_frame: str = "left_sole"):
        self.model = model
        self.gains = gains
        self.reference = reference
        self.support_frame = support_frame
        self.ctrl_state = ControllerState()
        self._omega_rows = None

    def _omega_rows_des(self, state: RobotState) -> np.ndarray:
        if self._omega_rows is None:
            self._omega_rows = omega_rows_at_reference(
                self.model, state, self.reference, self.support_frame
            )
        return self._omega_rows

    def initialize(self, state: RobotState) -> None:
        """Set the momentum-error integral so its fixed point is the posture
        reference (the CoM rows equal the integral of the momentum error only
        up to a constant, which this pins down)."""
        from .dynamics import com_position

        lin = self.reference.mass * (com_position(self.model, state)
                                     - self.reference.com(0.0))
        if self.gains.mode == "modified":
            ang = self._omega_rows_des(state) @ (state.joint_pos - self.reference.q_des)
        else:
            ang = np.zeros(3)
        self.ctrl_state.integral = np.concatenate([lin, ang])

    def compute(self, state: RobotState, t: float,
                quantities: ControlQuantities | None = None) -> ControlOutput:
        q = quantities or control_quantities(self.model, state, (self.support_frame,))
        hdot_star = momentum_reference(self.gains, self.ctrl_state, q.h_momentum,
                                       self.reference, t)
        f = _wrench(q, self.support_frame, hdot_star)
        tau0 = _postural(q, (self.support_frame,), f, self.gains, state, self.reference)
        tau, lam, lam_pinv, n_lam = _one_foot_tau(q, self.support_frame, f, tau0)
        return ControlOutput(
            tau=tau,
            wrench=f,
            hdot_star=hdot_star,
            tau0=tau0,
            diagnostics={
                "h_err": q.h_momentum - self.reference.momentum(t),
                "integral": self.ctrl_state.integral.copy(),
                "nullspace_residual": float(np.abs(lam @ n_lam).max()),
            },
        )

    def advance(self, state: RobotState, t: float, dt: float,
                quantities: ControlQuantities | None = None) -> None:
        q = quantities or control_quantities(self.model, state, (self.support_frame,))
        rows = (
            self._omega_rows_des(state)
            if self.gains.mode == "modified"
            else np.zeros((3, self.model.n))
        )
        inc = _integrand(self.gains, q, state, self.reference, t, self.support_frame, rows)
        self.ctrl_state.integral = self.ctrl_state.integral + dt * inc

    def step(self, state: RobotState, t: float, dt: float) -> ControlOutput:
        q = control_quantities(self.model, state, (self.support_frame,))
        out = self.compute(state, t, q)
        self.advance(state, t, dt, q)
        return out


class TwoFeetController:
    """Stateful double-support controller with QP wrench allocation."""

    def __init__(self, model: RobotModel, gains: GainSet, reference: Reference,
                 cone: FrictionConeParams,
                 frames=("left_sole", "right_sole")):
        self.model = model
        self.gains = gains
        self.reference = reference
        self.cone = cone
        self.frames = tuple(frames)
        self.ctrl_state = ControllerState()
        self._omega_rows = None

    def initialize(self, state: RobotState) -> None:
        from .dynamics import com_position

        lin = self.reference.mass * (com_position(self.model, state)
                                     - self.reference.com(0.0))
        if self.gains.mode == "modified":
            if self._omega_rows is None:
                self._omega_rows = omega_rows_at_reference(
                    self.model, state, self.reference, self.frames[0]
                )
            ang = self._omega_rows @ (state.joint_pos - self.reference.q_des)
        else:
            ang = np.zeros(3)
        self.ctrl_state.integral = np.concatenate([lin, ang])

    def compute(self, state: RobotState, t: float,
                quantities: ControlQuantities | None = None) -> ControlOutput:
        q = quantities or control_quantities(self.model, state, self.frames)
        hdot_star = momentum_reference(self.gains, self.ctrl_state, q.h_momentum,
                                       self.reference, t)
        out = _two_feet(q, self.model, state, hdot_star, self.gains, self.reference,
                        self.cone, self.frames)
        out.diagnostics["h_err"] = q.h_momentum - self.reference.momentum(t)
        out.diagnostics["integral"] = self.ctrl_state.integral.copy()
        return out

    def advance(self, state: RobotState, t: float, dt: float,
                quantities: ControlQuantities | None = None) -> None:
        q = quantities or control_quantities(self.model, state, self.frames)
        if self.gains.mode == "modified":
            if self._omega_rows is None:
                # integral momentum map anchored at the first support frame
                self._omega_rows = omega_rows_at_reference(
                    self.model, state, self.reference, self.frames[0]
                )
            rows = self._omega_rows
        else:
            rows = np.zeros((3, self.model.n))
        inc = _integrand(self.gains, q, state, self.reference, t, self.frames[0], rows)
        self.ctrl_state.integral = self.ctrl_state.integral + dt * inc

    def step(self, state: RobotState, t: float, dt: float) -> ControlOutput:
        q = control_quantities(self.model, state, self.frames)
        out = self.compute(state, t, q)
        self.advance(state, t, dt, q)
        return out
