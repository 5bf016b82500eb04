"""Floating-base dynamics: mass matrix, bias forces, Coriolis matrix, energy.

The mass matrix is assembled from per-link CoM Jacobians and spatial inertias;
inverse dynamics uses an explicit Newton-Euler acceleration propagation in
world coordinates. The two routes are independent, which the tests exploit.
"""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from .kinematics import Kin
from .model import GRAVITY, RobotModel, RobotState
from .so3 import matrix_to_quat, rotvec_to_matrix, skew, so3_left_jacobian


def _masses(model: RobotModel) -> np.ndarray:
    return np.array([l.mass for l in model.links])


def _mass_matrix(kin: Kin) -> np.ndarray:
    j = kin.com_jacobians()
    jv, jw = j[:, :3, :], j[:, 3:, :]
    k = j.shape[2]
    masses = _masses(kin.model)
    jv_flat = jv.reshape(-1, k)
    jw_flat = jw.reshape(-1, k)
    out = jv_flat.T @ (masses[:, None, None] * jv).reshape(-1, k)
    out += jw_flat.T @ (kin.iw @ jw).reshape(-1, k)
    return out


def mass_matrix(model: RobotModel, state: RobotState) -> np.ndarray:
    """(n+6)x(n+6) symmetric positive definite mass matrix."""
    return _mass_matrix(Kin(model, state))


def partition(mat: np.ndarray, n: int):
    """Split an (n+6)x(n+6) matrix into base/coupling/joint blocks."""
    return mat[:6, :6], mat[:6, 6:], mat[6:, 6:]


def _inverse_dynamics(kin: Kin, nu_dot: np.ndarray, gravity: bool = True) -> np.ndarray:
    j = kin.com_jacobians()
    jd = kin.com_jacobian_dots()
    nu = kin.state.nu
    acc = j @ nu_dot + jd @ nu   # (links, 6): CoM acceleration, angular acceleration
    g = np.array([0.0, 0.0, GRAVITY if gravity else 0.0])
    force = _masses(kin.model)[:, None] * (acc[:, :3] + g)
    iww = (kin.iw @ kin.w[:, :, None])[:, :, 0]
    torque = (kin.iw @ acc[:, 3:, None])[:, :, 0] + np.cross(kin.w, iww)
    k = j.shape[2]
    wrench = np.concatenate([force, torque], axis=1)
    return j.reshape(-1, k).T @ wrench.reshape(-1)


def inverse_dynamics(
    model: RobotModel, state: RobotState, nu_dot: np.ndarray, gravity: bool = True
) -> np.ndarray:
    """Generalized forces realizing nu_dot at the current state."""
    return _inverse_dynamics(Kin(model, state), nu_dot, gravity)


def bias_forces(model: RobotModel, state: RobotState) -> np.ndarray:
    """h = C(q, nu) nu + G(q): inverse dynamics at zero acceleration."""
    return _inverse_dynamics(Kin(model, state), np.zeros(6 + model.n))


def gravity_forces(model: RobotModel, state: RobotState) -> np.ndarray:
    still = replace(state, base_vel=np.zeros(6), joint_vel=np.zeros(model.n))
    return bias_forces(model, still)


def _mass_matrix_dot(kin: Kin) -> np.ndarray:
    j = kin.com_jacobians()
    jd = kin.com_jacobian_dots()
    jv, jw = j[:, :3, :], j[:, 3:, :]
    jvd, jwd = jd[:, :3, :], jd[:, 3:, :]
    masses = _masses(kin.model)
    sw = np.zeros((len(kin.model.links), 3, 3))
    sw[:, 0, 1], sw[:, 0, 2] = -kin.w[:, 2], kin.w[:, 1]
    sw[:, 1, 0], sw[:, 1, 2] = kin.w[:, 2], -kin.w[:, 0]
    sw[:, 2, 0], sw[:, 2, 1] = -kin.w[:, 1], kin.w[:, 0]
    iwd = sw @ kin.iw - kin.iw @ sw
    half = np.einsum("l,lik,lim->km", masses, jvd, jv, optimize=True)
    half += np.einsum("lak,lab,lbm->km", jwd, kin.iw, jw, optimize=True)
    out = half + half.T
    out += np.einsum("lak,lab,lbm->km", jw, iwd, jw, optimize=True)
    return out


def mass_matrix_dot(model: RobotModel, state: RobotState) -> np.ndarray:
    """Time derivative of the mass matrix along the current state flow."""
    return _mass_matrix_dot(Kin(model, state))


def _perturbed(state: RobotState, delta: np.ndarray) -> RobotState:
    r = rotvec_to_matrix(delta[3:6]) @ state.base_rot
    return replace(
        state,
        base_pos=state.base_pos + delta[:3],
        base_quat=matrix_to_quat(r),
        joint_pos=state.joint_pos + delta[6:],
    )


def coriolis_matrix(model: RobotModel, state: RobotState, h: float = 1e-5) -> np.ndarray:
    """Coriolis matrix via Christoffel symbols over a tangent parametrization.

    The configuration is parametrized by delta = (dp, dtheta, dq_j) with the
    base rotation perturbed as exp(S(dtheta)) R. The Christoffel construction
    is applied to the pulled-back mass matrix A(delta)^T M A(delta), with
    A = blockdiag(1, J_left(dtheta), 1) accounting for the omega/dtheta_dot
    mismatch; a final correction maps back to the mixed representation so that
    C nu + G = bias and M_dot - 2C is skew-symmetric along state flows.
    """
    ndof = 6 + model.n
    nu = state.nu

    def m_delta(delta):
        a = np.eye(ndof)
        a[3:6, 3:6] = so3_left_jacobian(delta[3:6])
        return a.T @ _mass_matrix(Kin(model, _perturbed(state, delta))) @ a

    dm = np.empty((ndof, ndof, ndof))
    for k in range(ndof):
        e = np.zeros(ndof)
        e[k] = h
        dm[k] = (m_delta(e) - m_delta(-e)) / (2.0 * h)

    c_delta = 0.5 * (
        np.einsum("kij,k->ij", dm, nu)
        + np.einsum("jik,k->ij", dm, nu)
        - np.einsum("ijk,k->ij", dm, nu)
    )
    # mixed-representation correction: d/dt of the dexp factor at delta = 0
    a_dot = np.zeros((ndof, ndof))
    a_dot[3:6, 3:6] = 0.5 * skew(state.base_vel[3:])
    return c_delta - _mass_matrix(Kin(model, state)) @ a_dot


def com_position(model: RobotModel, state: RobotState) -> np.ndarray:
    kin = Kin(model, state)
    masses = np.array([l.mass for l in model.links])
    return masses @ kin.com / model.total_mass


def com_velocity(model: RobotModel, state: RobotState) -> np.ndarray:
    kin = Kin(model, state)
    masses = np.array([l.mass for l in model.links])
    return masses @ kin.comd / model.total_mass


def total_energy(model: RobotModel, state: RobotState) -> float:
    """Kinetic plus gravitational potential energy (zero at CoM height 0)."""
    kin = Kin(model, state)
    nu = state.nu
    masses = np.array([l.mass for l in model.links])
    z_com = float(masses @ kin.com[:, 2] / model.total_mass)
    return float(0.5 * nu @ _mass_matrix(kin) @ nu + model.total_mass * GRAVITY * z_com)
