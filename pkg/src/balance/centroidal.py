"""Change of velocity coordinates that block-diagonalizes the mass matrix.

The transformed base velocity is (CoM velocity, average angular velocity);
in these coordinates the gravity vector reduces to m*g*e3 and the 6-D robot
momentum is M_b_bar times the transformed base velocity.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .dynamics import _inverse_dynamics, _mass_matrix, _mass_matrix_dot, _masses, partition
from .kinematics import Kin
from .model import GRAVITY, RobotModel, RobotState
from .so3 import skew


@dataclass
class CentroidalTransform:
    t: np.ndarray          # (n+6)x(n+6) velocity transform
    t_inv: np.ndarray
    cxb: np.ndarray        # 6x6 base-to-CoM twist transform
    com: np.ndarray        # CoM position, inertial frame

    def __post_init__(self):
        assert np.allclose(self.t[:6, :6], self.cxb)


def _transform_from_kin(kin: Kin) -> CentroidalTransform:
    model = kin.model
    masses = _masses(model)
    com = masses @ kin.com / model.total_mass
    base_pos = kin.p[model.link_index[model.base_link]]
    cxb = np.eye(6)
    cxb[:3, 3:] = -skew(com - base_pos)
    m = _mass_matrix(kin)
    m_b, m_bj, _ = partition(m, model.n)
    e = np.linalg.solve(m_b, m_bj)
    ndof = 6 + model.n
    t = np.eye(ndof)
    t[:6, :6] = cxb
    t[:6, 6:] = cxb @ e
    t_inv = np.eye(ndof)
    cxb_inv = np.eye(6)
    cxb_inv[:3, 3:] = skew(com - base_pos)
    t_inv[:6, :6] = cxb_inv
    t_inv[:6, 6:] = -e
    return CentroidalTransform(t, t_inv, cxb, com)


def centroidal_transform(model: RobotModel, state: RobotState) -> CentroidalTransform:
    return _transform_from_kin(Kin(model, state))


@dataclass
class TransformedDynamics:
    m_bar: np.ndarray      # block-diagonal mass matrix
    m_b: np.ndarray        # 6x6 block: blockdiag(m*1_3, inertia about the CoM)
    m_j: np.ndarray        # n x n joint block
    g_bar: np.ndarray      # m*g*e3
    transform: CentroidalTransform
    jacobians: dict = field(default_factory=dict)   # frame -> 6x(n+6) transformed


def transformed_dynamics(model: RobotModel, state: RobotState, frames=()) -> TransformedDynamics:
    kin = Kin(model, state)
    tr = _transform_from_kin(kin)
    m = _mass_matrix(kin)
    m_bar = tr.t_inv.T @ m @ tr.t_inv
    g_bar = np.zeros(6 + model.n)
    g_bar[2] = model.total_mass * GRAVITY
    jac = {f: kin.frame_jacobian(f) @ tr.t_inv for f in frames}
    return TransformedDynamics(m_bar, m_bar[:6, :6], m_bar[6:, 6:], g_bar, tr, jac)


def momentum(model: RobotModel, state: RobotState) -> np.ndarray:
    """6-D momentum (linear, angular about the CoM), inertial orientation."""
    kin = Kin(model, state)
    tr = _transform_from_kin(kin)
    m_bar = tr.t_inv.T @ _mass_matrix(kin) @ tr.t_inv
    nu_bar = tr.t @ state.nu
    return m_bar[:6, :6] @ nu_bar[:6]


def momentum_from_links(model: RobotModel, state: RobotState) -> np.ndarray:
    """Independent route: sum of link momenta shifted to the CoM."""
    kin = Kin(model, state)
    masses = _masses(model)
    com = masses @ kin.com / model.total_mass
    lin = masses[:, None] * kin.comd
    ang = (kin.iw @ kin.w[:, :, None])[:, :, 0] + np.cross(kin.com - com, lin)
    return np.concatenate([lin.sum(axis=0), ang.sum(axis=0)])


def centroidal_momentum_matrix(model: RobotModel, state: RobotState) -> np.ndarray:
    """6x(n+6) map from the generalized velocity to the momentum."""
    kin = Kin(model, state)
    tr = _transform_from_kin(kin)
    m_bar = tr.t_inv.T @ _mass_matrix(kin) @ tr.t_inv
    return np.hstack([m_bar[:6, :6], np.zeros((6, model.n))]) @ tr.t


def average_angular_velocity(model: RobotModel, state: RobotState) -> np.ndarray:
    """Angular part of the transformed base twist (not integrable in general)."""
    tr = centroidal_transform(model, state)
    return (tr.t @ state.nu)[3:6]


def constrained_cmm(model: RobotModel, state: RobotState, support_frame: str) -> np.ndarray:
    """6xn momentum map in joint velocities, valid on the contact manifold.

    Rows 0-2 map to m times the CoM velocity, rows 3-5 to the angular momentum.
    """
    td = transformed_dynamics(model, state, frames=(support_frame,))
    j_bar = td.jacobians[support_frame]
    j_b, j_j = j_bar[:, :6], j_bar[:, 6:]
    cond = np.linalg.cond(j_b)
    if cond > 1e8:
        warnings.warn(
            f"support-frame base Jacobian nearly singular (cond {cond:.2e})", stacklevel=2
        )
    return -td.m_b @ np.linalg.solve(j_b, j_j)


@dataclass
class ControlQuantities:
    """Everything a momentum controller needs, in transformed coordinates."""

    mass: float
    com: np.ndarray
    nu_bar: np.ndarray
    h_momentum: np.ndarray         # 6-D momentum
    m_b: np.ndarray
    m_j: np.ndarray
    bias_b: np.ndarray             # transformed Coriolis+gravity, base rows
    bias_j: np.ndarray             # joint rows
    j_b: dict                      # frame -> 6x6 transformed base block
    j_j: dict                      # frame -> 6xn transformed joint block
    jdot_nu: dict                  # frame -> transformed drift acceleration
    transform: CentroidalTransform


def control_quantities(model: RobotModel, state: RobotState, frames) -> ControlQuantities:
    """Transformed dynamics terms, with the transform's time derivative analytic."""
    kin = Kin(model, state)
    tr = _transform_from_kin(kin)
    nu = state.nu
    n = model.n

    m = _mass_matrix(kin)
    m_bar = tr.t_inv.T @ m @ tr.t_inv
    h = _inverse_dynamics(kin, np.zeros(6 + n))

    # analytic time derivative of the transform along the state flow
    m_dot = _mass_matrix_dot(kin)
    mb, mbj, _ = partition(m, n)
    mb_dot, mbj_dot, _ = partition(m_dot, n)
    e = np.linalg.solve(mb, mbj)
    e_dot = np.linalg.solve(mb, mbj_dot - mb_dot @ e)
    masses = _masses(model)
    com_vel = masses @ kin.comd / model.total_mass
    base_vel = kin.pd[model.link_index[model.base_link]]
    x_dot = np.zeros((6, 6))
    x_dot[:3, 3:] = -skew(com_vel - base_vel)
    t_dot = np.zeros((6 + n, 6 + n))
    t_dot[:6, :6] = x_dot
    t_dot[:6, 6:] = x_dot @ e + tr.cxb @ e_dot
    t_dot_nu = t_dot @ nu

    g_bar = np.zeros(6 + n)
    g_bar[2] = model.total_mass * GRAVITY
    bias_bar = tr.t_inv.T @ h - m_bar @ t_dot_nu

    pdd, wd, _ = kin.acceleration_pass(np.zeros(6 + n))
    j_b, j_j, jdn = {}, {}, {}
    for f in frames:
        j_bar = kin.frame_jacobian(f) @ tr.t_inv
        j_b[f] = j_bar[:, :6]
        j_j[f] = j_bar[:, 6:]
        jdn[f] = kin.frame_acceleration(f, pdd, wd) - j_bar @ t_dot_nu

    nu_bar = tr.t @ nu
    return ControlQuantities(
        mass=model.total_mass,
        com=tr.com,
        nu_bar=nu_bar,
        h_momentum=m_bar[:6, :6] @ nu_bar[:6],
        m_b=m_bar[:6, :6],
        m_j=m_bar[6:, 6:],
        bias_b=bias_bar[:6],
        bias_j=bias_bar[6:],
        j_b=j_b,
        j_j=j_j,
        jdot_nu=jdn,
        transform=tr,
    )
