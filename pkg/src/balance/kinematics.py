"""Forward kinematics, velocity/acceleration propagation, and point Jacobians.

All quantities live in the mixed representation: linear velocities are those
of frame origins and angular velocities are expressed in the inertial frame,
so a frame Jacobian has the base block [1, -S(p - p_B); 0, 1].
"""
from __future__ import annotations

import numpy as np

from .model import RobotModel, RobotState
from .so3 import skew

_MODEL_CACHE: dict = {}


def _model_arrays(model: RobotModel):
    """Per-model constants used by the forward pass, cached by identity."""
    key = id(model)
    hit = _MODEL_CACHE.get(key)
    if hit is not None and hit[0] is model:
        return hit[1]
    joints = []
    for j in model.joints:
        joints.append(
            (
                model.link_index[j.parent],
                model.link_index[j.child],
                j.origin_r,
                j.origin_p,
                j.axis,
                skew(j.axis),
                np.outer(j.axis, j.axis),
            )
        )
    arrays = {
        "joints": joints,
        "coms": np.stack([l.com for l in model.links]),
        "inertias": np.stack([l.inertia for l in model.links]),
        "masses": np.array([l.mass for l in model.links]),
        "child_order": [model.parent_joint[li] for li in model.order if model.parent_joint[li] >= 0],
    }
    _MODEL_CACHE[key] = (model, arrays)
    return arrays


def _cross(a, b):
    return np.array(
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    )


class Kin:
    """Single forward pass over the tree; shared by dynamics computations."""

    __slots__ = ("model", "state", "R", "p", "w", "pd", "ax", "axd", "jp", "jpd",
                 "com", "comd", "iw", "_anc", "_jc", "_jcd")

    def __init__(self, model: RobotModel, state: RobotState):
        self.model = model
        self.state = state
        nl, n = len(model.links), model.n
        q, qd = state.joint_pos, state.joint_vel
        self.R = np.empty((nl, 3, 3))
        self.p = np.empty((nl, 3))
        self.w = np.empty((nl, 3))
        self.pd = np.empty((nl, 3))
        self.ax = np.empty((n, 3))
        self.axd = np.empty((n, 3))
        self.jp = np.empty((n, 3))
        self.jpd = np.empty((n, 3))

        bi = model.link_index[model.base_link]
        self.R[bi] = state.base_rot
        self.p[bi] = state.base_pos
        self.pd[bi] = state.base_vel[:3]
        self.w[bi] = state.base_vel[3:]

        arrays = _model_arrays(model)
        eye3 = np.eye(3)
        cq, sq = np.cos(q), np.sin(q)
        for ji in arrays["child_order"]:
            pi, li, origin_r, origin_p, axis, kx, aa = arrays["joints"][ji]
            rp = self.R[pi]
            r_joint = rp @ origin_r
            ax_w = r_joint @ axis
            # Rodrigues about the (unit) joint axis, local frame
            rot = cq[ji] * eye3 + sq[ji] * kx + (1.0 - cq[ji]) * aa
            self.R[li] = r_joint @ rot
            self.p[li] = self.p[pi] + rp @ origin_p
            self.w[li] = self.w[pi] + ax_w * qd[ji]
            self.pd[li] = self.pd[pi] + _cross(self.w[pi], self.p[li] - self.p[pi])
            self.ax[ji] = ax_w
            self.axd[ji] = _cross(self.w[pi], ax_w)
            self.jp[ji] = self.p[li]
            self.jpd[ji] = self.pd[li]

        self.com = self.p + np.einsum("lij,lj->li", self.R, arrays["coms"])
        self.comd = self.pd + np.cross(self.w, self.com - self.p)
        # world-frame rotational inertia about each link CoM
        self.iw = np.einsum("lab,lbc,ldc->lad", self.R, arrays["inertias"], self.R)
        self._anc = None
        self._jc = None
        self._jcd = None

    @property
    def ancestor_mask(self) -> np.ndarray:
        """(links, joints) boolean incidence: joint k moves link l."""
        if self._anc is None:
            m = self.model
            anc = np.zeros((len(m.links), m.n), dtype=bool)
            for li in range(len(m.links)):
                anc[li, list(m.ancestor_joints[li])] = True
            self._anc = anc
        return self._anc

    def com_jacobians(self) -> np.ndarray:
        """Batched (links, 6, n+6) mixed Jacobians of the link CoM points."""
        if self._jc is None:
            m = self.model
            nl, n = len(m.links), m.n
            anc = self.ancestor_mask[:, :, None]
            bi = m.link_index[m.base_link]
            j = np.zeros((nl, 6, 6 + n))
            j[:, :3, :3] = np.eye(3)
            r = self.com - self.p[bi]
            j[:, 0, 4], j[:, 0, 5] = r[:, 2], -r[:, 1]
            j[:, 1, 3], j[:, 1, 5] = -r[:, 2], r[:, 0]
            j[:, 2, 3], j[:, 2, 4] = r[:, 1], -r[:, 0]
            j[:, 3:, 3:6] = np.eye(3)
            lin = np.cross(self.ax[None, :, :], self.com[:, None, :] - self.jp[None, :, :])
            j[:, :3, 6:] = np.where(anc, lin, 0.0).transpose(0, 2, 1)
            j[:, 3:, 6:] = np.where(anc, self.ax[None, :, :], 0.0).transpose(0, 2, 1)
            self._jc = j
        return self._jc

    def com_jacobian_dots(self) -> np.ndarray:
        """Time derivatives of com_jacobians along the current state flow."""
        if self._jcd is None:
            m = self.model
            nl, n = len(m.links), m.n
            anc = self.ancestor_mask[:, :, None]
            bi = m.link_index[m.base_link]
            jd = np.zeros((nl, 6, 6 + n))
            rd = self.comd - self.pd[bi]
            jd[:, 0, 4], jd[:, 0, 5] = rd[:, 2], -rd[:, 1]
            jd[:, 1, 3], jd[:, 1, 5] = -rd[:, 2], rd[:, 0]
            jd[:, 2, 3], jd[:, 2, 4] = rd[:, 1], -rd[:, 0]
            lin = np.cross(self.axd[None, :, :], self.com[:, None, :] - self.jp[None, :, :])
            lin += np.cross(self.ax[None, :, :], self.comd[:, None, :] - self.jpd[None, :, :])
            jd[:, :3, 6:] = np.where(anc, lin, 0.0).transpose(0, 2, 1)
            jd[:, 3:, 6:] = np.where(anc, self.axd[None, :, :], 0.0).transpose(0, 2, 1)
            self._jcd = jd
        return self._jcd

    # -- frames ------------------------------------------------------------

    def frame_pose(self, name: str):
        li, fr, fp = self.model.frame_link(name)
        return self.R[li] @ fr, self.p[li] + self.R[li] @ fp

    def frame_velocity(self, name: str) -> np.ndarray:
        li, _, fp = self.model.frame_link(name)
        pf = self.p[li] + self.R[li] @ fp
        return np.concatenate([self.pd[li] + np.cross(self.w[li], pf - self.p[li]), self.w[li]])

    # -- Jacobians ---------------------------------------------------------

    def point_jacobian(self, li: int, point: np.ndarray) -> np.ndarray:
        m = self.model
        j = np.zeros((6, 6 + m.n))
        j[:3, :3] = np.eye(3)
        j[:3, 3:6] = -skew(point - self.p[m.link_index[m.base_link]])
        j[3:, 3:6] = np.eye(3)
        for k in m.ancestor_joints[li]:
            j[:3, 6 + k] = np.cross(self.ax[k], point - self.jp[k])
            j[3:, 6 + k] = self.ax[k]
        return j

    def point_jacobian_dot(self, li: int, point: np.ndarray, point_vel: np.ndarray) -> np.ndarray:
        m = self.model
        bi = m.link_index[m.base_link]
        jd = np.zeros((6, 6 + m.n))
        jd[:3, 3:6] = -skew(point_vel - self.pd[bi])
        for k in m.ancestor_joints[li]:
            jd[:3, 6 + k] = np.cross(self.axd[k], point - self.jp[k]) + np.cross(
                self.ax[k], point_vel - self.jpd[k]
            )
            jd[3:, 6 + k] = self.axd[k]
        return jd

    def frame_jacobian(self, name: str) -> np.ndarray:
        li, _, fp = self.model.frame_link(name)
        return self.point_jacobian(li, self.p[li] + self.R[li] @ fp)

    # -- accelerations -----------------------------------------------------

    def acceleration_pass(self, nu_dot: np.ndarray):
        """Propagate link origin/CoM accelerations for a generalized acceleration.

        Returns (pdd, wd, comdd) with one row per link.
        """
        m = self.model
        nl = len(m.links)
        nu_dot = np.asarray(nu_dot, dtype=float)
        pdd = np.empty((nl, 3))
        wd = np.empty((nl, 3))
        bi = m.link_index[m.base_link]
        pdd[bi] = nu_dot[:3]
        wd[bi] = nu_dot[3:6]
        qd = self.state.joint_vel
        arrays = _model_arrays(m)
        for ji in arrays["child_order"]:
            pi, li = arrays["joints"][ji][0], arrays["joints"][ji][1]
            d = self.p[li] - self.p[pi]
            wd[li] = wd[pi] + self.axd[ji] * qd[ji] + self.ax[ji] * nu_dot[6 + ji]
            pdd[li] = pdd[pi] + _cross(wd[pi], d) + _cross(self.w[pi], _cross(self.w[pi], d))
        c = self.com - self.p
        comdd = pdd + np.cross(wd, c) + np.cross(self.w, np.cross(self.w, c))
        return pdd, wd, comdd

    def frame_acceleration(self, name: str, pdd: np.ndarray, wd: np.ndarray) -> np.ndarray:
        li, _, fp = self.model.frame_link(name)
        r = self.R[li] @ fp
        lin = pdd[li] + np.cross(wd[li], r) + np.cross(self.w[li], np.cross(self.w[li], r))
        return np.concatenate([lin, wd[li]])


def forward_kinematics(model: RobotModel, state: RobotState) -> dict:
    """Poses of every link frame and named frame, as name -> (R, p)."""
    state.validate(model)
    kin = Kin(model, state)
    poses = {l.name: (kin.R[i].copy(), kin.p[i].copy()) for i, l in enumerate(model.links)}
    for f in model.frames:
        poses[f.name] = kin.frame_pose(f.name)
    return poses


def frame_jacobian(model: RobotModel, state: RobotState, frame: str) -> np.ndarray:
    """6x(n+6) mixed Jacobian mapping nu to (origin velocity, inertial omega)."""
    return Kin(model, state).frame_jacobian(frame)


def jacobian_dot_nu(model: RobotModel, state: RobotState, frame: str) -> np.ndarray:
    """Drift acceleration J_dot nu of a frame (frame acceleration at nu_dot = 0)."""
    kin = Kin(model, state)
    pdd, wd, _ = kin.acceleration_pass(np.zeros(6 + model.n))
    return kin.frame_acceleration(frame, pdd, wd)


def constraint_consistent_state(model: RobotModel, frame: str, anchor,
                                joint_pos: np.ndarray,
                                joint_vel: np.ndarray) -> RobotState:
    """State with the given joint coordinates and the named frame welded to
    `anchor` = (R, p): the base pose is reconstructed so the frame sits at the
    anchor and the base twist so the frame velocity vanishes."""
    from .model import RobotState as _RS  # avoid polluting module namespace
    from .so3 import matrix_to_quat

    anchor_r, anchor_p = anchor
    joint_pos = np.asarray(joint_pos, dtype=float)
    joint_vel = np.asarray(joint_vel, dtype=float)
    st0 = _RS(
        base_pos=np.zeros(3),
        base_quat=np.array([1.0, 0.0, 0.0, 0.0]),
        joint_pos=joint_pos,
        base_vel=np.zeros(6),
        joint_vel=joint_vel,
    )
    kin0 = Kin(model, st0)
    rf0, pf0 = kin0.frame_pose(frame)   # frame pose in base coordinates
    base_r = anchor_r @ rf0.T
    base_p = anchor_p - base_r @ pf0
    st = _RS(
        base_pos=base_p,
        base_quat=matrix_to_quat(base_r),
        joint_pos=joint_pos,
        base_vel=np.zeros(6),
        joint_vel=joint_vel,
    )
    kin = Kin(model, st)
    j = kin.frame_jacobian(frame)
    rhs = -j[:, 6:] @ joint_vel
    # base block is [[1, -S(pf - pB)], [0, 1]]: invert analytically
    omega = rhs[3:]
    _, pf = kin.frame_pose(frame)
    vel = rhs[:3] + np.cross(pf - base_p, omega)
    return _RS(
        base_pos=base_p,
        base_quat=matrix_to_quat(base_r),
        joint_pos=joint_pos,
        base_vel=np.concatenate([vel, omega]),
        joint_vel=joint_vel,
    )
