"""Linearization of the constrained closed loop and Lyapunov certificates.

Once a sole is welded the closed loop evolves on minimal coordinates
x = (q_j - q_j^d, q_j_dot): the base pose follows from the anchored sole and
the momentum-error integral has a first-order closed form in q_j. About the
equilibrium (q_j^d, 0) the dynamics linearize to A = [[0, 1], [A1, A2]].
A1/A2 are available analytically for the modified controller; a
central-difference linearization of the actual closed-loop vector field is
the independent oracle and also handles the classical controller.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import control as ctl
from .centroidal import control_quantities
from .kinematics import constraint_consistent_state
from .model import RobotModel
from .qp import pinv_svd
from .simulation import ContactSetup, constrained_forward_dynamics


class RankError(ValueError):
    """Momentum task matrix loses row rank at the requested equilibrium."""


@dataclass
class LinearizedSystem:
    a: np.ndarray                 # 2n x 2n, [[0, 1], [a1, a2]]
    a1: np.ndarray
    a2: np.ndarray
    q_des: np.ndarray
    m_j: np.ndarray
    m_b: np.ndarray
    lam: np.ndarray               # 6 x n momentum task matrix
    n_lam: np.ndarray
    j_b: np.ndarray
    j_j: np.ndarray

    @property
    def n(self) -> int:
        return self.a1.shape[0]


@dataclass
class LyapunovCertificate:
    q1: np.ndarray
    q2: np.ndarray
    p: np.ndarray                 # blockdiag(M_j^T Q1 M_j, M_j^T Q2 M_j)
    q1_min_eig: float
    q2_min_eig: float
    vdot_max_eig: float           # largest eigenvalue of sym(A^T P + P A)
    max_re: float
    verdict: str                  # "certified_stable" | "uncertified"
    reason: str = ""


_ANCHOR = (np.eye(3), np.zeros(3))


def _equilibrium_quantities(model: RobotModel, q_des: np.ndarray, support_frame: str):
    state = constraint_consistent_state(model, support_frame, _ANCHOR, q_des,
                                        np.zeros(model.n))
    q = control_quantities(model, state, (support_frame,))
    lam = q.j_j[support_frame] @ np.linalg.inv(q.m_j)
    s = np.linalg.svd(lam, compute_uv=False)
    if s[-1] <= 1e-10 * s[0]:
        raise RankError(
            f"momentum task matrix rank deficient at equilibrium "
            f"(singular values {s[0]:.3e} .. {s[-1]:.3e})"
        )
    return state, q, lam


def analytic_linearization(model: RobotModel, q_des: np.ndarray, gains: ctl.GainSet,
                           support_frame: str = "left_sole") -> LinearizedSystem:
    """Closed-form A1/A2 for the modified controller about (q_des, 0)."""
    if gains.mode != "modified":
        raise ValueError("analytic linearization is defined for the modified controller")
    q_des = np.asarray(q_des, dtype=float)
    _, q, lam = _equilibrium_quantities(model, q_des, support_frame)
    n = model.n
    lam_pinv = pinv_svd(lam)
    n_lam = np.eye(n) - lam_pinv @ lam
    j_b = q.j_b[support_frame]
    j_j = q.j_j[support_frame]
    m_j_inv = np.linalg.inv(q.m_j)
    mb_inv = np.linalg.inv(q.m_b)
    mb_jbinv_jj = q.m_b @ np.linalg.solve(j_b, j_j)
    front = m_j_inv @ lam_pinv @ j_b @ mb_inv
    a1 = -front @ gains.ki_momentum @ mb_jbinv_jj - m_j_inv @ (
        n_lam @ gains.kp_joint @ n_lam @ q.m_j
    )
    a2 = -front @ gains.kp_momentum @ mb_jbinv_jj - m_j_inv @ (
        n_lam @ gains.kd_joint @ n_lam @ q.m_j
    )
    a = np.block([[np.zeros((n, n)), np.eye(n)], [a1, a2]])
    return LinearizedSystem(a, a1, a2, q_des, q.m_j, q.m_b, lam, n_lam, j_b, j_j)


def integral_closed_form(gains: ctl.GainSet, mass: float, com: np.ndarray,
                         com_des: np.ndarray, jg_des: np.ndarray,
                         x1: np.ndarray) -> np.ndarray:
    """Momentum-error integral as a function of the joint excursion x1.

    Modified controller: exact (linear rows integrate to m times the CoM
    displacement, angular rows are frozen at the reference posture).
    Classical controller: first-order expansion about the equilibrium.
    """
    if gains.mode == "classical":
        return jg_des @ x1
    return np.concatenate([mass * (com - com_des), jg_des[3:] @ x1])


def closed_loop_accel(model: RobotModel, q_des: np.ndarray, gains: ctl.GainSet,
                      x1: np.ndarray, x2: np.ndarray,
                      support_frame: str = "left_sole",
                      _cache: dict | None = None) -> np.ndarray:
    """Joint acceleration of the reduced closed loop at (q_des + x1, x2).

    The reference holds (q_des, H^d = 0); the integral state is substituted
    by its closed form so the field depends on (x1, x2) alone.
    """
    q_des = np.asarray(q_des, dtype=float)
    if _cache is None:
        _cache = {}
    if "jg_des" not in _cache:
        nominal, q0, _ = _equilibrium_quantities(model, q_des, support_frame)
        _cache["jg_des"] = ctl._constrained_cmm_blocks(q0, support_frame)
        _cache["com_des"] = q0.com.copy()
        _cache["ref"] = ctl.Reference(q_des=q_des, com0=q0.com.copy(),
                                      mass=model.total_mass)
        _cache["contact"] = ContactSetup((support_frame,),
                                         {support_frame: _ANCHOR}, 0.0, 0.0)
    ref = _cache["ref"]
    state = constraint_consistent_state(model, support_frame, _ANCHOR,
                                        q_des + x1, x2)
    q = control_quantities(model, state, (support_frame,))
    integral = integral_closed_form(gains, model.total_mass, q.com,
                                    _cache["com_des"], _cache["jg_des"], x1)
    hdot_star = -gains.kp_momentum @ q.h_momentum - gains.ki_momentum @ integral
    f = ctl._wrench(q, support_frame, hdot_star)
    tau0 = ctl._postural(q, (support_frame,), f, gains, state, ref)
    tau, *_ = ctl._one_foot_tau(q, support_frame, f, tau0)
    nu_dot, _ = constrained_forward_dynamics(model, state, tau, _cache["contact"])
    return nu_dot[6:]


def fd_linearization(model: RobotModel, q_des: np.ndarray, gains: ctl.GainSet,
                     support_frame: str = "left_sole", h: float = 1e-6):
    """Central-difference linearization of the reduced closed loop.

    Returns (A, agreement) where agreement is the relative Frobenius distance
    between the h and h/10 estimates of the bottom block row.
    """
    q_des = np.asarray(q_des, dtype=float)
    n = model.n
    cache: dict = {}

    def bottom(step: float) -> np.ndarray:
        rows = np.empty((n, 2 * n))
        for i in range(2 * n):
            d = np.zeros(2 * n)
            d[i] = step
            fp = closed_loop_accel(model, q_des, gains, d[:n], d[n:],
                                   support_frame, cache)
            fm = closed_loop_accel(model, q_des, gains, -d[:n], -d[n:],
                                   support_frame, cache)
            rows[:, i] = (fp - fm) / (2.0 * step)
        return rows

    b1 = bottom(h)
    b2 = bottom(h / 10.0)
    agreement = float(np.linalg.norm(b1 - b2) / max(1.0, np.linalg.norm(b1)))
    a = np.vstack([np.hstack([np.zeros((n, n)), np.eye(n)]), b1])
    return a, agreement


def fd_linearized_system(model: RobotModel, q_des: np.ndarray, gains: ctl.GainSet,
                         support_frame: str = "left_sole"):
    """LinearizedSystem built from the FD oracle (works for both controller
    modes). Returns (linsys, agreement)."""
    q_des = np.asarray(q_des, dtype=float)
    a, agreement = fd_linearization(model, q_des, gains, support_frame)
    _, q, lam = _equilibrium_quantities(model, q_des, support_frame)
    n = model.n
    lam_pinv = pinv_svd(lam)
    n_lam = np.eye(n) - lam_pinv @ lam
    linsys = LinearizedSystem(a, a[n:, :n], a[n:, n:], q_des, q.m_j, q.m_b, lam,
                              n_lam, q.j_b[support_frame], q.j_j[support_frame])
    return linsys, agreement


def lyapunov_certificate(linsys: LinearizedSystem, gains: ctl.GainSet,
                         tol_scale: float = 1e-8) -> LyapunovCertificate:
    """Quadratic certificate V = x^T P x / 2 for the linearized closed loop."""
    jb_inv_lam = np.linalg.solve(linsys.j_b, linsys.lam)
    core = jb_inv_lam.T @ linsys.m_b.T
    q1 = core @ gains.ki_momentum @ linsys.m_b @ jb_inv_lam + (
        linsys.n_lam @ gains.kp_joint @ linsys.n_lam
    )
    q2 = core @ linsys.m_b @ jb_inv_lam + linsys.n_lam
    q1 = 0.5 * (q1 + q1.T)
    q2 = 0.5 * (q2 + q2.T)
    n = linsys.n
    p = np.zeros((2 * n, 2 * n))
    p[:n, :n] = linsys.m_j.T @ q1 @ linsys.m_j
    p[n:, n:] = linsys.m_j.T @ q2 @ linsys.m_j
    s = linsys.a.T @ p + p @ linsys.a
    s = 0.5 * (s + s.T)
    q1_min = float(np.linalg.eigvalsh(q1)[0])
    q2_min = float(np.linalg.eigvalsh(q2)[0])
    vdot_max = float(np.linalg.eigvalsh(s)[-1])
    max_re = float(np.max(np.linalg.eigvals(linsys.a).real))

    reason = ""
    ki_min = float(np.linalg.eigvalsh(0.5 * (gains.ki_momentum + gains.ki_momentum.T))[0])
    if gains.mode != "modified" or ki_min <= 0:
        reason = "integral momentum gain is not positive definite"
    elif q1_min <= 0 or q2_min <= 0:
        reason = "Lyapunov weight not positive definite"
    elif vdot_max > tol_scale * np.linalg.norm(p):
        reason = "V_dot not negative semidefinite within tolerance"
    elif max_re >= 0:
        reason = "linearization has a nonnegative real-part eigenvalue"
    verdict = "certified_stable" if not reason else "uncertified"
    return LyapunovCertificate(q1, q2, p, q1_min, q2_min, vdot_max, max_re,
                               verdict, reason)


def spectral_report(a: np.ndarray) -> dict:
    """Eigenvalues sorted by descending real part, with a stability margin."""
    eig = np.linalg.eigvals(np.asarray(a, dtype=float))
    order = np.lexsort((eig.imag, -eig.real))
    eig = eig[order]
    max_re = float(eig[0].real)
    return {
        "eigenvalues": [[float(z.real), float(z.imag)] for z in eig],
        "max_re": max_re,
        "margin": -max_re,
    }
