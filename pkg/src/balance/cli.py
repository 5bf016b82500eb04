"""Command line front end: scenario runs, linearization reports, comparisons.

Exit codes: 0 success, 2 configuration or model error, 3 simulation NaN,
4 rank-deficient momentum task at the linearization point. Data goes to
files; stdout carries one-line summaries; BALANCE_LOG=debug|info enables
diagnostics on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import bundled_model_path, bundled_scenario_path
from .analysis import (RankError, analytic_linearization, fd_linearization,
                       fd_linearized_system, lyapunov_certificate, spectral_report)
from .config import ConfigError, ScenarioConfig, load_scenario
from .model import ModelError, RobotModel, load_model_file
from .simulation import SimulationError, TrajectoryLog, _build_gains, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SIM = 3
EXIT_RANK = 4

log = logging.getLogger("balance")


def _setup_logging() -> None:
    level = {"debug": logging.DEBUG, "info": logging.INFO}.get(
        os.environ.get("BALANCE_LOG", "").lower(), logging.WARNING
    )
    logging.basicConfig(stream=sys.stderr, level=level,
                        format="%(levelname)s %(name)s: %(message)s")


def _resolve_model(name: str) -> Path:
    p = Path(name)
    if p.is_file():
        return p
    bundled = Path(str(bundled_model_path(name)))
    if bundled.is_file():
        return bundled
    raise ConfigError(f"model file not found: {name}")


def _resolve_scenario(name: str) -> Path:
    p = Path(name)
    if p.is_file():
        return p
    bundled = Path(str(bundled_scenario_path(name)))
    if bundled.is_file():
        return bundled
    raise ConfigError(f"scenario file not found: {name}")


def _load(config_path: str):
    cfg = load_scenario(_resolve_scenario(config_path))
    model = load_model_file(_resolve_model(cfg.model))
    return model, cfg


def _simulate(model: RobotModel, cfg: ScenarioConfig, seed: int | None) -> TrajectoryLog:
    log.info("running scenario: %s, %s, %.1f s at dt=%g",
             cfg.model, cfg.controller, cfg.duration, cfg.dt)
    return run_scenario(model, cfg, seed)


def _summary(tag: str, traj: TrajectoryLog) -> str:
    jerr = traj.column("jerr_norm")
    ht = np.linalg.norm(traj.block("Ht"), axis=1)
    ratio = jerr[-1] / max(jerr[0], 1e-12)
    verdict = "divergent" if jerr[-1] > 10 * max(jerr[0], 1e-3) else "converged" \
        if jerr[-1] < 1e-3 else "bounded"
    return (f"{tag}: final jerr={jerr[-1]:.6e} max |Ht|={ht.max():.6e} "
            f"growth={ratio:.2f}x verdict={verdict}")


def cmd_simulate(args) -> int:
    model, cfg = _load(args.config)
    traj = _simulate(model, cfg, args.seed)
    traj.write_csv(args.out)
    print(_summary(Path(args.config).stem, traj))
    return EXIT_OK


def cmd_linearize(args) -> int:
    model, cfg = _load(args.config)
    if cfg.controller == "two_feet_qp":
        raise ConfigError("linearize supports one-foot controllers only")
    n = model.n
    q_des = np.asarray(cfg.initial_joints, dtype=float) if cfg.initial_joints else np.zeros(n)
    gains = _build_gains(cfg, n)
    if gains.mode == "modified":
        linsys = analytic_linearization(model, q_des, gains)
        a_fd, _ = fd_linearization(model, q_des, gains)
        agreement = float(np.linalg.norm(linsys.a - a_fd) / max(1.0, np.linalg.norm(a_fd)))
    else:
        linsys, agreement = fd_linearized_system(model, q_des, gains)
    cert = lyapunov_certificate(linsys, gains)
    spectrum = spectral_report(linsys.a)
    report = {
        "model": cfg.model,
        "q_jd": q_des.tolist(),
        "mode": gains.mode,
        "eigenvalues": spectrum["eigenvalues"],
        "max_re": spectrum["max_re"],
        "q1_min_eig": cert.q1_min_eig,
        "q2_min_eig": cert.q2_min_eig,
        "vdot_max_eig": cert.vdot_max_eig,
        "verdict": cert.verdict,
        "fd_agreement": agreement,
    }
    with open(args.out, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    print(f"{cfg.model} ({gains.mode}): max_re={spectrum['max_re']:.6e} "
          f"verdict={cert.verdict}")
    return EXIT_OK


def cmd_compare(args) -> int:
    model_a, cfg_a = _load(args.config_a)
    model_b, cfg_b = _load(args.config_b)
    traj_a = _simulate(model_a, cfg_a, args.seed)
    traj_b = _simulate(model_b, cfg_b, args.seed)
    ta, tb = traj_a.column("t"), traj_b.column("t")
    ja, jb = traj_a.column("jerr_norm"), traj_b.column("jerr_norm")
    rows = min(len(ta), len(tb))
    if not np.allclose(ta[:rows], tb[:rows]):
        raise ConfigError("scenario time grids differ; use matching dt and log_every")
    import csv

    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "jerr_a", "jerr_b"])
        for i in range(rows):
            w.writerow([f"{ta[i]:.12e}", f"{ja[i]:.12e}", f"{jb[i]:.12e}"])
    print(_summary("A", traj_a))
    print(_summary("B", traj_b))
    return EXIT_OK


def cmd_model_info(args) -> int:
    model = load_model_file(_resolve_model(args.model))
    from .centroidal import transformed_dynamics
    from .model import RobotState

    print(f"model: {model.name}")
    print(f"joints (n): {model.n}")
    print(f"links: {len(model.links)}")
    print(f"total mass: {model.total_mass:.4f} kg")
    print(f"{'link':<16} {'mass':>8} {'parent joint':<16}")
    for li, link in enumerate(model.links):
        ji = model.parent_joint[li]
        parent = model.joints[ji].name if ji >= 0 else "(base)"
        print(f"{link.name:<16} {link.mass:>8.3f} {parent:<16}")

    rng = np.random.default_rng(0)
    state = RobotState.zero(model)
    from dataclasses import replace

    state = replace(state, joint_pos=rng.uniform(-0.5, 0.5, model.n))
    td = transformed_dynamics(model, state, frames=tuple(f.name for f in model.frames))
    off = np.linalg.norm(td.m_bar[:6, 6:]) / np.linalg.norm(td.m_bar)
    print(f"block-diagonality residual (random config): {off:.3e}")
    zero = RobotState.zero(model)
    td0 = transformed_dynamics(model, zero, frames=tuple(f.name for f in model.frames))
    for f in model.frames:
        j_b = td0.jacobians[f.name][:, :6]
        print(f"cond J_b[{f.name}] at zero pose: {np.linalg.cond(j_b):.3e}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="balance",
                                 description="momentum-based balance control toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario, write a trajectory CSV")
    sim.add_argument("config")
    sim.add_argument("--out", required=True)
    sim.add_argument("--seed", type=int, default=None,
                     help="override the scenario's perturbation seed")
    sim.set_defaults(func=cmd_simulate)

    lin = sub.add_parser("linearize", help="write a closed-loop spectral report (JSON)")
    lin.add_argument("config")
    lin.add_argument("--out", required=True)
    lin.set_defaults(func=cmd_linearize)

    cmp_ = sub.add_parser("compare", help="run two scenarios, join their error series")
    cmp_.add_argument("config_a")
    cmp_.add_argument("config_b")
    cmp_.add_argument("--out", required=True)
    cmp_.add_argument("--seed", type=int, default=None)
    cmp_.set_defaults(func=cmd_compare)

    info = sub.add_parser("model-info", help="inspect a robot model file")
    info.add_argument("model")
    info.set_defaults(func=cmd_model_info)
    return ap


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ModelError, ValueError) as e:
        if isinstance(e, RankError):
            print(f"error: {e}", file=sys.stderr)
            return EXIT_RANK
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())
