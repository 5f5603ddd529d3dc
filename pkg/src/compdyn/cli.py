"""Command-line driver.

    compdyn simulate --config scene.json --out frames/ [--substeps N] [--threads K]
    compdyn check-gradients --config scene.json
    compdyn verify-constraint --config scene.json --frames frames/
    compdyn oracle --config scene.json

Exit codes: 0 success, 1 bad input, 2 solver failure, 3 audit threshold breached.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .diagnostics import check_gradients, random_states
from .dynamics import Simulator, SimulationError, assemble_constraint, orthogonality_bound
from .meshcore import MeshError, flatten, read_obj, write_obj
from .rig import RigError, recover_rig_params
from .scenario import ConfigError, load_scenario
from .solver import KKTError

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_AUDIT = 0, 1, 2, 3
ORACLE_MAX_DOFS = 300

log = logging.getLogger("compdyn")


def _err(msg):
    print(f"error: {msg}", file=sys.stderr)


def _finite_or_none(x):
    return None if x is None or not math.isfinite(x) else float(x)


def _run(scenario, config, on_frame=None):
    """Step through the animation; ``on_frame(k, u)`` sees every frame."""
    anim = scenario.animation
    sim = Simulator(scenario.mesh, scenario.rig, scenario.model, scenario.mass, config,
                    scenario.forces, scenario.leak)
    if len(anim) == 0:
        return sim
    u = sim.reset(anim.poses[0], anim.times[0])
    if on_frame:
        on_frame(0, u)
    for k in range(1, len(anim)):
        # honour the animation clock: frame spacing sets the step size
        h = anim.times[k] - anim.times[k - 1]
        if not math.isclose(h, sim.config.h, rel_tol=1e-9):
            sim.config = dataclasses.replace(sim.config, h=h)
        u = sim.step(anim.poses[k])
        if on_frame:
            on_frame(k, u)
    return sim


def cmd_simulate(args):
    scenario = load_scenario(args.config)
    config = scenario.config.sim
    if args.substeps is not None:
        if args.substeps < 1:
            raise ConfigError("--substeps must be >= 1")
        config = dataclasses.replace(config, substeps=args.substeps)
    out = Path(args.out) if args.out else scenario.config.output
    if out is None:
        raise ConfigError("no output directory (pass --out or set 'output' in the config)")
    out.mkdir(parents=True, exist_ok=True)
    X = scenario.mesh.vertices
    faces = scenario.output_faces
    d = scenario.mesh.dim

    def write(k, u):
        write_obj(out / f"frame_{k:05d}.obj", X + u.reshape(d, -1).T, faces)

    sim = _run(scenario, config, write)
    frames = [dict(r.as_dict(), energy=_finite_or_none(r.energy)) for r in sim.reports]
    times = [r.wall_time for r in sim.reports[1:]]
    report = {
        "config": str(scenario.config.path),
        "method": sim.method,
        "n": scenario.mesh.n, "dim": d, "m": scenario.rig.n_params,
        "frames": frames,
        "mean_frame_time": float(np.mean(times)) if times else 0.0,
        "max_residual_ratio": max((r.residual / r.residual_bound for r in sim.reports), default=0.0),
        "flagged_frames": [r.frame for r in sim.reports if r.flagged],
    }
    (out / "report.json").write_text(json.dumps(report, indent=1) + "\n")
    print(f"wrote {len(frames)} frames to {out} "
          f"(mean {report['mean_frame_time'] * 1e3:.2f} ms/frame, method {sim.method})")
    return EXIT_OK


def cmd_check_gradients(args):
    scenario = load_scenario(args.config)
    model = scenario.model
    states = random_states(scenario.mesh, 10, rng=args.seed)
    # --corrupt-gradient is a negative control: a 0.1% relative fault must be caught
    faulty = (lambda u: model.gradient(u) * (1.0 + 1e-3)) if args.corrupt_gradient else None
    rep = check_gradients(model, states, rng=args.seed, gradient=faulty)
    print(f"{model.kind.value}: max relative gradient error {rep.gradient_error:.3e} (tol 1e-5), "
          f"max relative Hessian-vector error {rep.hessian_error:.3e} (tol 1e-4)")
    if not rep.passed():
        print(f"FAIL: worst gradient entry is dof {rep.worst_gradient_dof} in state {rep.worst_state}")
        return EXIT_AUDIT
    return EXIT_OK


def _frame_files(directory):
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"frames directory not found: {directory}")
    return sorted(directory.glob("frame_*.obj"))


def cmd_verify_constraint(args):
    scenario = load_scenario(args.config)
    files = _frame_files(args.frames)
    anim = scenario.animation
    if len(files) > len(anim):
        raise ConfigError(f"{args.frames}: {len(files)} frames but the animation has {len(anim)}")
    mesh, rig, M = scenario.mesh, scenario.rig, scenario.mass
    d = mesh.dim
    check_pose = rig.is_linear and scenario.leak.is_constant and rig.n_params > 0
    worst_c = worst_p = 0.0
    for k, path in enumerate(files):
        V = read_obj(path)[0]
        if V.shape[0] != mesh.n:
            raise ConfigError(f"{path}: {V.shape[0]} vertices, mesh has {mesh.n}")
        u = flatten(V[:, :d] - mesh.vertices)
        p = anim.poses[k]
        uc = u - rig(p)
        C = assemble_constraint(rig.jacobian(p), M, scenario.leak)
        ratio = C.residual(uc) / orthogonality_bound(M, uc)
        worst_c = max(worst_c, ratio)
        if ratio > 1.0:
            print(f"FAIL frame {k}: ||C uc||_inf = {C.residual(uc):.3e} exceeds "
                  f"{orthogonality_bound(M, uc):.3e}")
            return EXIT_AUDIT
        if check_pose:
            err = float(np.abs(recover_rig_params(rig, M, u) - p).max())
            worst_p = max(worst_p, err)
            if err > 1e-8 * max(1.0, float(np.abs(p).max())):
                print(f"FAIL frame {k}: recovered rig parameters differ from the pose by {err:.3e}")
                return EXIT_AUDIT
    msg = f"{len(files)} frames ok: worst orthogonality ratio {worst_c:.3e}"
    if check_pose:
        msg += f", worst recovered-pose error {worst_p:.3e}"
    print(msg)
    return EXIT_OK


def cmd_oracle(args):
    scenario = load_scenario(args.config)
    dn = scenario.mesh.dim * scenario.mesh.n
    if dn > ORACLE_MAX_DOFS:
        raise ConfigError(f"{args.config}: oracle needs dn <= {ORACLE_MAX_DOFS}, scenario has {dn}")
    config = dataclasses.replace(scenario.config.sim, check_oracle=True)
    sim = _run(scenario, config)
    gaps = [r.oracle_discrepancy for r in sim.reports if r.oracle_discrepancy is not None]
    worst = max(gaps, default=0.0)
    print(f"{len(gaps)} frames: max KKT vs null-space discrepancy {worst:.3e} (tol 1e-8)")
    if worst > 1e-8:
        bad = next(r.frame for r in sim.reports if (r.oracle_discrepancy or 0) > 1e-8)
        print(f"FAIL: first disagreement at frame {bad}")
        return EXIT_AUDIT
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="compdyn", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario and write an OBJ frame sequence")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--substeps", type=int)
    p.add_argument("--threads", type=int, default=1,
                   help="accepted for compatibility; assembly is vectorized and single-threaded")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("check-gradients", help="finite-difference audit of the elastic model")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_check_gradients)

    p = sub.add_parser("verify-constraint", help="audit orthogonality of simulated frames")
    p.add_argument("--config", required=True)
    p.add_argument("--frames", required=True)
    p.set_defaults(func=cmd_verify_constraint)

    p = sub.add_parser("oracle", help="cross-check bordered solves against constraint elimination")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, MeshError, RigError) as exc:
        _err(exc)
        return EXIT_INPUT
    except (SimulationError, KKTError) as exc:
        _err(f"solver failure: {exc}")
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
