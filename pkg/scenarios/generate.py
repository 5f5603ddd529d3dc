"""Regenerate the shipped scenarios (meshes, weights, animations, configs).

Run from anywhere:  python scenarios/generate.py
"""

import json
from pathlib import Path

import numpy as np

from compdyn import shapes
from compdyn.meshcore import write_dmat, write_obj, write_tet_mesh
from compdyn.scenario import AnimationSequence

HERE = Path(__file__).resolve().parent
FPS = 60


def affine_pose(theta=0.0, t=(0.0, 0.0), center=(0.0, 0.0)):
    """Rotation by ``theta`` about ``center`` followed by translation ``t`` (2D)."""
    c, s = np.cos(theta), np.sin(theta)
    R = np.array([[c, -s], [s, c]])
    ctr = np.asarray(center)
    shift = ctr - R @ ctr + np.asarray(t)
    return np.column_stack([R, shift]).ravel()


def rotation_z_pose(theta, center):
    c, s = np.cos(theta), np.sin(theta)
    R = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])
    ctr = np.asarray(center)
    return np.column_stack([R, ctr - R @ ctr]).ravel()


def write_scenario(name, config, times, poses, rig):
    d = HERE / name
    d.mkdir(exist_ok=True)
    AnimationSequence(len(poses[0]), times, np.array(poses), rig).save(d / "animation.json")
    config = dict(config, animation="animation.json", output="out")
    (d / "config.json").write_text(json.dumps(config, indent=1) + "\n")


def amoeba(frames=120):
    mesh = shapes.disc(11, radius=0.5)
    d = HERE / "amoeba"
    d.mkdir(exist_ok=True)
    write_obj(d / "disc.obj", mesh.vertices, mesh.elements)
    t = np.arange(frames) / FPS
    poses = [affine_pose(0.3 * np.sin(2 * np.pi * 0.7 * tk), (0.5 * np.sin(2 * np.pi * 0.5 * tk), 0.0))
             for tk in t]
    write_scenario("amoeba", {
        "mesh": {"obj": "disc.obj"}, "density": 1000.0, "rig": {"kind": "affine"},
        "model": {"kind": "linear", "youngs": 2e4, "poisson": 0.3},
        "forces": [{"kind": "wind", "direction": [1.0, 0.3], "amplitude": 40.0,
                    "frequency": 1.5, "wavelength": 0.8}],
    }, t, poses, "affine")


def lbs_arm(frames=120):
    mesh = shapes.rectangle(21, 5, 4.0, 0.8, origin=(0.0, -0.4))
    d = HERE / "lbs_arm"
    d.mkdir(exist_ok=True)
    write_obj(d / "arm.obj", mesh.vertices, mesh.elements)
    w1 = 1.0 / (1.0 + np.exp(-(mesh.vertices[:, 0] - 2.0) / 0.25))
    write_dmat(d / "weights.dmat", np.column_stack([1.0 - w1, w1]))
    t = np.arange(frames) / FPS
    rest = affine_pose()
    poses = [np.concatenate([rest, affine_pose(0.8 * np.sin(2 * np.pi * 0.8 * tk), center=(2.0, 0.0))])
             for tk in t]
    write_scenario("lbs_arm", {
        "mesh": {"obj": "arm.obj"}, "density": 1000.0, "rig": {"kind": "lbs", "weights": "weights.dmat"},
        "model": {"kind": "neohookean", "youngs": 5e4, "poisson": 0.35},
        "momentum_leak": {"mode": "poisson", "interior_value": 0.0},
        "forces": [{"kind": "gravity", "g": [0.0, -9.8]}],
    }, t, poses, "lbs")


def carpet(frames=120):
    mesh = shapes.rectangle(13, 13, 2.0, 2.0, origin=(-1.0, -1.0))
    d = HERE / "carpet"
    d.mkdir(exist_ok=True)
    write_obj(d / "sheet.obj", mesh.vertices, mesh.elements)
    # keyframes (time, rotation, translation), linearly interpolated
    keys = [(0.0, 0.0, (0.0, 0.0)), (0.5, 0.0, (1.0, 0.0)), (1.0, 0.6, (1.0, 0.5)),
            (1.5, 0.6, (0.0, 0.5)), (2.0, 0.0, (0.0, 0.0))]
    kt = np.array([k[0] for k in keys])
    t = np.arange(frames) / FPS
    theta = np.interp(t, kt, [k[1] for k in keys])
    tx = np.interp(t, kt, [k[2][0] for k in keys])
    ty = np.interp(t, kt, [k[2][1] for k in keys])
    poses = [affine_pose(a, (x, y)) for a, x, y in zip(theta, tx, ty)]
    write_scenario("carpet", {
        "mesh": {"obj": "sheet.obj"}, "density": 1.0, "rig": {"kind": "affine"},
        "model": {"kind": "mass_spring", "stiffness": 50.0},
        "sim": {"local_global_iters": 30},
        "momentum_leak": {"mode": "poisson", "interior_value": 0.0},
        "forces": [{"kind": "gravity", "g": [0.0, -9.8]}],
    }, t, poses, "affine")


def tet_bar(frames=120):
    mesh = shapes.box(11, 4, 4, size=(2.0, 0.4, 0.4), origin=(0.0, -0.2, -0.2))
    d = HERE / "tet_bar"
    d.mkdir(exist_ok=True)
    write_tet_mesh(d / "bar.node", d / "bar.ele", mesh)
    t = np.arange(frames) / FPS
    poses = [rotation_z_pose(0.5 * np.sin(2 * np.pi * 0.6 * tk), (0.0, 0.0, 0.0)) for tk in t]
    write_scenario("tet_bar", {
        "mesh": {"node": "bar.node", "ele": "bar.ele"}, "density": 1000.0, "rig": {"kind": "affine"},
        "model": {"kind": "neohookean", "youngs": 2e5, "poisson": 0.4},
        "momentum_leak": {"mode": "poisson", "interior_value": 0.0},
        "forces": [{"kind": "gravity", "g": [0.0, -9.8, 0.0]}],
    }, t, poses, "affine")


def worm(frames=120):
    mesh = shapes.rectangle(45, 10, 4.4, 0.9, origin=(0.0, -0.45))
    d = HERE / "worm"
    d.mkdir(exist_ok=True)
    write_obj(d / "worm.obj", mesh.vertices, mesh.elements)
    t = np.arange(frames) / FPS
    poses = [affine_pose(0.2 * np.sin(2 * np.pi * tk), (0.8 * tk, 0.2 * np.sin(2 * np.pi * 0.5 * tk)),
                         center=(2.2, 0.0)) for tk in t]
    write_scenario("worm", {
        "mesh": {"obj": "worm.obj"}, "density": 1000.0, "rig": {"kind": "affine"},
        "model": {"kind": "linear", "youngs": 5e4, "poisson": 0.3},
        "forces": [{"kind": "wind", "direction": [0.0, 1.0], "amplitude": 30.0,
                    "frequency": 2.0, "wavelength": 1.5}],
    }, t, poses, "affine")


if __name__ == "__main__":
    for make in (amoeba, lbs_arm, carpet, tet_bar, worm):
        make()
        print("wrote", make.__name__)
