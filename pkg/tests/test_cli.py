import json
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from compdyn import shapes
from compdyn.cli import main
from compdyn.meshcore import write_obj
from compdyn.scenario import AnimationSequence

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


def make_scenario(tmp_path, poses, model=None, rig=None, leak="identity", sim=None, forces=(), n=(5, 4)):
    mesh = shapes.rectangle(*n, 1.0, 0.8)
    write_obj(tmp_path / "mesh.obj", mesh.vertices, mesh.elements)
    poses = np.atleast_2d(np.asarray(poses, dtype=float))
    AnimationSequence(poses.shape[1], np.arange(len(poses)) / 60.0, poses).save(tmp_path / "anim.json")
    cfg = {
        "mesh": {"obj": "mesh.obj"}, "density": 1.0, "rig": rig or {"kind": "affine"},
        "animation": "anim.json",
        "model": model or {"kind": "linear", "youngs": 100.0, "poisson": 0.3},
        "momentum_leak": {"mode": leak}, "sim": sim or {}, "forces": list(forces),
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


IDENTITY = [1.0, 0, 0, 0, 1, 0]
STRETCH = [1.5, 0, 0, 0, 1, 0]


@pytest.mark.parametrize("model", [{"kind": "linear", "youngs": 100.0, "poisson": 0.3},
                                   {"kind": "neohookean", "youngs": 100.0, "poisson": 0.3},
                                   {"kind": "arap", "stiffness": 10.0},
                                   {"kind": "mass_spring", "stiffness": 10.0}])
def test_quiescent_scenario_frames_match_frame_zero(tmp_path, model):
    cfg = make_scenario(tmp_path, [STRETCH] * 6, model=model)
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    from compdyn.meshcore import read_obj
    V0 = read_obj(out / "frame_00000.obj")[0]
    for k in range(1, 6):
        np.testing.assert_allclose(read_obj(out / f"frame_{k:05d}.obj")[0], V0, atol=1e-10)
    report = json.loads((out / "report.json").read_text())
    assert len(report["frames"]) == 6
    assert {"iterations", "residual", "energy", "wall_time"} <= set(report["frames"][1])


def test_missing_weights_file_names_path(tmp_path, capsys):
    cfg = make_scenario(tmp_path, [IDENTITY * 2], rig={"kind": "lbs", "weights": "nope.dmat"})
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "nope.dmat" in capsys.readouterr().err


def test_malformed_config(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["check-gradients", "--config", str(bad)]) == 1
    assert "bad.json" in capsys.readouterr().err
    cfg = make_scenario(tmp_path, [IDENTITY], model={"kind": "rubber"})
    assert main(["oracle", "--config", str(cfg)]) == 1


def test_pose_length_mismatch(tmp_path, capsys):
    cfg = make_scenario(tmp_path, [[1.0, 0, 0]])
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "anim.json" in capsys.readouterr().err


def test_solver_failure_exit_code(tmp_path, capsys):
    # a crushing pose inverts every neo-Hookean element, and the warm start cannot recover
    cfg = make_scenario(tmp_path, [IDENTITY, [-1.0, 0, 0, 0, 1, 0]],
                        model={"kind": "neohookean", "youngs": 100.0, "poisson": 0.3}, leak="zero")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "frame 1" in capsys.readouterr().err


def test_check_gradients_and_negative_control(tmp_path, capsys):
    cfg = make_scenario(tmp_path, [IDENTITY], model={"kind": "neohookean", "youngs": 100.0, "poisson": 0.3})
    assert main(["check-gradients", "--config", str(cfg)]) == 0
    assert main(["check-gradients", "--config", str(cfg), "--corrupt-gradient"]) == 3
    assert "worst" in capsys.readouterr().out


def test_linear_gradients_are_near_exact(tmp_path, capsys):
    cfg = make_scenario(tmp_path, [IDENTITY])
    assert main(["check-gradients", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    g = float(out.split("gradient error ")[1].split()[0])
    h = float(out.split("Hessian-vector error ")[1].split()[0])
    assert g < 1e-9 and h < 1e-9


def test_verify_constraint_pass_and_negative_control(tmp_path):
    poses = [[1 + 0.1 * np.sin(k / 3), 0.05 * k, 0.01 * k, 0, 1, 0] for k in range(10)]
    wind = {"kind": "wind", "direction": [1, 0], "amplitude": 5.0, "frequency": 2.0, "wavelength": 0.5}
    cfg = make_scenario(tmp_path, poses, forces=[wind])
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["verify-constraint", "--config", str(cfg), "--frames", str(tmp_path / "a")]) == 0

    sag = tmp_path / "sag"
    sag.mkdir()
    cfg = make_scenario(sag, [STRETCH] * 10, leak="zero", sim={"cancellation": False})
    assert main(["simulate", "--config", str(cfg), "--out", str(sag / "o")]) == 0
    assert main(["verify-constraint", "--config", str(cfg), "--frames", str(sag / "o")]) == 3


def test_verify_constraint_zero_frames(tmp_path):
    cfg = make_scenario(tmp_path, [IDENTITY])
    (tmp_path / "empty").mkdir()
    assert main(["verify-constraint", "--config", str(cfg), "--frames", str(tmp_path / "empty")]) == 0


def test_oracle_guards_and_passes(tmp_path):
    wind = {"kind": "wind", "direction": [1, 1], "amplitude": 5.0, "frequency": 2.0, "wavelength": 0.5}
    cfg = make_scenario(tmp_path, [[1 + 0.02 * k, 0, 0.01 * k, 0, 1, 0] for k in range(5)], forces=[wind])
    assert main(["oracle", "--config", str(cfg)]) == 0
    big = tmp_path / "big"
    big.mkdir()
    cfg = make_scenario(big, [IDENTITY], n=(12, 13))
    assert main(["oracle", "--config", str(cfg)]) == 1
    none = tmp_path / "none"
    none.mkdir()
    cfg = make_scenario(none, np.zeros((4, 0)), rig={"kind": "none"}, forces=[wind])
    assert main(["oracle", "--config", str(cfg)]) == 0


def test_substeps_flag(tmp_path):
    cfg = make_scenario(tmp_path, [[1 + 0.05 * k, 0, 0, 0, 1, 0] for k in range(4)],
                        model={"kind": "neohookean", "youngs": 100.0, "poisson": 0.3}, leak="poisson", n=(6, 5))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o"), "--substeps", "3"]) == 0
    assert main(["verify-constraint", "--config", str(cfg), "--frames", str(tmp_path / "o")]) == 0


def test_deterministic_output(tmp_path):
    src = SCENARIOS / "amoeba"
    outs = []
    for name in ("r1", "r2"):
        assert main(["simulate", "--config", str(src / "config.json"), "--out", str(tmp_path / name)]) == 0
        outs.append([p.read_bytes() for p in sorted((tmp_path / name).glob("frame_*.obj"))])
    assert outs[0] == outs[1] and len(outs[0]) == 120


def test_console_script_help():
    exe = shutil.which("compdyn")
    cmd = [exe] if exe else [sys.executable, "-m", "compdyn.cli"]
    out = subprocess.run(cmd + ["--help"], capture_output=True, text=True, check=True).stdout
    for sub in ("simulate", "check-gradients", "verify-constraint", "oracle"):
        assert sub in out


def test_animation_rig_tag_mismatch(tmp_path, capsys):
    cfg = make_scenario(tmp_path, [IDENTITY])
    anim = json.loads((tmp_path / "anim.json").read_text())
    anim["rig"] = "cage"
    (tmp_path / "anim.json").write_text(json.dumps(anim))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "cage" in capsys.readouterr().err


def test_shipped_scenarios_load():
    for cfg in sorted(SCENARIOS.glob("*/config.json")):
        from compdyn.scenario import load_scenario
        sc = load_scenario(cfg)
        assert len(sc.animation) == 120
