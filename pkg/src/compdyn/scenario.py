"""Scenario files: one JSON document describing mesh, rig, animation, material and solver.

Example::

    {
      "mesh": {"obj": "disc.obj"},                  # or {"node": "bar.node", "ele": "bar.ele"}
      "density": 1000.0,
      "rig": {"kind": "affine"},                    # lbs / cage / blendshape / external / none
      "animation": "anim.json",
      "model": {"kind": "linear", "youngs": 1e5, "poisson": 0.3},
      "sim": {"h": 0.016666, "cancellation": true},
      "momentum_leak": {"mode": "identity"},
      "forces": [{"kind": "gravity", "g": [0, -9.8]}],
      "output": "out"
    }

Relative paths are resolved against the directory containing the config.
Rig data:

* ``lbs``: ``weights`` -- DMAT (n x k)
* ``cage``: ``weights`` -- DMAT (n x k), ``rest_cage`` -- DMAT (k x d)
* ``blendshape``: ``poses`` -- list of OBJ files with the sculpted vertex positions
* ``external``: ``command`` (argv list), ``m``, optional ``epsilon`` and ``rest_pose``

Animation files are ``{"m": int, "frames": [{"t": seconds, "p": [...]}, ...]}``.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import elastic
from .dynamics import SimConfig, build_momentum_leak, external_force
from .meshcore import load_tet_mesh, load_tri_obj, lumped_mass, read_dmat, read_obj
from .rig import (ExternalRig, affine_rig, blendshape_rig, cage_rig, lbs_rig, static_rig)


class ConfigError(ValueError):
    """Invalid or unreadable scenario input."""


@dataclass
class AnimationSequence:
    m: int
    times: np.ndarray
    poses: np.ndarray
    rig: str | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        self.poses = np.asarray(self.poses, dtype=float).reshape(len(self.times), self.m)
        if np.any(np.diff(self.times) <= 0):
            raise ConfigError("animation times must be strictly increasing")
        if not (np.all(np.isfinite(self.times)) and np.all(np.isfinite(self.poses))):
            raise ConfigError("animation contains non-finite values")

    def __len__(self):
        return len(self.times)

    @classmethod
    def load(cls, path):
        doc = _read_json(path)
        try:
            m = int(doc["m"])
            frames = doc["frames"]
            times = [float(f["t"]) for f in frames]
            poses = []
            for k, f in enumerate(frames):
                p = [float(x) for x in f["p"]]
                if len(p) != m:
                    raise ConfigError(f"{path}: frame {k} has {len(p)} parameters, expected {m}")
                poses.append(p)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{path}: malformed animation ({exc!r})") from None
        return cls(m, times, np.array(poses, dtype=float).reshape(len(times), m), doc.get("rig"))

    def save(self, path):
        doc = {"m": self.m, "frames": [{"t": float(t), "p": p.tolist()} for t, p in zip(self.times, self.poses)]}
        if self.rig:
            doc["rig"] = self.rig
        Path(path).write_text(json.dumps(doc, indent=1) + "\n")


@dataclass
class ScenarioConfig:
    """Parsed scenario document (paths already resolved)."""

    path: Path
    mesh: dict
    rig: dict
    animation: Path
    model: dict
    density: float = 1.0
    sim: SimConfig = field(default_factory=SimConfig)
    momentum_leak: dict = field(default_factory=lambda: {"mode": "identity"})
    forces: list = field(default_factory=list)
    output: Path | None = None

    @classmethod
    def load(cls, path):
        path = Path(path)
        doc = _read_json(path)
        base = path.parent
        try:
            mesh = {k: _existing(base, v) for k, v in doc["mesh"].items()}
            if not ({"obj"} == set(mesh) or {"node", "ele"} == set(mesh)):
                raise ConfigError(f"{path}: mesh needs either 'obj' or 'node' + 'ele'")
            rig = dict(doc["rig"])
            for key in ("weights", "rest_cage"):
                if key in rig:
                    rig[key] = _existing(base, rig[key])
            if "poses" in rig:
                rig["poses"] = [_existing(base, p) for p in rig["poses"]]
            animation = _existing(base, doc["animation"])
            model = dict(doc["model"])
            sim_fields = {f.name for f in dataclasses.fields(SimConfig)}
            unknown = set(doc.get("sim", {})) - sim_fields
            if unknown:
                raise ConfigError(f"{path}: unknown sim settings {sorted(unknown)}")
            sim = SimConfig(**doc.get("sim", {}))
            output = doc.get("output")
        except KeyError as exc:
            raise ConfigError(f"{path}: missing required key {exc}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{path}: {exc}") from None
        if rig.get("kind") not in ("affine", "lbs", "cage", "blendshape", "external", "none"):
            raise ConfigError(f"{path}: unknown rig kind {rig.get('kind')!r}")
        if model.get("kind") not in {k.value for k in elastic.ModelKind}:
            raise ConfigError(f"{path}: unknown model kind {model.get('kind')!r}")
        leak = dict(doc.get("momentum_leak", {"mode": "identity"}))
        if leak.get("mode") not in ("identity", "poisson", "zero"):
            raise ConfigError(f"{path}: unknown momentum_leak mode {leak.get('mode')!r}")
        return cls(path, mesh, rig, animation, model, float(doc.get("density", 1.0)), sim, leak,
                   list(doc.get("forces", [])), None if output is None else base / output)


@dataclass
class Scenario:
    """Everything needed to run or audit a simulation."""

    config: ScenarioConfig
    mesh: object
    rig: object
    model: object
    mass: object
    leak: object
    forces: list
    animation: AnimationSequence

    @property
    def output_faces(self):
        from .meshcore import boundary_facets
        return self.mesh.elements if self.mesh.dim == 2 else boundary_facets(self.mesh)


def _read_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def _existing(base, rel):
    p = base / rel
    if not p.exists():
        raise ConfigError(f"file not found: {p}")
    return p


def _build_rig(spec, mesh):
    kind = spec["kind"]
    if kind == "affine":
        return affine_rig(mesh)
    if kind == "none":
        return static_rig(mesh)
    if kind == "lbs":
        return lbs_rig(mesh, read_dmat(spec["weights"]))
    if kind == "cage":
        return cage_rig(mesh, read_dmat(spec["weights"]), read_dmat(spec["rest_cage"]))
    if kind == "blendshape":
        return blendshape_rig(mesh.vertices, [read_obj(p)[0][:, : mesh.dim] for p in spec["poses"]])
    rest = spec.get("rest_pose")
    return ExternalRig(spec["command"], mesh.dim, mesh.n, int(spec["m"]),
                       float(spec.get("epsilon", 1e-5)), rest)


def _build_model(spec, mesh):
    kind = elastic.ModelKind(spec["kind"])
    if kind == elastic.ModelKind.LINEAR:
        return elastic.linear_model(mesh, float(spec["youngs"]), float(spec["poisson"]))
    if kind == elastic.ModelKind.NEOHOOKEAN:
        return elastic.neohookean_model(mesh, float(spec["youngs"]), float(spec["poisson"]))
    if kind == elastic.ModelKind.ARAP:
        return elastic.arap_model(mesh, float(spec["stiffness"]))
    return elastic.mass_spring_model(mesh, float(spec["stiffness"]))


def load_scenario(path):
    """Read a scenario config and construct mesh, rig, model, mass, D and forces.

    Raises :class:`ConfigError` for anything wrong with the inputs.
    """
    cfg = ScenarioConfig.load(path)
    try:
        if "obj" in cfg.mesh:
            mesh = load_tri_obj(cfg.mesh["obj"])
        else:
            mesh = load_tet_mesh(cfg.mesh["node"], cfg.mesh["ele"])
        rig = _build_rig(cfg.rig, mesh)
        model = _build_model(cfg.model, mesh)
        mass = lumped_mass(mesh, cfg.density)
        leak = build_momentum_leak(mesh, cfg.momentum_leak["mode"],
                                   float(cfg.momentum_leak.get("interior_value", 0.0)),
                                   cfg.momentum_leak.get("sources"))
        forces = []
        for f in cfg.forces:
            params = {k: v for k, v in f.items() if k != "kind"}
            forces.append(external_force(f["kind"], mesh, mass, **params))
        animation = AnimationSequence.load(cfg.animation)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{cfg.path}: {exc}") from None
    if animation.rig and animation.rig != rig.kind:
        raise ConfigError(f"{cfg.animation}: animation is tagged for a {animation.rig!r} rig, "
                          f"config uses {rig.kind!r}")
    if animation.m != rig.n_params:
        raise ConfigError(f"{cfg.animation}: animation has m = {animation.m} but the "
                          f"{rig.kind} rig has {rig.n_params} parameters")
    return Scenario(cfg, mesh, rig, model, mass, leak, forces, animation)
