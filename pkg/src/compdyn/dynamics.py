"""Rig-complementary implicit Euler time stepping.

Each step finds complementary displacements ``uc`` minimizing the implicit
Euler objective

    E_t(uc) = Phi_eff(ur + uc) + 1/(2 h^2) ||ur + uc - u_prev - h udot_prev||_M^2 - (ur + uc)^T f

subject to the rig-orthogonality constraint ``C uc = 0`` with
``C = J^T M D``.  ``Phi_eff`` is the elastic potential, optionally minus the
linear rig-force term ``uc^T grad Phi(ur)`` ("cancellation"), which makes
``uc = 0`` stationary whenever the rig is at rest and unforced.

The output displacement is ``u = ur + uc``; the caller adds it to the rest
positions.
"""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .elastic import ModelKind
from .meshcore import boundary_vertices, cotan_laplacian, flatten, unflatten
from .solver import (ConstraintMatrix, KKTError, KKTFactor, KKTSystem, armijo_search,
                     null_space_solve)

log = logging.getLogger(__name__)


class SimulationError(RuntimeError):
    def __init__(self, message, frame=None):
        super().__init__(message if frame is None else f"frame {frame}: {message}")
        self.frame = frame


@dataclass
class SimConfig:
    """Time stepping parameters.

    ``h`` is the duration of one animation frame; with ``substeps = N`` each
    frame is integrated as ``N`` steps of ``h / N``.  ``newton_tol`` bounds
    the RMS of the constraint-projected gradient.  ``solver`` is one of
    ``auto``, ``linear``, ``newton``, ``local_global``.
    """

    h: float = 1.0 / 60.0
    newton_tol: float = 1e-6
    newton_max_iters: int = 20
    armijo_c1: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 30
    cancellation: bool = True
    substeps: int = 1
    local_global_iters: int = 20
    local_global_tol: float = 1e-12
    solver: str = "auto"
    check_oracle: bool = False

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("time step h must be positive")
        if not 0 < self.armijo_c1 < 1:
            raise ValueError("Armijo constant must lie in (0, 1)")
        if not 0 < self.shrink < 1:
            raise ValueError("line-search shrink factor must lie in (0, 1)")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if self.solver not in ("auto", "linear", "newton", "local_global"):
            raise ValueError(f"unknown solver {self.solver!r}")


@dataclass
class SimState:
    """History needed for temporal finite differences."""

    u_prev: np.ndarray
    udot_prev: np.ndarray
    uc_prev: np.ndarray
    t: float = 0.0

    @classmethod
    def at_rest_pose(cls, ur0, t0=0.0):
        """Initial state sitting on the rig displacement ``ur0`` with zero velocity."""
        ur0 = np.asarray(ur0, dtype=float)
        return cls(ur0.copy(), np.zeros_like(ur0), np.zeros_like(ur0), float(t0))


@dataclass
class MomentumLeak:
    """Per-vertex diagonal ``d`` of the matrix ``D`` inserted into the constraint."""

    d: np.ndarray
    dim: int

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=float)
        if np.any(self.d < 0) or np.any(self.d > 1):
            raise ValueError("momentum-leak entries must lie in [0, 1]")

    @property
    def diag(self):
        return np.tile(self.d, self.dim)

    @property
    def is_constant(self):
        return bool(np.all(self.d == self.d[0]))

    @property
    def is_identity(self):
        return bool(np.all(self.d == 1.0))


def _deepest_interior(mesh, boundary):
    """Interior vertices at maximal edge-hop distance from the boundary."""
    E = mesh.edges()
    n = mesh.n
    A = sparse.coo_matrix((np.ones(len(E)), (E[:, 0], E[:, 1])), shape=(n, n))
    A = (A + A.T).tocsr()
    depth = np.full(n, -1)
    depth[boundary] = 0
    frontier = np.asarray(boundary)
    level = 0
    while len(frontier):
        level += 1
        nbrs = np.unique(A[frontier].indices)
        nbrs = nbrs[depth[nbrs] < 0]
        depth[nbrs] = level
        frontier = nbrs
    return np.flatnonzero(depth == depth.max())


def build_momentum_leak(mesh, mode="identity", interior_value=0.0, sources=None):
    """Construct the diagonal ``D`` for the constraint ``J^T M D uc = 0``.

    ``identity``: ``d = 1`` (no rig momentum reaches the simulation).
    ``zero``: ``d = 0`` (constraint vacuous; unconstrained physics).
    ``poisson``: ``d = 1`` on boundary vertices, ``d = interior_value`` on the
    ``sources`` (default: the interior vertices deepest from the boundary),
    harmonic (cotangent Laplacian) in between; clamped to [0, 1].
    """
    n = mesh.n
    if mode == "identity":
        return MomentumLeak(np.ones(n), mesh.dim)
    if mode == "zero":
        return MomentumLeak(np.zeros(n), mesh.dim)
    if mode != "poisson":
        raise ValueError(f"unknown momentum-leak mode {mode!r}")

    B = boundary_vertices(mesh)
    d = np.ones(n)
    if len(B) == n:
        return MomentumLeak(d, mesh.dim)
    if sources is None:
        sources = _deepest_interior(mesh, B)
    sources = np.setdiff1d(np.asarray(sources, dtype=int), B)
    d[sources] = interior_value
    fixed = np.union1d(B, sources)
    free = np.setdiff1d(np.arange(n), fixed)
    if len(free):
        L = cotan_laplacian(mesh).tocsr()
        Lff = L[free][:, free].tocsc()
        rhs = -(L[free][:, fixed] @ d[fixed])
        d[free] = spla.splu(Lff).solve(rhs)
    return MomentumLeak(np.clip(d, 0.0, 1.0), mesh.dim)


def _mass_diag(M):
    return np.asarray(getattr(M, "diag", M), dtype=float) if not sparse.issparse(M) else M.diagonal()


def assemble_constraint(J, M, D=None):
    """Constraint rows ``C = J^T M D`` for a lumped (diagonal) ``M``."""
    J = np.asarray(J, dtype=float)
    w = _mass_diag(M)
    if J.ndim != 2 or J.shape[0] != w.shape[0]:
        raise ValueError(f"Jacobian shape {J.shape} does not match mass size {w.shape[0]}")
    if D is not None:
        dd = np.asarray(getattr(D, "diag", D), dtype=float)
        if dd.shape != w.shape:
            raise ValueError(f"D has {dd.shape[0]} entries, expected {w.shape[0]}")
        w = w * dd
    return ConstraintMatrix((J * w[:, None]).T.copy())


# ---------------------------------------------------------------------------
# external forces


class ExternalForce:
    """Force field ``(t, u) -> f`` over coordinate-major displacements."""

    def __init__(self, kind, func, params):
        self.kind = kind
        self._func = func
        self.params = params

    def __call__(self, t, u):
        return self._func(t, u)

    def __repr__(self):
        return f"ExternalForce({self.kind!r}, {self.params})"


def external_force(kind, mesh, mass, **params):
    """Build a gravity, wind or ground-penalty force.

    gravity: ``g`` (vector).  Force ``M g``.
    wind: ``direction``, ``amplitude``, ``frequency`` (Hz), optional
    ``wavelength`` (travelling wave along ``direction``; infinite gives a
    spatially uniform gust) and ``phase``.  Force ``M a(t, x) direction``.
    ground: plane ``normal . x >= offset`` with penalty ``stiffness``.
    """
    d = mesh.dim
    m = _mass_diag(mass)
    X = mesh.vertices
    if kind == "gravity":
        g = np.asarray(params.get("g", [0.0] * (d - 1) + [-9.8]), dtype=float)
        if g.shape != (d,):
            raise ValueError(f"gravity vector must have {d} components")
        f = m * np.repeat(g, mesh.n)
        return ExternalForce(kind, lambda t, u: f, {"g": g.tolist()})
    if kind == "wind":
        direction = np.asarray(params["direction"], dtype=float)
        direction = direction / np.linalg.norm(direction)
        amp = float(params.get("amplitude", 1.0))
        freq = float(params.get("frequency", 1.0))
        wavelength = float(params.get("wavelength", np.inf))
        phase = float(params.get("phase", 0.0))
        proj = X @ direction
        k = 0.0 if np.isinf(wavelength) else 1.0 / wavelength
        dir_rep = np.repeat(direction, mesh.n)

        def wind(t, u):
            a = amp * np.sin(2 * np.pi * (freq * t - k * proj) + phase)
            return m * np.tile(a, d) * dir_rep

        return ExternalForce(kind, wind, dict(direction=direction.tolist(), amplitude=amp,
                                              frequency=freq, wavelength=wavelength, phase=phase))
    if kind == "ground":
        normal = np.asarray(params.get("normal", [0.0] * (d - 1) + [1.0]), dtype=float)
        normal = normal / np.linalg.norm(normal)
        offset = float(params.get("offset", 0.0))
        k = float(params.get("stiffness", 1e4))
        if not k > 0:
            raise ValueError("ground penalty stiffness must be positive")

        def ground(t, u):
            x = X + unflatten(u, d)
            pen = np.maximum(0.0, offset - x @ normal)
            return flatten(k * pen[:, None] * normal[None, :])

        return ExternalForce(kind, ground, dict(normal=normal.tolist(), offset=offset, stiffness=k))
    raise ValueError(f"unknown force kind {kind!r}")


def _total_force(forces, t, u):
    f = np.zeros_like(u)
    for force in forces:
        f = f + force(t, u)
    return f


# ---------------------------------------------------------------------------
# stepping


@dataclass
class StepInfo:
    iterations: int = 0
    energy: float = float("nan")
    residual: float = 0.0
    flagged: bool = False
    converged: bool = True
    objective_trace: list = field(default_factory=list)
    residual_trace: list = field(default_factory=list)
    bound_trace: list = field(default_factory=list)
    oracle_discrepancy: float | None = None
    lam: np.ndarray | None = None


class StepResult(NamedTuple):
    state: SimState
    u: np.ndarray
    uc: np.ndarray
    info: StepInfo


class _Objective:
    """Implicit Euler objective in the complementary displacements."""

    def __init__(self, model, M, ur, state, f, h, cancellation):
        self.model = model
        self.m = _mass_diag(M)
        self.ur = ur
        self.target = state.u_prev + h * state.udot_prev
        self.f = f
        self.h2 = h * h
        self.rig_force = model.gradient(ur) if cancellation else None

    def _inertia(self, uc):
        r = self.ur + uc - self.target
        return 0.5 / self.h2 * float(r @ (self.m * r))

    def _linear_terms(self, uc):
        val = -float((self.ur + uc) @ self.f)
        if self.rig_force is not None:
            val -= float(uc @ self.rig_force)
        return val

    def energy(self, uc):
        phi = self.model.energy(self.ur + uc)
        if not np.isfinite(phi):
            return np.inf
        return phi + self._inertia(uc) + self._linear_terms(uc)

    def smooth_gradient(self, uc):
        """Gradient of everything except the elastic potential."""
        g = self.m * (self.ur + uc - self.target) / self.h2 - self.f
        if self.rig_force is not None:
            g = g - self.rig_force
        return g

    def gradient(self, uc):
        return self.model.gradient(self.ur + uc) + self.smooth_gradient(uc)

    def aux_energy(self, uc, aux):
        return self.model.aux_energy(self.ur + uc, aux) + self._inertia(uc) + self._linear_terms(uc)

    def aux_gradient(self, uc, aux):
        return self.model.aux_gradient(self.ur + uc, aux) + self.smooth_gradient(uc)


def _advance(state, ur, uc, h):
    u = ur + uc
    return SimState(u, (u - state.u_prev) / h, uc, state.t + h), u


def _config(config):
    return SimConfig() if config is None else config


def project_to_constraint(uc, C, M):
    """M-orthogonal projection of ``uc`` onto ``ker(C)``."""
    Cm = C.C if isinstance(C, ConstraintMatrix) else np.asarray(C)
    if Cm.shape[0] == 0 or not np.any(Cm):
        return np.array(uc, dtype=float)
    minv = 1.0 / _mass_diag(M)
    S = (Cm * minv[None, :]) @ Cm.T
    mu = np.linalg.lstsq(S, Cm @ uc, rcond=None)[0]
    return uc - minv * (Cm.T @ mu)


def _projected_gradient(g, Cm):
    if Cm.shape[0] == 0 or not np.any(Cm):
        return g
    lam = np.linalg.lstsq(Cm.T, g, rcond=None)[0]
    return g - Cm.T @ lam


def _oracle_gap(Q, Cm, rhs, x):
    x_ns = null_space_solve(KKTSystem(Q, Cm, rhs))
    qn = float(abs(Q).sum(axis=1).max()) if sparse.issparse(Q) else float(np.abs(Q).sum(axis=1).max())
    scale = max(np.abs(x_ns).max(), np.abs(rhs).max() / max(qn, 1e-300), 1e-300)
    return float(np.abs(x - x_ns).max() / scale)


def _finish(info, C, uc, M):
    info.residual = C.residual(uc)
    return info


def _forces_at(forces, state, h):
    return _total_force(forces, state.t + h, state.u_prev)


def step_linear(state, rig, p_t, model, M, C, forces=(), config=None, factor=None):
    """One step for linear elasticity: a single bordered solve.

    Solves ``[[K + M/h^2, C^T], [C, 0]] [uc; lam] = [rhs; 0]`` with
    ``rhs = -(1 - c) K ur - M/h ((ur - u_prev)/h - udot_prev) + f``, where
    ``c = 1`` when rig-force cancellation is on.  A prebuilt
    :class:`~compdyn.solver.KKTFactor` for ``K + M/h^2`` and ``C`` may be passed.
    """
    config = _config(config)
    if model.kind != ModelKind.LINEAR:
        raise TypeError("step_linear needs a linear elasticity model")
    h = config.h
    ur = rig(p_t)
    m = _mass_diag(M)
    f = _forces_at(forces, state, h)
    K = model.K
    rhs = -m / h * ((ur - state.u_prev) / h - state.udot_prev) + f
    if not config.cancellation:
        rhs = rhs - K @ ur
    Q = None
    if factor is None:
        Q = linear_system_matrix(model, M, h)
        factor = KKTFactor(Q, C.C)
    uc, lam = factor.solve(rhs)
    C.lam = lam
    info = StepInfo(iterations=1, lam=lam)
    if config.check_oracle:
        Q = linear_system_matrix(model, M, h) if Q is None else Q
        info.oracle_discrepancy = _oracle_gap(Q, C.C, rhs, uc)
    obj = _Objective(model, M, ur, state, f, h, config.cancellation)
    info.energy = obj.energy(uc)
    new_state, u = _advance(state, ur, uc, h)
    return StepResult(new_state, u, uc, _finish(info, C, uc, M))


def linear_system_matrix(model, M, h):
    """``K + M / h^2`` for a constant-Hessian model."""
    return (model.K + sparse.diags(_mass_diag(M) / (h * h))).tocsc()


_ROUNDOFF = 64 * np.finfo(float).eps


def step_newton(state, rig, p_t, model, M, C, forces=(), config=None):
    """Constrained Newton's method with PSD-projected Hessians and Armijo backtracking.

    Starts from the previous complementary displacement projected onto
    ``ker(C)``; every Newton direction satisfies ``C dx = 0`` so all iterates
    stay feasible.  Stops when the RMS of the constraint-projected gradient
    drops below ``config.newton_tol * max(1, g0)``, where ``g0`` is the RMS of
    the full gradient at the starting iterate (the force scale of the step),
    or after ``config.newton_max_iters`` iterations.  A Newton direction whose
    predicted decrease is below the energy's rounding level ends the solve as
    converged.  Otherwise a failed line search keeps the current iterate and
    flags the step; a line search that only ever sees ``+inf`` raises
    :class:`SimulationError`.
    """
    config = _config(config)
    h = config.h
    ur = rig(p_t)
    m = _mass_diag(M)
    Mh = sparse.diags(m / (h * h))
    f = _forces_at(forces, state, h)
    obj = _Objective(model, M, ur, state, f, h, config.cancellation)
    Cm = C.C
    uc = project_to_constraint(state.uc_prev, C, M)
    info = StepInfo(converged=False)
    E = obj.energy(uc)
    if not np.isfinite(E):
        # warm start inverts an element; fall back to the feasible point 0
        uc = np.zeros_like(uc)
        E = obj.energy(uc)
        if not np.isfinite(E):
            raise SimulationError("energy is infinite at the rig pose (inverted elements)")
    sqrt_n = np.sqrt(len(uc))
    lam = np.zeros(Cm.shape[0])
    tol = None
    for it in range(config.newton_max_iters + 1):
        g = obj.gradient(uc)
        if not np.all(np.isfinite(g)):
            raise SimulationError("non-finite gradient")
        if tol is None:
            tol = config.newton_tol * max(1.0, np.linalg.norm(g) / sqrt_n)
        pg = _projected_gradient(g, Cm)
        if np.linalg.norm(pg) / sqrt_n <= tol:
            info.converged = True
            break
        if it == config.newton_max_iters:
            break
        H = (model.hessian(ur + uc, project=True) + Mh).tocsc()
        factor = KKTFactor(H, Cm)
        dx, lam = factor.solve(-g)
        if config.check_oracle:
            gap = _oracle_gap(H, Cm, -g, dx)
            info.oracle_discrepancy = max(gap, info.oracle_discrepancy or 0.0)
        gdx = float(g @ dx)
        if -gdx <= _ROUNDOFF * max(1.0, abs(E)):
            # no decrease is measurable in floating point: stationary to rounding
            info.converged = True
            break
        ls = armijo_search(obj.energy, uc, dx, gdx, c1=config.armijo_c1, shrink=config.shrink,
                           max_backtracks=config.max_backtracks, E0=E)
        if not ls.ok:
            if ls.all_infinite:
                raise SimulationError("every line-search trial inverted an element")
            info.flagged = True
            break
        uc = uc + ls.step * dx
        E = ls.value
        info.iterations += 1
        info.objective_trace.append(E)
        info.residual_trace.append(C.residual(uc))
        info.bound_trace.append(orthogonality_bound(M, uc))
    C.lam = lam
    info.lam = lam
    info.energy = E
    new_state, u = _advance(state, ur, uc, h)
    return StepResult(new_state, u, uc, _finish(info, C, uc, M))


def local_global_system_matrix(model, M, h):
    return (model.global_matrix() + sparse.diags(_mass_diag(M) / (h * h))).tocsc()


def step_local_global(state, rig, p_t, model, M, C, forces=(), config=None, factor=None):
    """Local-global solve with the rig constraint added to the global step.

    Alternates ``model.local_step`` (spring directions or element rotations)
    with a bordered solve of the constant global matrix.  The auxiliary
    objective after each global step is recorded in ``info.objective_trace``;
    it never increases.
    """
    config = _config(config)
    if not model.supports_local_global:
        raise TypeError(f"{model.kind.value} model has no local-global decomposition")
    h = config.h
    ur = rig(p_t)
    f = _forces_at(forces, state, h)
    obj = _Objective(model, M, ur, state, f, h, config.cancellation)
    Q = None
    if factor is None:
        Q = local_global_system_matrix(model, M, h)
        factor = KKTFactor(Q, C.C)
    uc = project_to_constraint(state.uc_prev, C, M)
    info = StepInfo()
    aux = None
    prev = None
    lam = np.zeros(C.C.shape[0])
    for _ in range(config.local_global_iters):
        aux = model.local_step(ur + uc, aux)
        g = obj.aux_gradient(uc, aux)
        dx, lam = factor.solve(-g)
        if config.check_oracle:
            Q = local_global_system_matrix(model, M, h) if Q is None else Q
            gap = _oracle_gap(Q, C.C, -g, dx)
            info.oracle_discrepancy = max(gap, info.oracle_discrepancy or 0.0)
        uc = uc + dx
        val = obj.aux_energy(uc, aux)
        info.iterations += 1
        info.objective_trace.append(val)
        info.residual_trace.append(C.residual(uc))
        info.bound_trace.append(orthogonality_bound(M, uc))
        if prev is not None and prev - val <= config.local_global_tol * max(1.0, abs(val)):
            break
        prev = val
    C.lam = lam
    info.lam = lam
    info.energy = obj.energy(uc)
    new_state, u = _advance(state, ur, uc, h)
    return StepResult(new_state, u, uc, _finish(info, C, uc, M))


# ---------------------------------------------------------------------------
# driver


@dataclass
class FrameReport:
    frame: int
    t: float
    iterations: int
    residual: float
    residual_bound: float
    energy: float
    wall_time: float
    flagged: bool
    oracle_discrepancy: float | None = None

    def as_dict(self):
        return dataclasses.asdict(self)


def orthogonality_bound(M, uc):
    """Tolerance ``1e-8 * max(1, ||M||_inf ||uc||_inf)`` for ``||C uc||_inf``."""
    return 1e-8 * max(1.0, float(_mass_diag(M).max()) * float(np.abs(uc).max(initial=0.0)))


class Simulator:
    """Steps a rigged mesh through an animation, one frame at a time.

    Holds the simulation state and caches rig Jacobians, constraint rows and
    bordered factorizations whenever they are constant (linear rig and
    constant-Hessian model).
    """

    def __init__(self, mesh, rig, model, mass, config=None, forces=(), leak=None):
        self.mesh = mesh
        self.rig = rig
        self.model = model
        self.M = mass
        self.config = _config(config)
        self.forces = list(forces)
        self.leak = leak if leak is not None else MomentumLeak(np.ones(mesh.n), mesh.dim)
        self.state = None
        self.pose = None
        self.frame = -1
        self.reports: list[FrameReport] = []
        self.step_infos: list[StepInfo] = []
        self._C = None
        self._factors = {}
        self.method = self._pick_method()

    def _pick_method(self):
        method = self.config.solver
        kind = self.model.kind
        if method == "auto":
            if kind == ModelKind.LINEAR:
                return "linear"
            if kind == ModelKind.NEOHOOKEAN:
                return "newton"
            return "local_global"
        if method == "linear" and kind != ModelKind.LINEAR:
            raise ValueError("the linear solver needs a linear elasticity model")
        if method == "local_global" and not self.model.supports_local_global:
            raise ValueError(f"{kind.value} model has no local-global decomposition")
        return method

    def constraint(self, p):
        if self.rig.is_linear and self._C is not None:
            return self._C
        C = assemble_constraint(self.rig.jacobian(p), self.M, self.leak)
        if self.rig.is_linear:
            self._C = C
        return C

    def reset(self, p0, t0=0.0):
        """Start at pose ``p0`` with zero velocity and no complementary motion."""
        self.pose = np.asarray(p0, dtype=float)
        self.state = SimState.at_rest_pose(self.rig(self.pose), t0)
        self.frame = 0
        self.reports = [FrameReport(0, float(t0), 0, 0.0, 1e-8, float("nan"), 0.0, False)]
        return self.state.u_prev.copy()

    def _step_once(self, p, cfg):
        C = self.constraint(p)
        cacheable = self.rig.is_linear
        if self.method == "linear":
            key = ("linear", cfg.h)
            factor = self._factors.get(key) if cacheable else None
            if factor is None:
                factor = KKTFactor(linear_system_matrix(self.model, self.M, cfg.h), C.C)
                if cacheable:
                    self._factors[key] = factor
            return step_linear(self.state, self.rig, p, self.model, self.M, C, self.forces, cfg, factor)
        if self.method == "local_global":
            key = ("lg", cfg.h)
            factor = self._factors.get(key) if cacheable else None
            if factor is None:
                factor = KKTFactor(local_global_system_matrix(self.model, self.M, cfg.h), C.C)
                if cacheable:
                    self._factors[key] = factor
            return step_local_global(self.state, self.rig, p, self.model, self.M, C, self.forces, cfg, factor)
        return step_newton(self.state, self.rig, p, self.model, self.M, C, self.forces, cfg)

    def step(self, p):
        """Advance one animation frame to pose ``p``; returns the displacement ``u``."""
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        p = np.asarray(p, dtype=float)
        N = self.config.substeps
        cfg = dataclasses.replace(self.config, h=self.config.h / N)
        frame = self.frame + 1
        start = time.perf_counter()
        iters, flagged, gap = 0, False, None
        for i in range(1, N + 1):
            pi = self.pose + (i / N) * (p - self.pose) if N > 1 else p
            try:
                res = self._step_once(pi, cfg)
            except SimulationError as exc:
                raise SimulationError(str(exc).split(": ", 1)[-1] if exc.frame is not None else str(exc),
                                      frame) from exc
            except KKTError as exc:
                raise SimulationError(str(exc), frame) from exc
            self.state = res.state
            self.step_infos.append(res.info)
            iters += res.info.iterations
            flagged |= res.info.flagged
            if res.info.oracle_discrepancy is not None:
                gap = max(gap or 0.0, res.info.oracle_discrepancy)
        wall = time.perf_counter() - start
        self.pose = p
        self.frame = frame
        uc = self.state.uc_prev
        self.reports.append(FrameReport(frame, self.state.t, iters, res.info.residual,
                                        orthogonality_bound(self.M, uc), res.info.energy,
                                        wall, flagged, gap))
        return self.state.u_prev.copy()


def simulate(mesh, rig, animation, model, config=None, forces=(), D=None, mass=None,
             density=1.0, return_simulator=False):
    """Run a whole animation; returns an array of per-frame displacements ``u_t``.

    ``animation`` is a sequence of rig poses (or an object with a ``poses``
    attribute).  Frame 0 is the initial condition ``u = ur(p_0)``.
    """
    from .meshcore import lumped_mass

    poses = np.asarray(getattr(animation, "poses", animation), dtype=float)
    M = mass if mass is not None else lumped_mass(mesh, density)
    sim = Simulator(mesh, rig, model, M, config, forces, D)
    frames = []
    if len(poses):
        times = getattr(animation, "times", None)
        frames.append(sim.reset(poses[0], 0.0 if times is None else times[0]))
        for p in poses[1:]:
            frames.append(sim.step(p))
    out = np.array(frames).reshape(len(frames), rig.size)
    return (out, sim) if return_simulator else out


__all__ = [
    "SimConfig", "SimState", "MomentumLeak", "ExternalForce", "StepInfo", "StepResult",
    "FrameReport", "Simulator", "SimulationError", "build_momentum_leak",
    "assemble_constraint", "external_force", "step_linear", "step_newton",
    "step_local_global", "simulate", "project_to_constraint", "orthogonality_bound",
]
