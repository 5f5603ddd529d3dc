"""Rig functions, their Jacobians, rig-parameter recovery and surface embedding.

A rig maps ``m`` parameters ``p`` to coordinate-major vertex displacements
``u_r(p)`` of length ``dim * n``.  Linear rigs are stored as ``u_r = J p + b``.

Parameter layouts:

* affine / LBS: bone ``j`` contributes ``vec(T_j^T)``, i.e. the rows of its
  ``d x (d+1)`` transform concatenated (``[a11 a12 t1 a21 a22 t2]`` in 2D);
  bones are stacked in order.
* cage: coordinate-major posed cage vertices (all x, then all y, ...).
* blendshape: one weight per sculpted pose.
"""

from __future__ import annotations

import json
import logging
import subprocess
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse import linalg as spla

from .meshcore import boundary_facets, boundary_vertices, cotan_laplacian, flatten
from .solver import ConstraintMatrix

log = logging.getLogger(__name__)


class RigError(ValueError):
    pass


class Rig:
    """A differentiable map from rig parameters to displacements.

    Subclasses set :attr:`is_linear` and implement :meth:`evaluate`.
    Nonlinear rigs get a finite-difference Jacobian.
    """

    kind = "external"
    is_linear = False
    rest_pose = None

    def __init__(self, dim, n_vertices, n_params, fd_epsilon=1e-5):
        self.dim = dim
        self.n_vertices = n_vertices
        self.n_params = n_params
        self.fd_epsilon = fd_epsilon

    @property
    def size(self):
        return self.dim * self.n_vertices

    def __call__(self, p):
        return self.evaluate(p)

    def evaluate(self, p):
        raise NotImplementedError

    def evaluate_many(self, poses):
        return np.array([self.evaluate(p) for p in poses])

    def jacobian(self, p):
        return fd_jacobian(self, p, self.fd_epsilon)

    def _check_pose(self, p):
        p = np.asarray(p, dtype=float).ravel()
        if p.shape != (self.n_params,):
            raise RigError(f"{self.kind} rig expects {self.n_params} parameters, got {p.size}")
        return p


class LinearRig(Rig):
    """Rig of the form ``u_r(p) = J p + offset`` with constant Jacobian."""

    is_linear = True

    def __init__(self, kind, dim, J, offset, rest_pose=None):
        J = np.asarray(J, dtype=float)
        super().__init__(dim, J.shape[0] // dim, J.shape[1])
        self.kind = kind
        self.J = J
        self.offset = np.asarray(offset, dtype=float)
        self.rest_pose = None if rest_pose is None else np.asarray(rest_pose, dtype=float)

    def evaluate(self, p):
        return self.J @ self._check_pose(p) + self.offset

    def evaluate_many(self, poses):
        return np.asarray(poses, dtype=float) @ self.J.T + self.offset

    def jacobian(self, p=None):
        return self.J


def _affine_block(V):
    """``I_d (x) [V 1]`` for rest positions ``V`` of shape (n, d)."""
    n, d = V.shape
    return np.kron(np.eye(d), np.column_stack([V, np.ones(n)]))


def identity_transform_pose(dim, bones=1):
    """Stacked ``vec(T^T)`` of identity transforms ``[I | 0]``."""
    T = np.hstack([np.eye(dim), np.zeros((dim, 1))])
    return np.tile(T.ravel(), bones)


def affine_rig(mesh):
    """Single affine transform controlling the whole shape (``m = d(d+1)``)."""
    V = mesh.vertices
    return LinearRig("affine", mesh.dim, _affine_block(V), -flatten(V), identity_transform_pose(mesh.dim))


def lbs_rig(mesh, weights):
    """Linear blend skinning with per-vertex-per-bone ``weights`` (n x k)."""
    W = np.asarray(weights, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    if W.shape[0] != mesh.n:
        raise RigError(f"weights have {W.shape[0]} rows, mesh has {mesh.n} vertices")
    if not np.all(np.isfinite(W)):
        raise RigError("weights must be finite")
    dev = np.abs(W.sum(axis=1) - 1).max()
    if dev > 1e-6:
        warnings.warn(f"skinning weight rows deviate from partition of unity by {dev:.3g}", stacklevel=2)
    V = mesh.vertices
    d = mesh.dim
    Vh = np.column_stack([V, np.ones(mesh.n)])
    # column block for bone j: I_d (x) (diag(w_j) [V 1])
    J = np.hstack([np.kron(np.eye(d), W[:, [j]] * Vh) for j in range(W.shape[1])])
    return LinearRig("lbs", d, J, -flatten(V), identity_transform_pose(d, W.shape[1]))


def cage_rig(mesh, cage_weights, rest_cage):
    """Cage deformation with generalized barycentric ``cage_weights`` (n x k)."""
    W = np.asarray(cage_weights, dtype=float)
    C0 = np.asarray(rest_cage, dtype=float)
    d = mesh.dim
    if W.shape[0] != mesh.n or C0.shape != (W.shape[1], d):
        raise RigError(f"cage weights {W.shape} / rest cage {C0.shape} do not match mesh ({mesh.n}, {d})")
    dev = np.abs(W.sum(axis=1) - 1).max()
    if dev > 1e-6:
        warnings.warn(f"cage weight rows deviate from partition of unity by {dev:.3g}", stacklevel=2)
    J = np.kron(np.eye(d), W)
    return LinearRig("cage", d, J, -flatten(mesh.vertices), flatten(C0))


def blendshape_rig(rest, poses):
    """Blendshapes ``u_r(w) = sum_j w_j b_j - v``.

    ``rest`` is an (n, d) array (or a mesh); ``poses`` is a sequence of (n, d)
    vertex arrays.
    """
    V = np.asarray(getattr(rest, "vertices", rest), dtype=float)
    cols = []
    for j, B in enumerate(poses):
        B = np.asarray(B, dtype=float)
        if B.shape != V.shape:
            raise RigError(f"pose {j} has shape {B.shape}, rest has {V.shape}")
        cols.append(flatten(B))
    if not cols:
        raise RigError("blendshape rig needs at least one pose")
    return LinearRig("blendshape", V.shape[1], np.column_stack(cols), -flatten(V))


def static_rig(mesh):
    """Rig with no parameters (``m = 0``): ``u_r = 0`` and no constraint."""
    dn = mesh.dim * mesh.n
    return LinearRig("none", mesh.dim, np.zeros((dn, 0)), np.zeros(dn), np.zeros(0))


class FunctionRig(Rig):
    """Rig backed by a Python callable ``p -> u_r``; Jacobian by central differences."""

    def __init__(self, func, dim, n_vertices, n_params, fd_epsilon=1e-5, rest_pose=None):
        super().__init__(dim, n_vertices, n_params, fd_epsilon)
        self.func = func
        self.rest_pose = rest_pose

    def evaluate(self, p):
        return np.asarray(self.func(self._check_pose(p)), dtype=float)


class ExternalRig(Rig):
    """Rig evaluated by an external program.

    The command receives ``{"poses": [[...], ...]}`` on stdin and must print
    ``{"displacements": [[...], ...]}`` (coordinate-major, one row per pose).
    """

    def __init__(self, command, dim, n_vertices, n_params, fd_epsilon=1e-5, rest_pose=None, timeout=60):
        super().__init__(dim, n_vertices, n_params, fd_epsilon)
        self.command = list(command)
        self.rest_pose = None if rest_pose is None else np.asarray(rest_pose, dtype=float)
        self.timeout = timeout

    def evaluate_many(self, poses):
        poses = np.atleast_2d(np.asarray(poses, dtype=float))
        payload = json.dumps({"poses": poses.tolist()})
        proc = subprocess.run(self.command, input=payload, capture_output=True, text=True,
                              timeout=self.timeout, check=False)
        if proc.returncode != 0:
            raise RigError(f"rig command failed ({proc.returncode}): {proc.stderr.strip()}")
        try:
            out = np.asarray(json.loads(proc.stdout)["displacements"], dtype=float)
        except (ValueError, KeyError) as exc:
            raise RigError(f"rig command produced unreadable output: {exc}") from None
        if out.shape != (len(poses), self.size):
            raise RigError(f"rig command returned shape {out.shape}, expected {(len(poses), self.size)}")
        return out

    def evaluate(self, p):
        return self.evaluate_many([self._check_pose(p)])[0]


def fd_jacobian(rig, p, eps=1e-5):
    """Central-difference rig Jacobian; column ``j`` is ``(u(p+eps e_j) - u(p-eps e_j)) / 2 eps``."""
    if not eps > 0:
        raise ValueError("finite-difference step must be positive")
    p = np.asarray(p, dtype=float).ravel()
    m = p.size
    E = eps * np.eye(m)
    vals = rig.evaluate_many(np.vstack([p + E, p - E]))
    J = (vals[:m] - vals[m:]).T / (2 * eps)
    if not np.all(np.isfinite(J)):
        raise RigError("non-finite rig evaluation in finite-difference Jacobian")
    return J


def recover_rig_params(rig, M, u):
    """Rig parameters whose displacement is M-closest to ``u`` (linear rigs only).

    Returns ``(J^T M J)^{-1} J^T M (u - b)``; falls back to the pseudo-inverse
    with a warning when ``J^T M J`` is singular.
    """
    if not rig.is_linear:
        raise RigError("parameter recovery needs a linear rig")
    J = rig.J
    MJ = M @ J
    A = J.T @ MJ
    rhs = MJ.T @ (np.asarray(u, dtype=float) - rig.offset)
    if np.linalg.cond(A) > 1e12:
        warnings.warn("J^T M J is rank deficient; returning the least-norm fit", stacklevel=2)
        return np.linalg.pinv(A, rcond=1e-12) @ rhs
    return np.linalg.solve(A, rhs)


def harmonic_extension(mesh, surface_values):
    """Extend values given on the boundary vertices harmonically into the interior.

    ``surface_values`` is indexed like :func:`boundary_vertices` and may be
    (nb,) or (nb, c).  Interior values solve ``L u = 0`` with the cotangent
    Laplacian; boundary values are copied exactly.
    """
    B = boundary_vertices(mesh)
    vals = np.asarray(surface_values, dtype=float)
    if vals.shape[0] != len(B):
        raise ValueError(f"expected {len(B)} boundary values, got {vals.shape[0]}")
    squeeze = vals.ndim == 1
    vals = vals.reshape(len(B), -1)
    out = np.zeros((mesh.n, vals.shape[1]))
    out[B] = vals
    interior = np.setdiff1d(np.arange(mesh.n), B)
    if len(interior):
        L = cotan_laplacian(mesh).tocsr()
        Lii = L[interior][:, interior]
        Lib = L[interior][:, B]
        _check_anchored(Lii, Lib)
        out[interior] = np.atleast_2d(spla.splu(Lii.tocsc()).solve(-(Lib @ vals))).reshape(len(interior), -1)
    return out[:, 0] if squeeze else out


def _check_anchored(Lii, Lib):
    ncomp, labels = csgraph.connected_components(Lii != 0, directed=False)
    touches = np.asarray((Lib != 0).sum(axis=1)).ravel() > 0
    for c in range(ncomp):
        if not touches[labels == c].any():
            raise ValueError("interior component with no boundary neighbours; harmonic system is singular")


@dataclass
class EmbeddedSurface:
    """Surface vertices embedded in a volume mesh.

    ``S`` (sparse, ``d*ns x d*n``) interpolates volume displacements to the
    surface with barycentric rows; ``mass`` is the surface mass matrix
    (``d*ns x d*ns``).
    """

    S: sparse.csr_matrix
    mass: sparse.csr_matrix
    dim: int


def _barycentric_lookup(mesh, points, tol=1e-10):
    V, T = mesh.vertices, mesh.elements
    d = mesh.dim
    Dm = (V[T[:, 1:]] - V[T[:, :1]]).transpose(0, 2, 1)
    Dinv = np.linalg.inv(Dm)
    rows, cols, vals = [], [], []
    for s, x in enumerate(points):
        lam = np.einsum("eij,ej->ei", Dinv, x - V[T[:, 0]])
        bary = np.column_stack([1 - lam.sum(axis=1), lam])
        e = int(np.argmax(bary.min(axis=1)))
        if bary[e].min() < -tol:
            raise ValueError(f"surface point {s} lies outside the volume mesh")
        b = np.clip(bary[e], 0.0, None)
        b /= b.sum()
        rows += [s] * (d + 1)
        cols += list(T[e])
        vals += list(b)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(len(points), mesh.n))


def _facet_lumped_mass(points, faces, density):
    P = np.asarray(points, dtype=float)
    F = np.asarray(faces)
    E = P[F[:, 1:]] - P[F[:, :1]]
    if F.shape[1] == 2:
        meas = np.linalg.norm(E[:, 0], axis=1)
    else:
        meas = 0.5 * np.linalg.norm(np.cross(E[:, 0], E[:, 1]), axis=1)
    share = density * meas / F.shape[1]
    return np.bincount(F.ravel(), weights=np.repeat(share, F.shape[1]), minlength=len(P))


def embed_surface(mesh, points=None, faces=None, mass_mode="surface", density=1.0, volume_mass=None):
    """Build an :class:`EmbeddedSurface`.

    Defaults to the mesh's own boundary.  ``mass_mode="surface"`` lumps mass
    over the surface facets; ``"restricted"`` uses ``S M S^T`` from the volume
    mass ``volume_mass`` (a :class:`~compdyn.meshcore.LumpedMassMatrix`).
    """
    d = mesh.dim
    if points is None:
        B = boundary_vertices(mesh)
        remap = np.full(mesh.n, -1)
        remap[B] = np.arange(len(B))
        points = mesh.vertices[B]
        faces = remap[boundary_facets(mesh)]
        S0 = sparse.csr_matrix((np.ones(len(B)), (np.arange(len(B)), B)), shape=(len(B), mesh.n))
    else:
        points = np.asarray(points, dtype=float)
        S0 = _barycentric_lookup(mesh, points)
    if mass_mode == "surface":
        if faces is None:
            raise ValueError("surface mass needs surface faces")
        m = _facet_lumped_mass(points, faces, density)
        Msur0 = sparse.diags(m)
    elif mass_mode == "restricted":
        if volume_mass is None:
            raise ValueError("restricted mass needs the volume mass matrix")
        Msur0 = S0 @ sparse.diags(volume_mass.vertex_masses) @ S0.T
    else:
        raise ValueError(f"unknown mass mode {mass_mode!r}")
    I = sparse.identity(d, format="csr")
    return EmbeddedSurface(sparse.kron(I, S0).tocsr(), sparse.kron(I, Msur0).tocsr(), d)


def build_surface_constraint(embedded, J_sur, D=None):
    """Constraint rows ``J_sur^T M_sur S`` (right-multiplied by ``D`` when given)."""
    J_sur = np.asarray(J_sur, dtype=float)
    if J_sur.shape[0] != embedded.S.shape[0]:
        raise ValueError(f"surface Jacobian has {J_sur.shape[0]} rows, surface has {embedded.S.shape[0]} dofs")
    C = np.asarray((embedded.S.T @ (embedded.mass @ J_sur)).T)
    if D is not None:
        diag = np.asarray(getattr(D, "diag", D), dtype=float)
        if diag.shape != (C.shape[1],):
            raise ValueError(f"D has {diag.shape} entries, expected {C.shape[1]}")
        C = C * diag[None, :]
    return ConstraintMatrix(C)
