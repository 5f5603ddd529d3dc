"""Elastic potentials over displacement fields.

All models take coordinate-major displacement vectors ``u`` (length
``dim * n``, see :mod:`compdyn.meshcore`) and return energies, gradients and
sparse Hessians in the same layout.  FEM models work per element through
the deformation gradient ``F = sum_i x_i (x) grad(phi_i)`` of the deformed
positions ``x = X + U``.

Models that support local-global optimization (mass-spring and ARAP) also
expose ``local_step``, a constant ``global_matrix`` and the auxiliary
objective whose minimum over the local variables is the potential itself.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .meshcore import shape_gradients, unflatten
from .solver import psd_project


class ModelKind(str, enum.Enum):
    LINEAR = "linear"
    NEOHOOKEAN = "neohookean"
    ARAP = "arap"
    MASS_SPRING = "mass_spring"


def lame_parameters(youngs, poisson):
    """(lambda, mu) from Young's modulus and Poisson's ratio (plane strain in 2D)."""
    if not youngs > 0:
        raise ValueError(f"Young's modulus must be positive, got {youngs}")
    if not -1.0 < poisson < 0.5:
        raise ValueError(f"Poisson's ratio must lie in (-1, 0.5), got {poisson}")
    lam = youngs * poisson / ((1 + poisson) * (1 - 2 * poisson))
    mu = youngs / (2 * (1 + poisson))
    return lam, mu


class _Assembler:
    """Scatter per-element local vectors/matrices into global coordinate-major arrays.

    Local dof ``i * dim + a`` of an element is coordinate ``a`` of its ``i``-th
    vertex ``v``; its global index is ``a * n + v``.
    """

    def __init__(self, index_sets, n, dim):
        # index_sets: (k, s) vertex indices per block (elements or springs)
        self.n, self.dim = n, dim
        idx = np.asarray(index_sets)
        dofs = (np.arange(dim)[None, None, :] * n + idx[:, :, None]).reshape(len(idx), -1)
        self.dofs = dofs
        s = dofs.shape[1]
        self.rows = np.repeat(dofs, s, axis=1).ravel()
        self.cols = np.tile(dofs, (1, s)).ravel()
        self.size = dim * n

    def vector(self, local):
        return np.bincount(self.dofs.ravel(), weights=local.reshape(-1), minlength=self.size)

    def matrix(self, local):
        H = sparse.coo_matrix((local.reshape(-1), (self.rows, self.cols)), shape=(self.size, self.size))
        return H.tocsr()


class ElasticModel:
    """Base class.  Subclasses implement the per-model pieces."""

    kind: ModelKind
    supports_local_global = False

    def __init__(self, mesh):
        self.mesh = mesh
        self.dim = mesh.dim
        self.size = mesh.dim * mesh.n

    def energy(self, u):
        raise NotImplementedError

    def gradient(self, u):
        raise NotImplementedError

    def hessian(self, u, project=False):
        raise NotImplementedError

    def _check(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape != (self.size,):
            raise ValueError(f"displacement must have length {self.size}, got {u.shape}")
        return u


class _FEMModel(ElasticModel):
    """Shared deformation-gradient machinery for per-element energy densities."""

    def __init__(self, mesh):
        super().__init__(mesh)
        self.grads = shape_gradients(mesh)  # (m, k, d)
        self.volumes = mesh.measures
        self.asm = _Assembler(mesh.elements, mesh.n, mesh.dim)

    def deformation_gradients(self, u):
        X = self.mesh.vertices + unflatten(self._check(u), self.dim)
        Xe = X[self.mesh.elements]  # (m, k, d)
        return np.einsum("eia,eib->eab", Xe, self.grads)

    def _local_gradient(self, P, weights):
        # g[e, i, a] = w_e sum_b P[e, a, b] G[e, i, b]
        return np.einsum("e,eab,eib->eia", weights, P, self.grads)

    def _local_hessian(self, dPdF, weights):
        d = self.dim
        k = d + 1
        H = np.einsum("e,eabcf,eib,ejf->eiajc", weights, dPdF, self.grads, self.grads)
        return H.reshape(len(weights), k * d, k * d)


class LinearModel(_FEMModel):
    """Small-strain linear elasticity, ``energy = 1/2 u^T K u``."""

    kind = ModelKind.LINEAR

    def __init__(self, mesh, youngs, poisson):
        super().__init__(mesh)
        self.youngs, self.poisson = youngs, poisson
        self.lam, self.mu = lame_parameters(youngs, poisson)
        d = self.dim
        I = np.eye(d)
        C = (self.mu * (np.einsum("ac,bf->abcf", I, I) + np.einsum("af,bc->abcf", I, I))
             + self.lam * np.einsum("ab,cf->abcf", I, I))
        dPdF = np.broadcast_to(C, (len(self.volumes),) + C.shape)
        K = self.asm.matrix(self._local_hessian(dPdF, self.volumes))
        self.K = ((K + K.T) * 0.5).tocsr()

    def energy(self, u):
        u = self._check(u)
        return 0.5 * float(u @ (self.K @ u))

    def gradient(self, u):
        return self.K @ self._check(u)

    def hessian(self, u=None, project=False):
        return self.K


class NeoHookeanModel(_FEMModel):
    """Compressible neo-Hookean solid with log-determinant volume term.

    Energy density ``mu/2 (tr(F^T F) - d) - mu log J + lam/2 (log J)^2``.
    Inverted elements (``J <= 0``) make :meth:`energy` return ``+inf``.
    """

    kind = ModelKind.NEOHOOKEAN

    def __init__(self, mesh, youngs, poisson):
        super().__init__(mesh)
        self.youngs, self.poisson = youngs, poisson
        self.lam, self.mu = lame_parameters(youngs, poisson)

    def energy(self, u):
        F = self.deformation_gradients(u)
        J = np.linalg.det(F)
        if np.any(J <= 0):
            return np.inf
        logJ = np.log(J)
        psi = (0.5 * self.mu * (np.einsum("eab,eab->e", F, F) - self.dim)
               - self.mu * logJ + 0.5 * self.lam * logJ**2)
        return float(self.volumes @ psi)

    def _stress(self, F):
        J = np.linalg.det(F)
        with np.errstate(invalid="ignore", divide="ignore"):
            logJ = np.log(J)
        FinvT = np.linalg.inv(F).transpose(0, 2, 1)
        P = self.mu * (F - FinvT) + self.lam * logJ[:, None, None] * FinvT
        return P, FinvT, logJ

    def gradient(self, u):
        F = self.deformation_gradients(u)
        P, _, _ = self._stress(F)
        return self.asm.vector(self._local_gradient(P, self.volumes))

    def element_hessians(self, u):
        F = self.deformation_gradients(u)
        _, B, logJ = self._stress(F)  # B = F^{-T}
        d = self.dim
        I = np.eye(d)
        dPdF = (self.mu * np.einsum("ac,bf->abcf", I, I)[None]
                + (self.mu - self.lam * logJ)[:, None, None, None, None] * np.einsum("eaf,ecb->eabcf", B, B)
                + self.lam * np.einsum("eab,ecf->eabcf", B, B))
        return self._local_hessian(dPdF, self.volumes)

    def hessian(self, u, project=False):
        H = self.element_hessians(u)
        if project:
            H = psd_project(H)
        return self.asm.matrix(H)


def polar_rotations(F):
    """Rotation factor of the polar decomposition for a stack of matrices.

    Uses the SVD with the smallest singular value's sign flipped when
    ``det(F) < 0`` so the result is always a proper rotation.
    """
    U, s, Vt = np.linalg.svd(F)
    flip = np.linalg.det(U) * np.linalg.det(Vt) < 0
    U[flip, :, -1] *= -1
    s[flip, -1] *= -1
    return U @ Vt, U, s, Vt.transpose(0, 2, 1)


class ARAPModel(_FEMModel):
    """Element-based as-rigid-as-possible energy ``sum_e w_e ||F_e - R(F_e)||_F^2``.

    ``w_e = stiffness * measure``.  :meth:`hessian` is the exact Hessian
    (including the derivative of the polar rotation); :meth:`global_matrix`
    is the rotation-fixed quadratic form used by local-global solves.
    """

    kind = ModelKind.ARAP
    supports_local_global = True

    def __init__(self, mesh, stiffness):
        super().__init__(mesh)
        if not stiffness > 0:
            raise ValueError(f"stiffness must be positive, got {stiffness}")
        self.stiffness = float(stiffness)
        self.weights = self.stiffness * self.volumes
        d = self.dim
        I = np.eye(d)
        two_id = np.broadcast_to(2 * np.einsum("ac,bf->abcf", I, I), (len(self.weights), d, d, d, d))
        L = self.asm.matrix(self._local_hessian(two_id, self.weights))
        self._global = ((L + L.T) * 0.5).tocsr()

    def energy(self, u):
        F = self.deformation_gradients(u)
        R = polar_rotations(F)[0]
        D = F - R
        return float(self.weights @ np.einsum("eab,eab->e", D, D))

    def gradient(self, u):
        F = self.deformation_gradients(u)
        R = polar_rotations(F)[0]
        return self.asm.vector(self._local_gradient(2 * (F - R), self.weights))

    def element_hessians(self, u):
        F = self.deformation_gradients(u)
        _, U, s, V = polar_rotations(F)
        d = self.dim
        denom = s[:, :, None] + s[:, None, :]
        denom = np.where(np.abs(denom) < 1e-12, 1e-12, denom)
        # dR_ab/dF_cf = sum_ij U_ai V_bj (U_ci V_fj - U_cj V_fi) / (s_i + s_j)
        A = np.einsum("eci,efj->eijcf", U, V)
        Om = (A - A.transpose(0, 2, 1, 3, 4)) / denom[:, :, :, None, None]
        dR = np.einsum("eai,ebj,eijcf->eabcf", U, V, Om)
        I = np.eye(d)
        dPdF = 2 * (np.einsum("ac,bf->abcf", I, I)[None] - dR)
        return self._local_hessian(dPdF, self.weights)

    def hessian(self, u, project=False):
        H = self.element_hessians(u)
        if project:
            H = psd_project(H)
        return self.asm.matrix(H)

    # local-global interface
    def local_step(self, u, previous=None):
        """Per-element best-fit rotations (``(m, d, d)``)."""
        return polar_rotations(self.deformation_gradients(u))[0]

    def global_matrix(self):
        return self._global

    def aux_energy(self, u, rotations):
        D = self.deformation_gradients(u) - rotations
        return float(self.weights @ np.einsum("eab,eab->e", D, D))

    def aux_gradient(self, u, rotations):
        D = self.deformation_gradients(u) - rotations
        return self.asm.vector(self._local_gradient(2 * D, self.weights))


@dataclass(frozen=True)
class SpringSet:
    """Springs ``(i, j)`` with rest lengths and stiffnesses."""

    i: np.ndarray
    j: np.ndarray
    rest: np.ndarray
    stiffness: np.ndarray

    def __post_init__(self):
        if len(self.i) == 0:
            raise ValueError("spring set is empty")
        if np.any(self.i == self.j):
            raise ValueError("spring endpoints must differ")
        if np.any(~(self.rest > 0)):
            raise ValueError("spring rest lengths must be positive")
        if np.any(~(self.stiffness > 0)):
            raise ValueError("spring stiffness must be positive")

    @classmethod
    def from_mesh(cls, mesh, k):
        E = mesh.edges()
        rest = np.linalg.norm(mesh.vertices[E[:, 0]] - mesh.vertices[E[:, 1]], axis=1)
        return cls(E[:, 0], E[:, 1], rest, np.full(len(E), float(k)))


class MassSpringModel(ElasticModel):
    """Hookean springs ``sum k/2 (||x_i - x_j|| - r)^2``.

    The local step fixes per-spring target vectors ``r (x_i - x_j)/||x_i - x_j||``;
    the global objective ``sum k/2 ||(x_i - x_j) - d||^2`` is then quadratic with
    a constant Hessian.
    """

    kind = ModelKind.MASS_SPRING
    supports_local_global = True

    def __init__(self, mesh, springs):
        super().__init__(mesh)
        self.springs = springs
        s = springs
        self.asm = _Assembler(np.column_stack([s.i, s.j]), mesh.n, mesh.dim)
        d = self.dim
        I = np.eye(d)
        block = np.einsum("s,ac->sac", s.stiffness, I)
        self._global = self.asm.matrix(self._pair_blocks(block))

    def _pair_blocks(self, H):
        # (s, d, d) edge-space Hessians -> (s, 2d, 2d) with local order (i_x, i_y, j_x, j_y)
        d = self.dim
        out = np.empty((len(H), 2, d, 2, d))
        out[:, 0, :, 0, :] = H
        out[:, 1, :, 1, :] = H
        out[:, 0, :, 1, :] = -H
        out[:, 1, :, 0, :] = -H
        return out.reshape(len(H), 2 * d, 2 * d)

    def _pair_vector(self, g):
        return self.asm.vector(np.stack([g, -g], axis=1))

    def spring_vectors(self, u):
        X = self.mesh.vertices + unflatten(self._check(u), self.dim)
        return X[self.springs.i] - X[self.springs.j]

    def energy(self, u):
        L = np.linalg.norm(self.spring_vectors(u), axis=1)
        return float(0.5 * self.springs.stiffness @ (L - self.springs.rest) ** 2)

    def gradient(self, u):
        e = self.spring_vectors(u)
        L = np.linalg.norm(e, axis=1)
        coef = self.springs.stiffness * (L - self.springs.rest) / L
        return self._pair_vector(coef[:, None] * e)

    def element_hessians(self, u):
        e = self.spring_vectors(u)
        L = np.linalg.norm(e, axis=1)
        nrm = e / L[:, None]
        k, r = self.springs.stiffness, self.springs.rest
        nn = np.einsum("sa,sb->sab", nrm, nrm)
        I = np.eye(self.dim)[None]
        H = k[:, None, None] * (nn + (1 - r / L)[:, None, None] * (I - nn))
        return self._pair_blocks(H)

    def hessian(self, u, project=False):
        H = self.element_hessians(u)
        if project:
            H = psd_project(H)
        return self.asm.matrix(H)

    def local_step(self, u, previous=None):
        """Target spring vectors of rest length along the current directions.

        Springs whose endpoints coincide keep their ``previous`` target, or the
        rest-state spring vector when no previous targets are given.
        """
        e = self.spring_vectors(u)
        L = np.linalg.norm(e, axis=1)
        out = np.empty_like(e)
        ok = L > 0
        out[ok] = self.springs.rest[ok, None] * e[ok] / L[ok, None]
        if not ok.all():
            if previous is None:
                V = self.mesh.vertices
                previous = V[self.springs.i] - V[self.springs.j]
            out[~ok] = previous[~ok]
        return out

    def global_matrix(self):
        return self._global

    def aux_energy(self, u, targets):
        D = self.spring_vectors(u) - targets
        return float(0.5 * self.springs.stiffness @ np.einsum("sa,sa->s", D, D))

    def aux_gradient(self, u, targets):
        D = self.spring_vectors(u) - targets
        return self._pair_vector(self.springs.stiffness[:, None] * D)


def linear_model(mesh, youngs, poisson):
    return LinearModel(mesh, youngs, poisson)


def neohookean_model(mesh, youngs, poisson):
    return NeoHookeanModel(mesh, youngs, poisson)


def arap_model(mesh, stiffness):
    return ARAPModel(mesh, stiffness)


def mass_spring_model(mesh, k=None, springs=None):
    """Mass-spring model over the mesh edges (stiffness ``k``) or an explicit :class:`SpringSet`."""
    if springs is None:
        if k is None:
            raise ValueError("give a stiffness k or an explicit SpringSet")
        if not k > 0:
            raise ValueError(f"spring stiffness must be positive, got {k}")
        springs = SpringSet.from_mesh(mesh, k)
    return MassSpringModel(mesh, springs)


def local_step(model, u, previous=None):
    """Local-step auxiliary variables for a mass-spring or ARAP model."""
    if not model.supports_local_global:
        raise TypeError(f"{model.kind.value} model has no local-global decomposition")
    return model.local_step(u, previous)


__all__ = [
    "ModelKind", "ElasticModel", "LinearModel", "NeoHookeanModel", "ARAPModel",
    "MassSpringModel", "SpringSet", "lame_parameters", "linear_model",
    "neohookean_model", "arap_model", "mass_spring_model", "local_step",
    "polar_rotations",
]
