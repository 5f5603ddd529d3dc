"""Simplicial meshes: measures, lumped mass, cotangent Laplacian, boundary, file IO.

Displacement vectors over a mesh are stored *coordinate-major*: a field
``U`` of shape ``(n, dim)`` flattens to ``u = U.T.ravel()``, i.e. all x
components, then all y components (then z).  This is the layout implied by
the Kronecker-structured rig Jacobians in :mod:`compdyn.rig`.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse


class MeshError(ValueError):
    """Raised for malformed mesh files or invalid mesh data."""


def flatten(U):
    """(n, d) per-vertex array -> coordinate-major length ``d*n`` vector."""
    return np.asarray(U, dtype=float).T.ravel()


def unflatten(u, dim):
    """Inverse of :func:`flatten`."""
    return np.asarray(u, dtype=float).reshape(dim, -1).T


def _signed_measures(V, T):
    dim = V.shape[1]
    E = V[T[:, 1:]] - V[T[:, :1]]  # (m, dim, dim), rows are edge vectors
    fact = 2.0 if dim == 2 else 6.0
    return np.linalg.det(E) / fact


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangle (2D) or tetrahedral (3D) mesh in rest configuration.

    Construction validates indices, flips negatively oriented elements by
    swapping their last two vertices and rejects degenerate elements.
    """

    vertices: np.ndarray
    elements: np.ndarray

    def __post_init__(self):
        V = np.array(self.vertices, dtype=float)
        T = np.array(self.elements, dtype=np.int64)
        if V.ndim != 2 or V.shape[1] not in (2, 3):
            raise MeshError(f"vertices must be (n, 2) or (n, 3), got {V.shape}")
        dim = V.shape[1]
        if T.ndim != 2 or T.shape[1] != dim + 1 or len(T) == 0:
            raise MeshError(f"need at least one {dim + 1}-vertex element, got shape {T.shape}")
        n = len(V)
        if n < dim + 1:
            raise MeshError(f"need at least {dim + 1} vertices, got {n}")
        bad = np.flatnonzero((T < 0).any(axis=1) | (T >= n).any(axis=1))
        if len(bad):
            raise MeshError(f"element {bad[0]} references a vertex outside [0, {n})")

        vol = _signed_measures(V, T)
        neg = vol < 0
        if neg.any():
            T[neg, -2], T[neg, -1] = T[neg, -1].copy(), T[neg, -2].copy()
            vol = np.abs(vol)
        bbox = float(np.max(V.max(axis=0) - V.min(axis=0)))
        degenerate = np.flatnonzero(vol < 1e-12 * bbox**dim)
        if len(degenerate):
            raise MeshError(f"degenerate element {degenerate[0]} (measure {vol[degenerate[0]]:.3g})")

        V.setflags(write=False)
        T.setflags(write=False)
        vol.setflags(write=False)
        object.__setattr__(self, "vertices", V)
        object.__setattr__(self, "elements", T)
        object.__setattr__(self, "_measures", vol)

    @property
    def dim(self):
        return self.vertices.shape[1]

    @property
    def n(self):
        return self.vertices.shape[0]

    @property
    def measures(self):
        """Element areas (2D) or volumes (3D); all positive."""
        return self._measures

    @property
    def total_measure(self):
        return float(self._measures.sum())

    @property
    def bbox_diagonal(self):
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))

    def rest_vector(self):
        """Rest positions as a coordinate-major ``dn`` vector."""
        return flatten(self.vertices)

    def edges(self):
        """Unique undirected edges as a sorted ``(k, 2)`` index array."""
        T = self.elements
        k = T.shape[1]
        pairs = np.concatenate([T[:, [a, b]] for a in range(k) for b in range(a + 1, k)])
        pairs.sort(axis=1)
        return np.unique(pairs, axis=0)


def shape_gradients(mesh):
    """Gradients of the linear hat functions on each element at rest.

    Returns an ``(m, dim+1, dim)`` array ``G`` with ``G[e, i]`` the gradient
    of vertex ``i``'s barycentric coordinate inside element ``e``.
    """
    V, T = mesh.vertices, mesh.elements
    Dm = (V[T[:, 1:]] - V[T[:, :1]]).transpose(0, 2, 1)  # columns are edges
    Dm_inv = np.linalg.inv(Dm)  # (m, dim, dim); rows are grads of phi_1..phi_d
    G = np.empty((len(T), mesh.dim + 1, mesh.dim))
    G[:, 1:] = Dm_inv
    G[:, 0] = -Dm_inv.sum(axis=1)
    return G


@dataclass(frozen=True)
class LumpedMassMatrix:
    """Diagonal mass matrix; ``diag`` has length ``dim * n`` (coordinate-major)."""

    diag: np.ndarray
    density: float
    dim: int

    @property
    def vertex_masses(self):
        return self.diag[: len(self.diag) // self.dim]

    @property
    def matrix(self):
        return sparse.diags(self.diag).tocsr()

    @property
    def norm_inf(self):
        return float(self.diag.max())

    def __matmul__(self, x):
        x = np.asarray(x)
        if x.ndim == 1:
            return self.diag * x
        return self.diag[:, None] * x


def lumped_mass(mesh, density=1.0):
    """Barycentric lumped mass: each element gives ``rho*measure/(dim+1)`` to each corner."""
    if not density > 0:
        raise ValueError(f"density must be positive, got {density}")
    share = density * mesh.measures / (mesh.dim + 1)
    m = np.bincount(mesh.elements.ravel(), weights=np.repeat(share, mesh.dim + 1), minlength=mesh.n)
    return LumpedMassMatrix(np.tile(m, mesh.dim), float(density), mesh.dim)


def cotan_laplacian(mesh):
    """Symmetric negative semidefinite cotangent Laplacian (n x n, CSR).

    Assembled as ``L_ij = -sum_e |e| grad(phi_i) . grad(phi_j)``, which equals
    the half-cotangent weights in 2D and the dihedral cotangent weights in 3D.
    """
    G = shape_gradients(mesh)
    local = -np.einsum("e,eid,ejd->eij", mesh.measures, G, G)
    T = mesh.elements
    k = T.shape[1]
    rows = np.repeat(T, k, axis=1).ravel()
    cols = np.tile(T, (1, k)).ravel()
    L = sparse.coo_matrix((local.ravel(), (rows, cols)), shape=(mesh.n, mesh.n)).tocsr()
    # exact symmetry regardless of summation order
    return ((L + L.T) * 0.5).tocsr()


def boundary_facets(mesh):
    """Facets (edges in 2D, triangles in 3D) that belong to exactly one element."""
    T = mesh.elements
    k = T.shape[1]
    faces = np.concatenate([np.delete(T, i, axis=1) for i in range(k)])
    # keep orientation of the original facet but count on sorted keys
    keys = np.sort(faces, axis=1)
    _, inv, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    return faces[counts[inv.ravel()] == 1]


def boundary_vertices(mesh):
    """Sorted indices of vertices lying on the boundary."""
    return np.unique(boundary_facets(mesh))


# ---------------------------------------------------------------------------
# file formats


def read_obj(path):
    """Read vertex and triangle records from an ASCII OBJ file.

    Returns ``(V, F)`` with ``V`` of shape ``(n, 3)`` and 0-based ``F``.
    Texture/normal indices (``f 1/2/3 ...``) are ignored.
    """
    path = Path(path)
    verts, faces = [], []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            tok = line.split()
            if not tok or tok[0].startswith("#"):
                continue
            try:
                if tok[0] == "v":
                    xyz = [float(t) for t in tok[1:4]]
                    if len(xyz) == 2:
                        xyz.append(0.0)
                    if len(xyz) != 3:
                        raise ValueError
                    verts.append(xyz)
                elif tok[0] == "f":
                    idx = [int(t.split("/")[0]) for t in tok[1:]]
                    if len(idx) != 3:
                        raise MeshError(f"{path}: non-triangle face at line {lineno}")
                    faces.append([i - 1 if i > 0 else len(verts) + i for i in idx])
            except MeshError:
                raise
            except ValueError:
                raise MeshError(f"{path}: cannot parse line {lineno}: {line.strip()!r}") from None
    V = np.array(verts, dtype=float).reshape(-1, 3)
    F = np.array(faces, dtype=np.int64).reshape(-1, 3)
    return V, F


def load_tri_obj(path):
    """Load a planar triangle mesh; all ``z`` coordinates must be zero."""
    V, F = read_obj(path)
    if len(F) == 0:
        raise MeshError(f"{path}: no faces")
    if np.any(V[:, 2] != 0):
        raise MeshError(f"{path}: triangle mesh has nonzero z; volumetric meshes use load_tet_mesh")
    return Mesh(V[:, :2], F)


def write_obj(path, vertices, faces=None):
    """Write an ASCII OBJ with 17 significant digits (2D vertices get z = 0)."""
    V = np.asarray(vertices, dtype=float)
    if V.shape[1] == 2:
        V = np.column_stack([V, np.zeros(len(V))])
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in V]
    if faces is not None:
        F = np.asarray(faces)
        if F.shape[1] == 3:
            lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in F]
    Path(path).write_text("\n".join(lines) + "\n")


def _data_lines(path):
    with Path(path).open() as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                yield line.split()


def load_tet_mesh(node_path, ele_path):
    """Load a TetGen ``.node`` / ``.ele`` pair into a 3D :class:`Mesh`.

    The first index in each file (0 or 1) sets its base.  Inverted tets are
    reoriented by the :class:`Mesh` constructor.
    """
    rows = list(_data_lines(node_path))
    try:
        n, ndim = int(rows[0][0]), int(rows[0][1])
        if ndim != 3:
            raise MeshError(f"{node_path}: expected dimension 3, got {ndim}")
        body = rows[1:]
        if len(body) != n:
            raise MeshError(f"{node_path}: header says {n} nodes, found {len(body)}")
        base = int(body[0][0])
        V = np.array([[float(x) for x in r[1:4]] for r in body])
        ids = np.array([int(r[0]) for r in body])
    except (IndexError, ValueError) as exc:
        raise MeshError(f"{node_path}: malformed node file ({exc})") from None
    if base not in (0, 1) or not np.array_equal(ids, np.arange(base, base + n)):
        raise MeshError(f"{node_path}: node ids must run consecutively from 0 or 1")

    rows = list(_data_lines(ele_path))
    try:
        m, per = int(rows[0][0]), int(rows[0][1])
        if per != 4:
            raise MeshError(f"{ele_path}: only 4-node tets are supported, got {per}")
        body = rows[1:]
        if len(body) != m:
            raise MeshError(f"{ele_path}: header says {m} elements, found {len(body)}")
        T = np.array([[int(x) for x in r[1:5]] for r in body], dtype=np.int64) - base
    except (IndexError, ValueError) as exc:
        raise MeshError(f"{ele_path}: malformed element file ({exc})") from None
    bad = np.flatnonzero((T < 0).any(axis=1) | (T >= n).any(axis=1))
    if len(bad):
        raise MeshError(f"{ele_path}: element {bad[0]} references a vertex index out of range")
    return Mesh(V, T)


def write_tet_mesh(node_path, ele_path, mesh):
    """Write a 3D mesh as 0-based TetGen files."""
    V, T = mesh.vertices, mesh.elements
    node = [f"{len(V)} 3 0 0"] + [f"{i} {x:.17g} {y:.17g} {z:.17g}" for i, (x, y, z) in enumerate(V)]
    ele = [f"{len(T)} 4 0"] + [f"{i} {a} {b} {c} {d}" for i, (a, b, c, d) in enumerate(T)]
    Path(node_path).write_text("\n".join(node) + "\n")
    Path(ele_path).write_text("\n".join(ele) + "\n")


def read_dmat(path):
    """Read an ASCII DMAT: header ``ncols nrows``, then column-major values."""
    tokens = Path(path).read_text().split()
    try:
        ncols, nrows = int(tokens[0]), int(tokens[1])
        vals = np.array([float(t) for t in tokens[2:]])
    except (IndexError, ValueError) as exc:
        raise MeshError(f"{path}: malformed DMAT ({exc})") from None
    if len(vals) != ncols * nrows:
        raise MeshError(f"{path}: expected {ncols * nrows} values, found {len(vals)}")
    return vals.reshape(ncols, nrows).T


def write_dmat(path, A):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    nrows, ncols = A.shape
    body = "\n".join(f"{x:.17g}" for x in A.T.ravel())
    Path(path).write_text(f"{ncols} {nrows}\n{body}\n")
