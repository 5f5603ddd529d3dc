"""Structured meshes for demos, scenarios and tests.

Only regular grids are provided; general meshing belongs to dedicated tools.
"""

import numpy as np

from .meshcore import Mesh


def grid_vertices(nx, ny, width=1.0, height=1.0, origin=(0.0, 0.0)):
    xs = np.linspace(0.0, width, nx) + origin[0]
    ys = np.linspace(0.0, height, ny) + origin[1]
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    return np.column_stack([X.ravel(), Y.ravel()])


def grid_triangles(nx, ny):
    """Two triangles per cell of an ``nx x ny`` vertex grid (row-major vertices)."""
    i, j = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1), indexing="xy")
    a = (j * nx + i).ravel()
    b, c, d = a + 1, a + nx, a + nx + 1
    return np.vstack([np.column_stack([a, b, d]), np.column_stack([a, d, c])])


def rectangle(nx, ny, width=1.0, height=1.0, origin=(0.0, 0.0)):
    """Triangulated rectangle with ``nx * ny`` vertices."""
    return Mesh(grid_vertices(nx, ny, width, height, origin), grid_triangles(nx, ny))


def disc(k, radius=1.0):
    """Disc of ``k * k`` vertices: a square grid pushed through the elliptical
    square-to-disc map ``(x sqrt(1 - y^2/2), y sqrt(1 - x^2/2))``."""
    V = grid_vertices(k, k, 2.0, 2.0, (-1.0, -1.0))
    x, y = V[:, 0], V[:, 1]
    D = np.column_stack([x * np.sqrt(1 - y**2 / 2), y * np.sqrt(1 - x**2 / 2)])
    return Mesh(radius * D, grid_triangles(k, k))


# Kuhn subdivision of the unit cube into six tetrahedra sharing the main diagonal
_KUHN = np.array([[0, 1, 3, 7], [0, 3, 2, 7], [0, 2, 6, 7],
                  [0, 6, 4, 7], [0, 4, 5, 7], [0, 5, 1, 7]])


def box(nx, ny, nz, size=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)):
    """Tetrahedralized box with ``nx * ny * nz`` vertices (six tets per cell)."""
    xs = np.linspace(0, size[0], nx) + origin[0]
    ys = np.linspace(0, size[1], ny) + origin[1]
    zs = np.linspace(0, size[2], nz) + origin[2]
    Z, Y, X = np.meshgrid(zs, ys, xs, indexing="ij")
    V = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def vid(i, j, k):
        return (k * ny + j) * nx + i

    k, j, i = np.meshgrid(np.arange(nz - 1), np.arange(ny - 1), np.arange(nx - 1), indexing="ij")
    i, j, k = i.ravel(), j.ravel(), k.ravel()
    corners = np.column_stack([vid(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1)) for c in range(8)])
    T = corners[:, _KUHN].reshape(-1, 4)
    return Mesh(V, T)
