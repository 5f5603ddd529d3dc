import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from compdyn import shapes
from compdyn.meshcore import (Mesh, MeshError, boundary_vertices, cotan_laplacian, flatten,
                              load_tet_mesh, load_tri_obj, lumped_mass, read_dmat, read_obj,
                              unflatten, write_dmat, write_obj, write_tet_mesh)


def test_flatten_is_coordinate_major():
    U = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    np.testing.assert_array_equal(flatten(U), [1, 3, 5, 2, 4, 6])
    np.testing.assert_array_equal(unflatten(flatten(U), 2), U)


def test_load_single_triangle(tmp_path):
    p = tmp_path / "t.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    mesh = load_tri_obj(p)
    assert mesh.dim == 2 and mesh.n == 3 and len(mesh.elements) == 1
    assert mesh.total_measure == pytest.approx(0.5)


def test_quad_face_rejected_with_line_number(tmp_path):
    p = tmp_path / "q.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n# quad\nf 1 2 3 4\n")
    with pytest.raises(MeshError, match="non-triangle face at line 6"):
        load_tri_obj(p)


def test_square_two_triangles_area(tmp_path):
    p = tmp_path / "s.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3\nf 1 3 4\n")
    assert load_tri_obj(p).total_measure == pytest.approx(1.0, rel=1e-15)


def test_clockwise_triangle_is_reoriented():
    mesh = Mesh(np.array([[0.0, 0], [0, 1], [1, 0]]), np.array([[0, 1, 2]]))
    assert mesh.measures[0] == pytest.approx(0.5)


def test_degenerate_element_rejected():
    with pytest.raises(MeshError, match="element 0"):
        Mesh(np.array([[0.0, 0], [1, 0], [2, 0]]), np.array([[0, 1, 2]]))


def test_out_of_range_index_rejected():
    with pytest.raises(MeshError):
        Mesh(np.array([[0.0, 0], [1, 0], [0, 1]]), np.array([[0, 1, 3]]))


def _write_tet(tmp_path, rows, base=1, header=None):
    V = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]
    node = tmp_path / "m.node"
    node.write_text("# comment\n4 3 0 0\n" + "".join(f"{i + base} {x} {y} {z}\n" for i, (x, y, z) in enumerate(V)))
    ele = tmp_path / "m.ele"
    ele.write_text((header or f"{len(rows)} 4 0") + "\n" +
                   "".join(f"{k + base} " + " ".join(str(v + base) for v in r) + "\n" for k, r in enumerate(rows)))
    return node, ele


@pytest.mark.parametrize("base", [0, 1])
def test_unit_tet_volume(tmp_path, base):
    mesh = load_tet_mesh(*_write_tet(tmp_path, [[0, 1, 2, 3]], base))
    assert mesh.dim == 3
    assert mesh.total_measure == pytest.approx(1 / 6, rel=1e-15)


def test_inverted_tet_is_reordered(tmp_path):
    mesh = load_tet_mesh(*_write_tet(tmp_path, [[0, 2, 1, 3]]))
    assert mesh.measures[0] == pytest.approx(1 / 6)


def test_ele_referencing_vertex_n_fails(tmp_path):
    with pytest.raises(MeshError):
        load_tet_mesh(*_write_tet(tmp_path, [[1, 2, 3, 4]], base=0))


def test_lumped_mass_triangle(tri):
    np.testing.assert_allclose(lumped_mass(tri, 1.0).diag, np.full(6, 1 / 6), rtol=1e-15)


def test_lumped_mass_tet(tet):
    np.testing.assert_allclose(lumped_mass(tet, 1.0).vertex_masses, np.full(4, 1 / 24), rtol=1e-15)


def test_lumped_mass_two_triangles():
    mesh = Mesh(np.array([[0.0, 0], [1, 0], [0, 1], [1, 1]]), np.array([[0, 1, 2], [1, 3, 2]]))
    np.testing.assert_allclose(lumped_mass(mesh).vertex_masses, [1 / 6, 1 / 3, 1 / 3, 1 / 6], rtol=1e-14)


def test_lumped_mass_rejects_bad_density(tri):
    with pytest.raises(ValueError):
        lumped_mass(tri, 0.0)


def test_cotan_weights_of_right_triangle(tri):
    L = cotan_laplacian(tri).toarray()
    # 1/2 cot(opposite angle): both acute angles are 45 degrees, the right angle gives 0
    assert L[0, 1] == pytest.approx(0.5)
    assert L[0, 2] == pytest.approx(0.5)
    assert L[1, 2] == pytest.approx(0.0, abs=1e-15)
    assert np.abs(L - L.T).max() == 0.0


def test_boundary_of_single_simplices(tri, tet):
    np.testing.assert_array_equal(boundary_vertices(tri), [0, 1, 2])
    np.testing.assert_array_equal(boundary_vertices(tet), [0, 1, 2, 3])


def test_cube_grid_boundary_excludes_centre(cube):
    B = boundary_vertices(cube)
    assert len(B) == 26
    centre = np.flatnonzero(np.all(np.isclose(cube.vertices, 0.5), axis=1))
    assert centre.tolist() == [13] and 13 not in B


def test_obj_round_trip_17_digits(tmp_path, rng):
    V = rng.standard_normal((7, 3)) * 1e3
    write_obj(tmp_path / "a.obj", V, np.array([[0, 1, 2]]))
    W, F = read_obj(tmp_path / "a.obj")
    np.testing.assert_array_equal(V, W)
    np.testing.assert_array_equal(F, [[0, 1, 2]])


def test_dmat_round_trip(tmp_path, rng):
    A = rng.random((5, 3))
    write_dmat(tmp_path / "w.dmat", A)
    assert (tmp_path / "w.dmat").read_text().splitlines()[0] == "3 5"
    np.testing.assert_array_equal(read_dmat(tmp_path / "w.dmat"), A)


def test_tet_mesh_round_trip(tmp_path, cube):
    write_tet_mesh(tmp_path / "c.node", tmp_path / "c.ele", cube)
    back = load_tet_mesh(tmp_path / "c.node", tmp_path / "c.ele")
    np.testing.assert_array_equal(back.vertices, cube.vertices)
    np.testing.assert_array_equal(back.elements, cube.elements)


def _subdivide(mesh):
    """1 -> 4 midpoint refinement of a triangle mesh."""
    V = list(map(tuple, mesh.vertices))
    index = {}

    def mid(a, b):
        key = (min(a, b), max(a, b))
        if key not in index:
            index[key] = len(V)
            V.append(tuple((mesh.vertices[a] + mesh.vertices[b]) / 2))
        return index[key]

    T = []
    for a, b, c in mesh.elements:
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        T += [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
    return Mesh(np.array(V), np.array(T))


@settings(max_examples=25, deadline=None)
@given(nx=st.integers(2, 6), ny=st.integers(2, 6), rho=st.floats(0.1, 1e3),
       w=st.floats(0.1, 10), h=st.floats(0.1, 10))
def test_mass_conservation_and_laplacian_kernel(nx, ny, rho, w, h):
    mesh = shapes.rectangle(nx, ny, w, h)
    M = lumped_mass(mesh, rho)
    assert M.diag.sum() == pytest.approx(2 * rho * mesh.total_measure, rel=1e-12)
    assert np.all(M.diag > 0)
    L = cotan_laplacian(mesh)
    norm = abs(L).sum(axis=1).max()
    assert np.abs(L @ np.ones(mesh.n)).max() <= 1e-10 * norm
    fine = _subdivide(mesh)
    assert lumped_mass(fine, rho).diag.sum() == pytest.approx(M.diag.sum(), rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(n=st.integers(2, 4), seed=st.integers(0, 2**16))
def test_box_orientation_and_laplacian(n, seed):
    rng = np.random.default_rng(seed)
    mesh = shapes.box(n, n, n, size=tuple(rng.uniform(0.5, 2, 3)))
    assert np.all(mesh.measures > 0)
    assert lumped_mass(mesh, 2.0).diag.sum() == pytest.approx(3 * 2.0 * mesh.total_measure, rel=1e-12)
    L = cotan_laplacian(mesh)
    assert np.abs(L @ np.ones(mesh.n)).max() <= 1e-10 * abs(L).sum(axis=1).max()
