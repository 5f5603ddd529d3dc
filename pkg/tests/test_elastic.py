import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import sparse

from compdyn import shapes
from compdyn.diagnostics import check_gradients, random_states
from compdyn.elastic import (SpringSet, arap_model, lame_parameters, linear_model, local_step,
                             mass_spring_model, neohookean_model, polar_rotations)
from compdyn.meshcore import Mesh, flatten


def rigid(mesh, theta=0.7, t=None):
    V = mesh.vertices
    if mesh.dim == 2:
        c, s = np.cos(theta), np.sin(theta)
        R = np.array([[c, -s], [s, c]])
    else:
        # rotation about an oblique axis (Rodrigues)
        k = np.array([1.0, 2.0, 2.0]) / 3.0
        K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
        R = np.eye(3) + np.sin(theta) * K + (1 - np.cos(theta)) * K @ K
    t = np.zeros(mesh.dim) if t is None else t
    return flatten(V @ R.T + t - V), R


MODELS = {
    "linear": lambda m: linear_model(m, 1e3, 0.3),
    "neohookean": lambda m: neohookean_model(m, 1e3, 0.3),
    "arap": lambda m: arap_model(m, 10.0),
    "mass_spring": lambda m: mass_spring_model(m, 5.0),
}


def test_lame_parameters():
    lam, mu = lame_parameters(1.0, 0.25)
    assert lam == pytest.approx(0.4) and mu == pytest.approx(0.4)
    with pytest.raises(ValueError):
        lame_parameters(1.0, 0.5)
    with pytest.raises(ValueError):
        lame_parameters(-1.0, 0.3)


@pytest.mark.parametrize("kind", MODELS)
@pytest.mark.parametrize("meshname", ["square", "cube"])
def test_rest_state(kind, meshname, request):
    mesh = request.getfixturevalue(meshname)
    model = MODELS[kind](mesh)
    u0 = np.zeros(mesh.dim * mesh.n)
    assert model.energy(u0) == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(model.gradient(u0), 0.0, atol=1e-10)


@pytest.mark.parametrize("kind", ["neohookean", "arap", "mass_spring"])
@pytest.mark.parametrize("meshname", ["square", "cube"])
def test_rigid_motion_has_zero_energy(kind, meshname, request):
    mesh = request.getfixturevalue(meshname)
    model = MODELS[kind](mesh)
    u, _ = rigid(mesh, t=np.full(mesh.dim, 0.3))
    scale = MODELS[kind](mesh).energy(0.05 * np.random.default_rng(0).standard_normal(len(u)))
    assert abs(model.energy(u)) <= 1e-10 * max(1.0, scale)


def test_linear_kernel_contains_translations_and_infinitesimal_rotations(square, cube):
    for mesh in (square, cube):
        K = linear_model(mesh, 2.0, 0.3).K
        norm = abs(K).sum(axis=1).max()
        V = mesh.vertices
        for a in range(mesh.dim):
            t = np.zeros(mesh.dim)
            t[a] = 1.0
            assert np.abs(K @ flatten(np.tile(t, (mesh.n, 1)))).max() <= 1e-10 * norm
        W = np.zeros((mesh.dim, mesh.dim))
        W[0, 1], W[1, 0] = -1.0, 1.0
        assert np.abs(K @ flatten(V @ W.T)).max() <= 1e-10 * norm
        D = (K - K.T)
        assert abs(D).max() <= 1e-10 * norm
        evals = np.linalg.eigvalsh(K.toarray())
        assert evals.min() >= -1e-10 * norm


def test_linear_unit_triangle_gradient(tri):
    model = linear_model(tri, 1.0, 0.0)
    rep = check_gradients(model, random_states(tri, 3, rng=1), rng=1)
    assert rep.gradient_error < 1e-6


def test_arap_uniform_scale_closed_form(tri):
    model = arap_model(tri, 3.0)
    u = flatten(tri.vertices)  # x = 2X
    assert model.energy(u) == pytest.approx(3.0 * 0.5 * 2, rel=1e-12)


def test_single_spring_energy():
    mesh = Mesh(np.array([[0.0, 0], [1, 0], [0, 1]]), np.array([[0, 1, 2]]))
    springs = SpringSet(np.array([0]), np.array([1]), np.array([1.0]), np.array([1.0]))
    model = mass_spring_model(mesh, springs=springs)
    u = flatten(np.array([[0.0, 0], [1, 0], [0, 0]]))
    assert model.energy(u) == pytest.approx(0.5)


def test_local_step_examples(tri):
    springs = SpringSet(np.array([0]), np.array([1]), np.array([1.0]), np.array([1.0]))
    model = mass_spring_model(tri, springs=springs)
    e0 = model.spring_vectors(np.zeros(6))
    np.testing.assert_allclose(local_step(model, np.zeros(6)), e0)
    u = flatten(np.array([[0.0, 0], [1, 0], [0, 0]]))
    np.testing.assert_allclose(local_step(model, u), 0.5 * model.spring_vectors(u))
    # coincident endpoints keep the previous target
    u = flatten(np.array([[0.0, 0], [-1, 0], [0, 0]]))
    np.testing.assert_allclose(local_step(model, u, previous=np.array([[0.0, 1.0]])), [[0.0, 1.0]])

    arap = arap_model(tri, 1.0)
    u, R = rigid(tri, 1.1)
    np.testing.assert_allclose(local_step(arap, u)[0], R, atol=1e-12)
    with pytest.raises(TypeError):
        local_step(linear_model(tri, 1.0, 0.3), np.zeros(6))


def test_polar_rotation_is_proper(rng):
    F = rng.standard_normal((50, 3, 3))
    R = polar_rotations(F)[0]
    np.testing.assert_allclose(np.einsum("eji,ejk->eik", R, R), np.broadcast_to(np.eye(3), R.shape), atol=1e-12)
    np.testing.assert_allclose(np.linalg.det(R), 1.0, atol=1e-12)


def test_neohookean_inversion_is_infinite(tri):
    model = neohookean_model(tri, 1.0, 0.3)
    u = flatten(np.array([[0.0, 0], [0, 0], [0, -2.0]]))  # flips the triangle
    assert model.energy(u) == np.inf


@pytest.mark.parametrize("kind", MODELS)
@pytest.mark.parametrize("meshname", ["square", "cube"])
def test_finite_difference_audit(kind, meshname, request):
    mesh = request.getfixturevalue(meshname)
    model = MODELS[kind](mesh)
    rep = check_gradients(model, random_states(mesh, 10, rng=3), rng=3)
    assert rep.gradient_error < 1e-5
    assert rep.hessian_error < 1e-4


@pytest.mark.parametrize("kind", MODELS)
def test_hessian_symmetry(kind, cube, rng):
    model = MODELS[kind](cube)
    u = random_states(cube, 1, rng=rng)[0]
    H = model.hessian(u)
    assert abs(H - H.T).max() <= 1e-8 * abs(H).sum(axis=1).max()


@settings(max_examples=20, deadline=None)
@given(kind=st.sampled_from(sorted(MODELS)), seed=st.integers(0, 2**32 - 1))
def test_energy_is_path_integral_of_gradient(kind, seed):
    mesh = shapes.rectangle(4, 3)
    model = MODELS[kind](mesh)
    u = random_states(mesh, 1, scale=5e-2, rng=seed)[0]
    x, w = np.polynomial.legendre.leggauss(20)
    s = 0.5 * (x + 1)
    integral = 0.5 * sum(wi * model.gradient(si * u) @ u for si, wi in zip(s, w))
    E = model.energy(u) - model.energy(0 * u)
    assert abs(E - integral) <= 1e-4 * max(abs(E), 1e-12)


@settings(max_examples=20, deadline=None)
@given(kind=st.sampled_from(["arap", "mass_spring"]), seed=st.integers(0, 2**32 - 1))
def test_unconstrained_local_global_is_monotone(kind, seed):
    rng = np.random.default_rng(seed)
    mesh = shapes.rectangle(4, 4)
    model = MODELS[kind](mesh)
    m = np.ones(2 * mesh.n)
    y = 0.3 * rng.standard_normal(2 * mesh.n)
    A = (model.global_matrix() + sparse.diags(m)).tocsc()
    u = np.zeros_like(y)
    prev = np.inf
    aux = None
    for _ in range(15):
        aux = model.local_step(u, aux)
        u = sparse.linalg.spsolve(A, model.global_matrix() @ u - model.aux_gradient(u, aux) + m * y)
        val = model.aux_energy(u, aux) + 0.5 * (u - y) @ (m * (u - y))
        assert val <= prev + 1e-12
        # the potential never exceeds the auxiliary objective it minimizes
        assert model.energy(u) <= model.aux_energy(u, aux) + 1e-12
        prev = val
