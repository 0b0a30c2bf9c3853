import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emupscale.mesh import build_uniform_mesh
from emupscale.mfv import (
    assemble_system,
    curl_incidence,
    curl_matrix,
    edge_mass,
    edge_mass_basis,
    face_mass,
    gradient_incidence,
    nodal_gradient,
)
from emupscale.models import CellConductivityModel, matrix_to_params

sizes = st.tuples(*[st.integers(1, 5)] * 3)
widths = st.tuples(*[st.floats(0.1, 10.0)] * 3)


def random_spd(rng, n=1, scale=1.0):
    a = rng.standard_normal((n, 3, 3))
    return scale * (a @ np.swapaxes(a, 1, 2) + 0.5 * np.eye(3))


def constant_edge_field(mesh, E):
    return np.concatenate([np.full(n, E[a]) for a, n in enumerate(mesh.n_edges_per_axis)])


def constant_face_field(mesh, B):
    return np.concatenate([np.full(n, B[a]) for a, n in enumerate(mesh.n_faces_per_axis)])


@given(sizes, widths, st.integers(0, 2**31 - 1))
@settings(max_examples=30, deadline=None)
def test_curl_grad_is_zero(n, h, seed):
    mesh = build_uniform_mesh(n, h)
    T = curl_incidence(mesh) @ gradient_incidence(mesh)
    assert T.count_nonzero() == 0
    phi = np.random.default_rng(seed).standard_normal(mesh.n_nodes)
    g = nodal_gradient(mesh) @ phi
    c = curl_matrix(mesh) @ g
    assert np.max(np.abs(c)) <= 1e-12 * max(1.0, np.max(np.abs(g)))


def test_curl_shapes():
    assert curl_matrix(build_uniform_mesh((1, 1, 1), (1, 1, 1))).shape == (6, 12)
    assert curl_matrix(build_uniform_mesh((2, 2, 2), (1, 1, 1))).shape == (36, 54)


@given(sizes, widths)
@settings(max_examples=20, deadline=None)
def test_uniform_field_has_no_curl(n, h):
    mesh = build_uniform_mesh(n, h)
    e = constant_edge_field(mesh, (1.0, -2.0, 0.5))
    assert np.max(np.abs(curl_matrix(mesh) @ e)) < 1e-12


def test_curl_of_linear_field():
    # E = (0, x, 0) has curl (0, 0, 1)
    mesh = build_uniform_mesh((3, 2, 2), (0.5, 1.0, 2.0))
    e = np.zeros(mesh.n_edges)
    y = mesh.edge_axis == 1
    e[y] = mesh.edge_midpoints[y, 0]
    b = curl_matrix(mesh) @ e
    off = mesh.face_offset(2)
    np.testing.assert_allclose(b[off:], 1.0, rtol=1e-13)
    np.testing.assert_allclose(b[:off], 0.0, atol=1e-13)


def test_edge_mass_examples():
    cube = build_uniform_mesh((1, 1, 1), (1, 1, 1))
    e = constant_edge_field(cube, (1.0, 0.0, 0.0))
    assert e @ edge_mass(cube, [1.0]) @ e == pytest.approx(1.0, rel=1e-14)
    t = CellConductivityModel(matrix_to_params(np.diag([2.0, 3.0, 4.0]))[None, :])
    e = constant_edge_field(cube, (1.0, 1.0, 1.0))
    assert e @ edge_mass(cube, t) @ e == pytest.approx(9.0, rel=1e-14)


@given(sizes, widths, st.integers(0, 2**31 - 1))
@settings(max_examples=30, deadline=None)
def test_edge_mass_patch_test(n, h, seed):
    rng = np.random.default_rng(seed)
    mesh = build_uniform_mesh(n, h)
    S = random_spd(rng)[0]
    model = CellConductivityModel(np.tile(matrix_to_params(S), (mesh.n_cells, 1)))
    E = rng.standard_normal(3)
    e = constant_edge_field(mesh, E)
    energy = e @ edge_mass(mesh, model) @ e
    exact = mesh.cell_volumes.sum() * E @ S @ E
    assert energy == pytest.approx(exact, rel=1e-12)


@given(sizes, st.integers(0, 2**31 - 1))
@settings(max_examples=20, deadline=None)
def test_edge_mass_symmetric_positive(n, seed):
    rng = np.random.default_rng(seed)
    mesh = build_uniform_mesh(n, (1.0, 2.0, 0.5))
    model = CellConductivityModel.from_tensors(random_spd(rng, mesh.n_cells))
    M = edge_mass(mesh, model)
    assert abs(M - M.T).max() <= 1e-14 * abs(M).max()
    for _ in range(3):
        x = rng.standard_normal(mesh.n_edges)
        assert x @ M @ x > 0


def test_edge_mass_rejects_non_spd():
    mesh = build_uniform_mesh((1, 1, 1), (1, 1, 1))
    with pytest.raises(ValueError):
        edge_mass(mesh, [-1.0])
    with pytest.raises(ValueError):
        edge_mass(mesh, CellConductivityModel([[1.0, 1.0, 1.0, 2.0, 0.0, 0.0]], check=False))
    with pytest.raises(ValueError):
        edge_mass(mesh, [1.0, 2.0])


def test_edge_mass_basis_is_derivative():
    rng = np.random.default_rng(3)
    mesh = build_uniform_mesh((2, 3, 2), (1.0, 0.5, 2.0))
    p = matrix_to_params(random_spd(rng)[0])
    M = edge_mass(mesh, CellConductivityModel(np.tile(p, (mesh.n_cells, 1))))
    combo = sum(pj * Mj for pj, Mj in zip(p, edge_mass_basis(mesh)))
    assert abs(M - combo).max() <= 1e-14 * abs(M).max()


def test_face_mass_examples():
    cube = build_uniform_mesh((1, 1, 1), (1, 1, 1))
    b = constant_face_field(cube, (0.0, 0.0, 1.0))
    assert b @ face_mass(cube, 1.0) @ b == pytest.approx(1.0, rel=1e-14)
    assert b @ face_mass(cube, 2.0) @ b == pytest.approx(0.5, rel=1e-14)
    mesh = build_uniform_mesh((2, 2, 2), (1, 1, 1))
    B = np.array([0.3, -1.2, 2.0])
    b = constant_face_field(mesh, B)
    assert b @ face_mass(mesh, 1.5) @ b == pytest.approx(8.0 * B @ B / 1.5, rel=1e-14)
    with pytest.raises(ValueError):
        face_mass(cube, 0.0)


@given(sizes, widths, st.integers(0, 2**31 - 1))
@settings(max_examples=20, deadline=None)
def test_face_mass_patch_test(n, h, seed):
    mesh = build_uniform_mesh(n, h)
    B = np.random.default_rng(seed).standard_normal(3)
    b = constant_face_field(mesh, B)
    energy = b @ face_mass(mesh, 2.0) @ b
    assert energy == pytest.approx(mesh.cell_volumes.sum() * B @ B / 2.0, rel=1e-12)


def test_system_single_cell():
    mesh = build_uniform_mesh((1, 1, 1), (1, 1, 1))
    s = assemble_system(mesh, [1.0], mu=1.0, omega=1.0)
    A = s.A.toarray()
    assert A.shape == (12, 12)
    assert np.array_equal(A, A.T)
    assert not np.allclose(A, A.conj().T)


def test_system_frequency_scaling():
    rng = np.random.default_rng(0)
    mesh = build_uniform_mesh((2, 2, 2), (1, 1, 1))
    model = rng.uniform(0.01, 1.0, mesh.n_cells)
    a1 = assemble_system(mesh, model, omega=1.0).A
    a2 = assemble_system(mesh, model, omega=2.0).A
    assert abs(a2.imag - 2 * a1.imag).max() <= 1e-15 * abs(a1.imag).max()
    assert abs(a2.real - a1.real).max() == 0


def test_interior_block_nonsingular():
    rng = np.random.default_rng(1)
    mesh = build_uniform_mesh((2, 2, 2), (1, 1, 1))
    model = CellConductivityModel.from_tensors(random_spd(rng, 8))
    s = assemble_system(mesh, model, omega=2 * np.pi)
    A_ii, A_ib, ii, bb = s.blocks()
    assert ii.size + bb.size == mesh.n_edges
    assert ii.size == 6  # the six interior edges through the centre node
    sv = np.linalg.svd(A_ii.toarray(), compute_uv=False)
    assert sv.min() > 1e-8 * sv.max()
    assert abs(s.A - s.A.T).max() == 0


def test_system_rejects_bad_frequency():
    mesh = build_uniform_mesh((1, 1, 1), (1, 1, 1))
    for w in (None, 0.0, -1.0):
        with pytest.raises(ValueError):
            assemble_system(mesh, [1.0], omega=w)
