import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emupscale.mesh import (
    CoarseningSpec,
    aggregation_maps,
    box_edge_slots,
    box_face_slots,
    build_uniform_mesh,
    coarsen,
    extended_domain,
    mesh_from_json,
    mesh_to_json,
)
from emupscale.mfv import curl_incidence

sizes = st.tuples(*[st.integers(1, 8)] * 3)


def test_unit_cube_counts():
    m = build_uniform_mesh((1, 1, 1), (1, 1, 1))
    assert (m.n_cells, m.n_faces, m.n_edges, m.n_nodes) == (1, 6, 12, 8)


def test_two_cubed_counts():
    m = build_uniform_mesh((2, 2, 2), (1, 1, 1))
    assert (m.n_cells, m.n_faces, m.n_edges) == (8, 36, 54)


def test_desk_scale_mesh():
    m = build_uniform_mesh((32, 32, 32), (50, 50, 50))
    assert m.n_cells == 32768
    np.testing.assert_allclose(m.extent, 1600.0)


@pytest.mark.parametrize("n, h", [((0, 1, 1), (1, 1, 1)), ((1, 1, 1), (1, -1, 1)), ((2, 2), (1, 1, 1))])
def test_invalid_mesh(n, h):
    with pytest.raises(ValueError):
        build_uniform_mesh(n, h)


@given(sizes)
def test_staggered_counts(n):
    nx, ny, nz = n
    m = build_uniform_mesh(n, (1.0, 2.0, 3.0))
    assert m.n_edges_per_axis == (nx * (ny + 1) * (nz + 1), (nx + 1) * ny * (nz + 1), (nx + 1) * (ny + 1) * nz)
    assert m.n_faces_per_axis == ((nx + 1) * ny * nz, nx * (ny + 1) * nz, nx * ny * (nz + 1))
    # Euler characteristic of a box complex: V - E + F - C = 1
    assert m.n_nodes - m.n_edges + m.n_faces - m.n_cells == 1
    assert curl_incidence(m).shape == (m.n_faces, m.n_edges)


def test_x_fastest_ordering():
    m = build_uniform_mesh((3, 2, 2), (1, 1, 1))
    c = m.cell_centers
    np.testing.assert_allclose(c[:4], [[0.5, 0.5, 0.5], [1.5, 0.5, 0.5], [2.5, 0.5, 0.5], [0.5, 1.5, 0.5]])
    # edge blocks: all x-edges first, along +x
    assert np.all(m.edge_axis[: m.n_edges_per_axis[0]] == 0)
    assert m.edge_index(1, 0, 0, 0) == m.n_edges_per_axis[0]
    np.testing.assert_allclose(m.edge_midpoints[m.edge_index(2, 1, 2, 0)], [1, 2, 0.5])
    np.testing.assert_allclose(m.face_centers[m.face_index(0, 3, 1, 1)], [3, 1.5, 1.5])


def test_coarsen_examples():
    assert coarsen(build_uniform_mesh((8, 8, 8), (1, 1, 1)), CoarseningSpec(2)).shape_cells == (4, 4, 4)
    fine = build_uniform_mesh((32, 32, 32), (50, 50, 50))
    spec = CoarseningSpec((4, 4, 4))
    coarse = coarsen(fine, spec)
    assert coarse.shape_cells == (8, 8, 8)
    np.testing.assert_allclose(coarse.h[0], 200.0)
    assert all(spec.fine_cells(fine, k).size == 64 for k in range(coarse.n_cells))
    with pytest.raises(ValueError):
        coarsen(fine, CoarseningSpec(3))


@given(sizes, st.tuples(*[st.integers(1, 3)] * 3))
@settings(max_examples=40)
def test_coarsen_round_trip(shape, f):
    n = tuple(a * b for a, b in zip(shape, f))
    fine = build_uniform_mesh(n, (1.0, 1.0, 1.0))
    spec = CoarseningSpec(f)
    parents = spec.parent(fine, np.arange(fine.n_cells))
    seen = np.zeros(fine.n_cells, dtype=int)
    for k in range(int(np.prod(shape))):
        cells = spec.fine_cells(fine, k)
        assert np.all(parents[cells] == k)
        seen[cells] += 1
    assert np.all(seen == 1)


def test_extended_domain_examples():
    fine = build_uniform_mesh((16, 16, 16), (1, 1, 1))
    spec = CoarseningSpec(4)
    # coarse cell (1, 1, 1) of the 4^3 coarse mesh
    interior = extended_domain(fine, spec, 21, 4)
    assert interior.shape == (12, 12, 12)
    assert interior.inner == ((4, 8), (4, 8), (4, 8))
    corner = extended_domain(fine, spec, 0, 4)
    assert corner.shape == (8, 8, 8)
    assert corner.inner == ((0, 4), (0, 4), (0, 4))
    bare = extended_domain(fine, spec, 5, 0)
    assert bare.shape == (4, 4, 4) and bare.ranges == spec.fine_ranges(fine, 5)
    with pytest.raises(IndexError):
        extended_domain(fine, spec, 64, 1)
    with pytest.raises(ValueError):
        extended_domain(fine, spec, 0, -1)


@given(st.integers(0, 26), st.integers(0, 6))
@settings(max_examples=40)
def test_extended_domain_contains_coarse_cell(k, p):
    fine = build_uniform_mesh((9, 9, 9), (1, 1, 1))
    spec = CoarseningSpec(3)
    ext = extended_domain(fine, spec, k, p)
    for (r0, r1), (a, b), (g0, g1), n in zip(ext.ranges, ext.inner, spec.fine_ranges(fine, k), fine.shape_cells):
        assert (r0 + a, r0 + b) == (g0, g1)
        assert 0 <= r0 <= g0 and g1 <= r1 <= n
        assert g0 - r0 == min(p, g0) and r1 - g1 == min(p, n - g1)
    assert ext.inner_cell_mask().sum() == 27


def test_aggregation_factor_one():
    fine = build_uniform_mesh((3, 3, 3), (1.0, 2.0, 3.0))
    ext = extended_domain(fine, CoarseningSpec(1), 13, 1)
    agg = aggregation_maps(ext, fine)
    for m, (axis, _, _) in enumerate(box_edge_slots()):
        row = agg.edge_matrix.getrow(m)
        assert row.nnz == 1
        np.testing.assert_allclose(row.data, fine.h[axis][0])


@pytest.mark.parametrize("p", [0, 2, 4])
def test_aggregation_sums(p):
    fine = build_uniform_mesh((12, 12, 12), (1, 1, 1))
    ext = extended_domain(fine, CoarseningSpec(4), 13, p)
    agg = aggregation_maps(ext, fine)
    assert np.all(np.diff(agg.edge_matrix.indptr) == 4)
    np.testing.assert_allclose(agg.edge_matrix.sum(axis=1).A.ravel(), 4.0, rtol=0, atol=1e-14)
    assert np.all(np.diff(agg.face_matrix.indptr) == 16)
    np.testing.assert_allclose(agg.face_matrix.sum(axis=1).A.ravel(), 16.0, rtol=0, atol=1e-14)


@given(st.tuples(*[st.floats(0.1, 10.0)] * 3), st.integers(1, 3), st.integers(0, 3))
@settings(max_examples=25)
def test_aggregated_lengths_and_areas(h, f, p):
    fine = build_uniform_mesh((3 * f, 3 * f, 3 * f), h)
    spec = CoarseningSpec(f)
    ext = extended_domain(fine, spec, 13, p)
    agg = aggregation_maps(ext, fine)
    H = np.array(h) * f
    lengths = [H[a] for a, _, _ in box_edge_slots()]
    areas = [np.prod(H) / H[a] for a, _ in box_face_slots()]
    np.testing.assert_allclose(agg.edge_matrix.sum(axis=1).A.ravel(), lengths, rtol=1e-14)
    np.testing.assert_allclose(agg.face_matrix.sum(axis=1).A.ravel(), areas, rtol=1e-14)
    # every fine edge maps to at most one coarse edge
    assert np.all(np.diff(agg.edge_matrix.tocsc().indptr) <= 1)


def test_aggregation_edges_lie_on_coarse_edges():
    fine = build_uniform_mesh((12, 12, 12), (1, 1, 1))
    ext = extended_domain(fine, CoarseningSpec(4), 13, 4)
    sub = ext.submesh(fine)
    agg = aggregation_maps(ext, fine)
    lo = np.array([sub.nodes_axes[a][ext.inner[a][0]] for a in range(3)])
    hi = np.array([sub.nodes_axes[a][ext.inner[a][1]] for a in range(3)])
    for m, (axis, s0, s1) in enumerate(box_edge_slots()):
        pts = sub.edge_midpoints[agg.edge_members[m]]
        t0, t1 = (b for b in range(3) if b != axis)
        np.testing.assert_allclose(pts[:, t0], (lo, hi)[s0][t0])
        np.testing.assert_allclose(pts[:, t1], (lo, hi)[s1][t1])
        assert np.all((pts[:, axis] > lo[axis]) & (pts[:, axis] < hi[axis]))


def test_box_slots_match_one_cell_mesh():
    m = build_uniform_mesh((1, 1, 1), (1, 1, 1))
    for e, (axis, s0, s1) in enumerate(box_edge_slots()):
        t = [b for b in range(3) if b != axis]
        ijk = [0, 0, 0]
        ijk[t[0]], ijk[t[1]] = s0, s1
        assert m.edge_index(axis, *ijk) == e
    for f, (axis, side) in enumerate(box_face_slots()):
        ijk = [0, 0, 0]
        ijk[axis] = side
        assert m.face_index(axis, *ijk) == f


def test_mesh_json_round_trip():
    m = build_uniform_mesh((4, 5, 6), (1.5, 2.0, 50.0), (10.0, -5.0, 0.0))
    text = mesh_to_json(m)
    assert json.loads(text) == {"n": [4, 5, 6], "h": [1.5, 2.0, 50.0], "origin": [10.0, -5.0, 0.0]}
    assert mesh_from_json(text) == m
    with pytest.raises(ValueError):
        mesh_from_json('{"n": [1, 1, 1]}')
