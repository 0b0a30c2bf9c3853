"""
Tensor-product meshes with staggered (cell/face/edge/node) indexing.

Ordering conventions
--------------------
Every family of mesh objects lives on a logical 3D grid and is flattened
lexicographically with x fastest (Fortran order):

- cells        ``(nx, ny, nz)``
- nodes        ``(nx+1, ny+1, nz+1)``
- x-edges      ``(nx, ny+1, nz+1)``, then y-edges ``(nx+1, ny, nz+1)``,
  then z-edges ``(nx+1, ny+1, nz)``
- x-faces      ``(nx+1, ny, nz)``, then y-faces ``(nx, ny+1, nz)``,
  then z-faces ``(nx, ny, nz+1)``

Edges and faces are stored as per-axis blocks (all x, then all y, then
all z). Edges point along +axis and faces are oriented along +axis.

The twelve edges and six faces of a single box (e.g. a coarse cell) are
enumerated the same way as the edges/faces of a one-cell mesh; see
:func:`box_edge_slots` and :func:`box_face_slots`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

__all__ = [
    "TensorMesh3D",
    "CoarseningSpec",
    "ExtendedDomain",
    "AggregationMaps",
    "build_uniform_mesh",
    "coarsen",
    "extended_domain",
    "aggregation_maps",
    "box_edge_slots",
    "box_face_slots",
    "mesh_to_json",
    "mesh_from_json",
]


def _ravel(shape, i, j, k):
    return np.asarray(i) + shape[0] * (np.asarray(j) + shape[1] * np.asarray(k))


def _grid(*axes):
    """Return the (n, 3) points of a tensor grid, x fastest."""
    g = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([a.ravel(order="F") for a in g])


@dataclass(frozen=True, eq=False)
class TensorMesh3D:
    """Tensor mesh in 3D.

    Parameters
    ----------
    h : sequence of three 1D arrays
        Cell widths along x, y and z (meters).
    origin : (3,) array_like
        Coordinates of the lowest corner (meters).
    """

    h: tuple
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if len(self.h) != 3:
            raise ValueError("a 3D mesh needs cell widths for three axes")
        hs = tuple(np.atleast_1d(np.asarray(hh, dtype=float)).copy() for hh in self.h)
        for hh in hs:
            if hh.ndim != 1 or hh.size < 1:
                raise ValueError("every axis needs at least one cell")
            if not np.all(np.isfinite(hh)) or np.any(hh <= 0):
                raise ValueError("cell widths must be finite and positive")
            hh.setflags(write=False)
        origin = np.asarray(self.origin, dtype=float).reshape(3).copy()
        origin.setflags(write=False)
        object.__setattr__(self, "h", hs)
        object.__setattr__(self, "origin", origin)

    def __repr__(self):
        return f"TensorMesh3D(shape_cells={self.shape_cells}, origin={tuple(self.origin)})"

    def __eq__(self, other):
        if not isinstance(other, TensorMesh3D):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self.h, other.h)) and np.array_equal(
            self.origin, other.origin
        )

    __hash__ = None

    # ------------------------------------------------------------------ sizes
    @property
    def shape_cells(self):
        return tuple(hh.size for hh in self.h)

    @property
    def shape_nodes(self):
        return tuple(n + 1 for n in self.shape_cells)

    @property
    def shape_edges(self):
        """Logical grid shapes of the x-, y- and z-edge blocks."""
        nx, ny, nz = self.shape_cells
        return ((nx, ny + 1, nz + 1), (nx + 1, ny, nz + 1), (nx + 1, ny + 1, nz))

    @property
    def shape_faces(self):
        """Logical grid shapes of the x-, y- and z-face blocks."""
        nx, ny, nz = self.shape_cells
        return ((nx + 1, ny, nz), (nx, ny + 1, nz), (nx, ny, nz + 1))

    @property
    def n_cells(self):
        return int(np.prod(self.shape_cells))

    @property
    def n_nodes(self):
        return int(np.prod(self.shape_nodes))

    @property
    def n_edges_per_axis(self):
        return tuple(int(np.prod(s)) for s in self.shape_edges)

    @property
    def n_faces_per_axis(self):
        return tuple(int(np.prod(s)) for s in self.shape_faces)

    @property
    def n_edges(self):
        return sum(self.n_edges_per_axis)

    @property
    def n_faces(self):
        return sum(self.n_faces_per_axis)

    def edge_offset(self, axis):
        return sum(self.n_edges_per_axis[:axis])

    def face_offset(self, axis):
        return sum(self.n_faces_per_axis[:axis])

    # ------------------------------------------------------------- geometry
    @cached_property
    def nodes_axes(self):
        return tuple(o + np.r_[0.0, np.cumsum(hh)] for o, hh in zip(self.origin, self.h))

    @cached_property
    def centers_axes(self):
        return tuple(n[:-1] + 0.5 * hh for n, hh in zip(self.nodes_axes, self.h))

    @property
    def extent(self):
        return np.array([hh.sum() for hh in self.h])

    @cached_property
    def cell_volumes(self):
        hx, hy, hz = self.h
        return np.einsum("i,j,k->ijk", hx, hy, hz).ravel(order="F")

    @cached_property
    def cell_centers(self):
        return _grid(*self.centers_axes)

    @cached_property
    def nodes(self):
        return _grid(*self.nodes_axes)

    def _staggered(self, axis, kind):
        n, c = self.nodes_axes, self.centers_axes
        if kind == "edge":
            axes = [n[a] for a in range(3)]
            axes[axis] = c[axis]
        else:
            axes = [c[a] for a in range(3)]
            axes[axis] = n[axis]
        return axes

    @cached_property
    def edge_midpoints(self):
        """(n_edges, 3) edge midpoints in the documented block order."""
        return np.vstack([_grid(*self._staggered(a, "edge")) for a in range(3)])

    @cached_property
    def face_centers(self):
        """(n_faces, 3) face centers in the documented block order."""
        return np.vstack([_grid(*self._staggered(a, "face")) for a in range(3)])

    @cached_property
    def edge_lengths(self):
        out = []
        for a, shape in enumerate(self.shape_edges):
            w = [np.ones(s) for s in shape]
            w[a] = self.h[a]
            out.append(np.einsum("i,j,k->ijk", *w).ravel(order="F"))
        return np.concatenate(out)

    @cached_property
    def face_areas(self):
        out = []
        for a, shape in enumerate(self.shape_faces):
            w = [self.h[b] if b != a else np.ones(shape[a]) for b in range(3)]
            out.append(np.einsum("i,j,k->ijk", *w).ravel(order="F"))
        return np.concatenate(out)

    @cached_property
    def edge_axis(self):
        """Axis (0, 1, 2) of every edge."""
        return np.repeat(np.arange(3), self.n_edges_per_axis)

    @cached_property
    def boundary_edges(self):
        """Boolean mask of the edges lying on the outer boundary of the mesh."""
        out = []
        for a, shape in enumerate(self.shape_edges):
            idx = np.meshgrid(*[np.arange(s) for s in shape], indexing="ij")
            on = np.zeros(shape, dtype=bool)
            for b in range(3):
                if b != a:
                    on |= (idx[b] == 0) | (idx[b] == shape[b] - 1)
            out.append(on.ravel(order="F"))
        return np.concatenate(out)

    # -------------------------------------------------------------- indices
    def cell_index(self, i, j, k):
        return _ravel(self.shape_cells, i, j, k)

    def cell_ijk(self, index):
        return np.unravel_index(index, self.shape_cells, order="F")

    def edge_index(self, axis, i, j, k):
        return self.edge_offset(axis) + _ravel(self.shape_edges[axis], i, j, k)

    def face_index(self, axis, i, j, k):
        return self.face_offset(axis) + _ravel(self.shape_faces[axis], i, j, k)

    def node_index(self, i, j, k):
        return _ravel(self.shape_nodes, i, j, k)

    def submesh(self, ranges):
        """Mesh of the cell block ``ranges = ((i0, i1), (j0, j1), (k0, k1))``."""
        h = tuple(self.h[a][r0:r1] for a, (r0, r1) in enumerate(ranges))
        origin = [self.nodes_axes[a][r0] for a, (r0, _) in enumerate(ranges)]
        return TensorMesh3D(h, origin)

    def block_cell_indices(self, ranges):
        """Global cell indices of a cell block, in the block's own x-fastest order."""
        axes = [np.arange(r0, r1) for r0, r1 in ranges]
        g = np.meshgrid(*axes, indexing="ij")
        return self.cell_index(*(a.ravel(order="F") for a in g))


def build_uniform_mesh(n, h, origin=(0.0, 0.0, 0.0)):
    """Build a uniform tensor mesh.

    Parameters
    ----------
    n : (3,) int
        Cell counts per axis.
    h : (3,) float
        Cell width per axis (meters).
    origin : (3,) float, default: (0, 0, 0)

    Examples
    --------
    >>> mesh = build_uniform_mesh((2, 2, 2), (1.0, 1.0, 1.0))
    >>> mesh.n_cells, mesh.n_faces, mesh.n_edges
    (8, 36, 54)
    """
    n = np.asarray(n).reshape(-1)
    h = np.asarray(h, dtype=float).reshape(-1)
    if n.size != 3 or h.size != 3:
        raise ValueError("n and h need three entries")
    if np.any(n < 1) or np.any(n != np.round(n)):
        raise ValueError(f"cell counts must be positive integers, got {n.tolist()}")
    if np.any(h <= 0) or not np.all(np.isfinite(h)):
        raise ValueError(f"cell widths must be positive, got {h.tolist()}")
    return TensorMesh3D(tuple(np.full(int(nn), hh) for nn, hh in zip(n, h)), origin)


@dataclass(frozen=True)
class CoarseningSpec:
    """Integer coarsening factor per axis."""

    factors: tuple

    def __post_init__(self):
        raw = np.broadcast_to(np.asarray(self.factors), (3,))
        if np.any(raw < 1) or np.any(raw != np.round(raw)):
            raise ValueError(f"coarsening factors must be positive integers, got {self.factors}")
        object.__setattr__(self, "factors", tuple(int(v) for v in raw))

    def check(self, mesh):
        for n, f in zip(mesh.shape_cells, self.factors):
            if n % f:
                raise ValueError(
                    f"fine cell counts {mesh.shape_cells} are not divisible by factors {self.factors}"
                )

    def coarse_shape(self, mesh):
        self.check(mesh)
        return tuple(n // f for n, f in zip(mesh.shape_cells, self.factors))

    def fine_ranges(self, mesh, k):
        """Fine index ranges per axis covered by coarse cell ``k``."""
        ijk = np.unravel_index(int(k), self.coarse_shape(mesh), order="F")
        return tuple((int(c) * f, (int(c) + 1) * f) for c, f in zip(ijk, self.factors))

    def fine_cells(self, mesh, k):
        """Global fine-cell indices inside coarse cell ``k``."""
        return mesh.block_cell_indices(self.fine_ranges(mesh, k))

    def parent(self, mesh, fine_index):
        """Coarse cell index containing each fine cell."""
        ijk = mesh.cell_ijk(fine_index)
        cshape = self.coarse_shape(mesh)
        return _ravel(cshape, *(np.asarray(c) // f for c, f in zip(ijk, self.factors)))


def coarsen(mesh, spec):
    """Coarse mesh nested in ``mesh``.

    Each coarse cell covers exactly ``fx * fy * fz`` fine cells. Raises
    ``ValueError`` if a fine cell count is not divisible by its factor.
    """
    if not isinstance(spec, CoarseningSpec):
        spec = CoarseningSpec(spec)
    spec.check(mesh)
    h = tuple(hh.reshape(-1, f).sum(axis=1) for hh, f in zip(mesh.h, spec.factors))
    return TensorMesh3D(h, mesh.origin)


@dataclass(frozen=True)
class ExtendedDomain:
    """A coarse cell embedded in a padding shell of fine cells.

    Attributes
    ----------
    k : int
        Coarse cell index.
    padding : int
        Requested number of fine padding cells per side.
    ranges : tuple of (start, stop)
        Fine index range per axis of the extended block (global indices).
    inner : tuple of (start, stop)
        Fine index range per axis of the coarse cell, relative to the
        start of the extended block.
    """

    k: int
    padding: int
    ranges: tuple
    inner: tuple

    @property
    def shape(self):
        return tuple(r1 - r0 for r0, r1 in self.ranges)

    @property
    def inner_global(self):
        return tuple((r0 + a, r0 + b) for (r0, _), (a, b) in zip(self.ranges, self.inner))

    def submesh(self, fine):
        return fine.submesh(self.ranges)

    def cell_indices(self, fine):
        """Global fine-cell indices of the extended block (local x-fastest order)."""
        return fine.block_cell_indices(self.ranges)

    def inner_cell_mask(self):
        """Boolean mask over the extended block's cells marking the coarse cell."""
        shape = self.shape
        m = np.zeros(shape, dtype=bool)
        (a0, a1), (b0, b1), (c0, c1) = self.inner
        m[a0:a1, b0:b1, c0:c1] = True
        return m.ravel(order="F")


def extended_domain(fine, spec, k, padding):
    """Extended local domain of coarse cell ``k`` with ``padding`` fine cells per side.

    Near the global boundary the extension is truncated (one-sided).
    """
    if not isinstance(spec, CoarseningSpec):
        spec = CoarseningSpec(spec)
    padding = int(padding)
    if padding < 0:
        raise ValueError("padding must be non-negative")
    ncoarse = int(np.prod(spec.coarse_shape(fine)))
    if not 0 <= int(k) < ncoarse:
        raise IndexError(f"coarse cell index {k} out of range [0, {ncoarse})")
    inner = spec.fine_ranges(fine, k)
    ranges, rel = [], []
    for (a, b), n in zip(inner, fine.shape_cells):
        r0, r1 = max(0, a - padding), min(n, b + padding)
        ranges.append((r0, r1))
        rel.append((a - r0, b - r0))
    return ExtendedDomain(int(k), padding, tuple(ranges), tuple(rel))


def box_edge_slots():
    """The twelve box edges as ``(axis, side_a, side_b)``.

    ``side_a``/``side_b`` (0 = low, 1 = high) are the positions along the two
    transverse axes in increasing axis order, the first one varying fastest.
    This matches the edge numbering of a one-cell mesh.
    """
    return [(a, s0, s1) for a in range(3) for s1 in (0, 1) for s0 in (0, 1)]


def box_face_slots():
    """The six box faces as ``(axis, side)``, matching a one-cell mesh."""
    return [(a, s) for a in range(3) for s in (0, 1)]


@dataclass(frozen=True)
class AggregationMaps:
    """Maps from fine edges/faces onto the 12 edges and 6 faces of a coarse cell.

    ``edge_matrix @ e`` integrates a fine edge field along the coarse edges
    (edge value times length, sign +1 for edges oriented with the coarse
    edge). ``face_matrix @ b`` integrates a fine face flux over the coarse
    faces (face value times area).
    """

    edge_matrix: sp.csr_matrix
    face_matrix: sp.csr_matrix
    edge_members: tuple
    face_members: tuple


def aggregation_maps(ext, fine):
    """Aggregation maps for the coarse cell of ``ext`` on its extended submesh."""
    # accept either the global fine mesh or the extended submesh itself
    mesh = fine if fine.shape_cells == ext.shape else ext.submesh(fine)
    L, A = mesh.edge_lengths, mesh.face_areas
    rows, cols, vals, members = [], [], [], []
    for m, (axis, s0, s1) in enumerate(box_edge_slots()):
        t = [b for b in range(3) if b != axis]
        idx = [None] * 3
        idx[axis] = np.arange(*ext.inner[axis])
        idx[t[0]] = np.array([ext.inner[t[0]][s0]])
        idx[t[1]] = np.array([ext.inner[t[1]][s1]])
        g = np.meshgrid(*idx, indexing="ij")
        e = mesh.edge_index(axis, *(x.ravel(order="F") for x in g))
        members.append(e)
        rows.append(np.full(e.size, m))
        cols.append(e)
        vals.append(L[e])
    E = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(12, mesh.n_edges)
    )
    rows, cols, vals, fmembers = [], [], [], []
    for j, (axis, side) in enumerate(box_face_slots()):
        idx = [np.arange(*ext.inner[b]) for b in range(3)]
        idx[axis] = np.array([ext.inner[axis][side]])
        g = np.meshgrid(*idx, indexing="ij")
        f = mesh.face_index(axis, *(x.ravel(order="F") for x in g))
        fmembers.append(f)
        rows.append(np.full(f.size, j))
        cols.append(f)
        vals.append(A[f])
    F = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(6, mesh.n_faces)
    )
    return AggregationMaps(E, F, tuple(members), tuple(fmembers))


def mesh_to_json(mesh):
    """Serialize a uniform mesh as ``{"n": [...], "h": [...], "origin": [...]}``.

    Non-uniform axes are written as explicit width lists.
    """
    h = [float(hh[0]) if np.all(hh == hh[0]) else hh.tolist() for hh in mesh.h]
    return json.dumps({"n": list(mesh.shape_cells), "h": h, "origin": mesh.origin.tolist()})


def mesh_from_json(text):
    d = json.loads(text) if isinstance(text, str) else dict(text)
    try:
        n, h = d["n"], d["h"]
    except KeyError as err:
        raise ValueError(f"mesh JSON is missing {err}") from None
    origin = d.get("origin", [0.0, 0.0, 0.0])
    if len(n) != 3 or len(h) != 3:
        raise ValueError("mesh JSON needs three entries in 'n' and 'h'")
    widths = []
    for nn, hh in zip(n, h):
        if int(nn) < 1:
            raise ValueError(f"cell counts must be positive integers, got {n}")
        if np.ndim(hh) == 0:
            widths.append(np.full(int(nn), float(hh)))
        else:
            hh = np.asarray(hh, dtype=float)
            if hh.size != int(nn):
                raise ValueError("explicit width list does not match the cell count")
            widths.append(hh)
    return TensorMesh3D(tuple(widths), origin)
