"""
Mimetic finite-volume operators for the E-field curl-curl system.

The electric field lives on edges (tangential average along the edge),
the magnetic flux density on faces (normal average over the face) and
the conductivity in cells. With the time convention ``exp(+i w t)``,

    curl E + i w B = 0,    curl(B / mu) - Sigma E = s,

the discrete second-order system is ``A e = -i w q`` with

    A = C^T M_f(1/mu) C + i w M_e(Sigma),    b = -C e / (i w).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import TensorMesh3D
from .models import MU_0, TENSOR_BASIS, CellConductivityModel

__all__ = [
    "curl_incidence",
    "gradient_incidence",
    "curl_matrix",
    "nodal_gradient",
    "edge_mass",
    "edge_mass_basis",
    "face_mass",
    "CurlCurlSystem",
    "assemble_system",
]


def _d(n):
    return sp.diags([-np.ones(n), np.ones(n)], [0, 1], shape=(n, n + 1), format="csr", dtype=np.int8)


def _i(n):
    return sp.identity(n, format="csr", dtype=np.int8)


def _k3(a, b, c):
    # (z, y, x) Kronecker order for x-fastest flattening
    return sp.kron(a, sp.kron(b, c, format="csr"), format="csr")


def gradient_incidence(mesh):
    """Signed node-to-edge incidence (edges x nodes), entries in {-1, 0, 1}."""
    nx, ny, nz = mesh.shape_cells
    gx = _k3(_i(nz + 1), _i(ny + 1), _d(nx))
    gy = _k3(_i(nz + 1), _d(ny), _i(nx + 1))
    gz = _k3(_d(nz), _i(ny + 1), _i(nx + 1))
    return sp.vstack([gx, gy, gz], format="csr")


def curl_incidence(mesh):
    """Signed edge-to-face incidence (faces x edges), entries in {-1, 0, 1}.

    Row ``f`` holds the circulation of the edges bounding face ``f``,
    oriented by the right-hand rule about the face normal.
    """
    nx, ny, nz = mesh.shape_cells
    # derivative of a component along an axis, mapped onto the face block
    dz_dy = _k3(_i(nz), _d(ny), _i(nx + 1))  # Ez -> x-faces
    dy_dz = _k3(_d(nz), _i(ny), _i(nx + 1))  # Ey -> x-faces
    dx_dz = _k3(_d(nz), _i(ny + 1), _i(nx))  # Ex -> y-faces
    dz_dx = _k3(_i(nz), _i(ny + 1), _d(nx))  # Ez -> y-faces
    dy_dx = _k3(_i(nz + 1), _i(ny), _d(nx))  # Ey -> z-faces
    dx_dy = _k3(_i(nz + 1), _d(ny), _i(nx))  # Ex -> z-faces
    return sp.bmat(
        [
            [None, -dy_dz, dz_dy],
            [dx_dz, None, -dz_dx],
            [-dx_dy, dy_dx, None],
        ],
        format="csr",
    )


def curl_matrix(mesh):
    """Discrete curl (faces x edges): ``diag(1/area) T diag(length)``."""
    T = curl_incidence(mesh).astype(float)
    return (sp.diags(1.0 / mesh.face_areas) @ T @ sp.diags(mesh.edge_lengths)).tocsr()


def nodal_gradient(mesh):
    """Discrete gradient (edges x nodes): ``diag(1/length) G``."""
    G = gradient_incidence(mesh).astype(float)
    return (sp.diags(1.0 / mesh.edge_lengths) @ G).tocsr()


def _corner_edges(mesh):
    """Edge indices of the (x, y, z) edges meeting at each cell corner.

    Returns an array of shape ``(8, 3, n_cells)``.
    """
    nx, ny, nz = mesh.shape_cells
    i, j, k = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    i, j, k = (a.ravel(order="F") for a in (i, j, k))
    out = np.empty((8, 3, mesh.n_cells), dtype=np.int64)
    for c in range(8):
        di, dj, dk = c & 1, (c >> 1) & 1, (c >> 2) & 1
        out[c, 0] = mesh.edge_index(0, i, j + dj, k + dk)
        out[c, 1] = mesh.edge_index(1, i + di, j, k + dk)
        out[c, 2] = mesh.edge_index(2, i + di, j + dj, k)
    return out


def _assemble_corner_mass(mesh, tensors):
    """Sum over cells and corners of ``(V/8) P_c^T Sigma P_c``.

    ``tensors`` has shape ``(n_cells, 3, 3)``.
    """
    corners = _corner_edges(mesh)
    w = mesh.cell_volumes / 8.0
    rows, cols, vals = [], [], []
    for a in range(3):
        for b in range(3):
            s = w * tensors[:, a, b]
            if not np.any(s):
                continue
            rows.append(corners[:, a, :].ravel())
            cols.append(corners[:, b, :].ravel())
            vals.append(np.tile(s, 8))
    n = mesh.n_edges
    if not rows:
        return sp.csr_matrix((n, n))
    M = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    M.sum_duplicates()
    return M


def edge_mass(mesh, model):
    """Edge mass matrix weighted by the cell conductivity.

    Per cell, the 12 edge values are collocated at the 8 corners as
    vectors, the cell tensor is applied at every corner, and the corner
    energies are summed with weights ``volume / 8``. A constant field
    ``E`` over a constant tensor therefore has energy ``V E^T Sigma E``.

    Parameters
    ----------
    mesh : TensorMesh3D
    model : CellConductivityModel or array_like
        Per-cell conductivity; must be positive (definite).
    """
    if not isinstance(model, CellConductivityModel):
        model = CellConductivityModel(model)
    else:
        model.validate()
    if len(model) != mesh.n_cells:
        raise ValueError(f"model has {len(model)} cells, mesh has {mesh.n_cells}")
    if model.isotropic:
        tensors = np.zeros((mesh.n_cells, 3, 3))
        for a in range(3):
            tensors[:, a, a] = model.values
    else:
        tensors = model.tensors()
    return _assemble_corner_mass(mesh, tensors)


def edge_mass_basis(mesh, weights=None):
    """Mass matrices for the six unit symmetric tensors (same tensor in every cell).

    ``edge_mass(mesh, t * ones)`` equals ``sum_j t_j M_j`` for a homogeneous
    tensor ``t``; the ``M_j`` are also the derivatives with respect to ``t_j``.
    ``weights`` (``n_cells``, optional) restricts/weights the cells.
    """
    out = []
    for B in TENSOR_BASIS:
        t = np.broadcast_to(B, (mesh.n_cells, 3, 3)).copy()
        if weights is not None:
            t *= np.asarray(weights, dtype=float)[:, None, None]
        out.append(_assemble_corner_mass(mesh, t))
    return out


def face_mass(mesh, mu=MU_0):
    """Diagonal face mass matrix with coefficient ``1/mu``.

    Corner collocation of the face values gives each face the weight
    ``V/2`` from every adjacent cell, so a constant flux ``B`` has energy
    ``V |B|^2 / mu``.
    """
    mu = float(mu)
    if not mu > 0:
        raise ValueError(f"permeability must be positive, got {mu}")
    nx, ny, nz = mesh.shape_cells
    v = mesh.cell_volumes.reshape(mesh.shape_cells, order="F")
    d = []
    for a, shape in enumerate(mesh.shape_faces):
        acc = np.zeros(shape)
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[a] = slice(0, -1)
        hi[a] = slice(1, None)
        acc[tuple(lo)] += 0.5 * v
        acc[tuple(hi)] += 0.5 * v
        d.append(acc.ravel(order="F"))
    return sp.diags(np.concatenate(d) / mu, format="csr")


@dataclass(frozen=True, eq=False)
class CurlCurlSystem:
    """``A = C^T M_f C + i w M_e`` on all edges of ``mesh``."""

    mesh: TensorMesh3D
    A: sp.csr_matrix
    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    omega: float
    mu: float

    def partition(self, boundary=None):
        """Split the edges into interior and (Dirichlet) boundary sets.

        Parameters
        ----------
        boundary : bool array, optional
            Edge mask of the Dirichlet set; defaults to the outer boundary
            of the mesh.

        Returns
        -------
        interior, boundary : int arrays
        """
        mask = self.mesh.boundary_edges if boundary is None else np.asarray(boundary, dtype=bool)
        return np.flatnonzero(~mask), np.flatnonzero(mask)

    def blocks(self, boundary=None):
        """``(A_ii, A_ib, interior, boundary)`` for a Dirichlet partition."""
        ii, bb = self.partition(boundary)
        A = self.A.tocsr()
        Ai = A[ii]
        return Ai[:, ii].tocsc(), Ai[:, bb].tocsc(), ii, bb


def assemble_system(mesh, model, mu=MU_0, omega=None):
    """Assemble the complex-symmetric curl-curl operator.

    With no Dirichlet partition the natural condition ``(B/mu) x n = 0``
    holds on the outer boundary.
    """
    if omega is None or not float(omega) > 0:
        raise ValueError(f"angular frequency must be positive, got {omega}")
    omega = float(omega)
    C = curl_matrix(mesh)
    K = (C.T @ face_mass(mesh, mu) @ C).tocsr()
    M = edge_mass(mesh, model)
    A = (K + 1j * omega * M).tocsr()
    return CurlCurlSystem(mesh, A, K, M, omega, float(mu))
