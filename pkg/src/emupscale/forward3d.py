"""
Full-domain 3D forward modelling with a loop source, and the secondary-field
comparison metrics used to judge coarse models.

The system is the all-edge curl-curl operator of :mod:`emupscale.mfv` with
the natural condition ``(B / mu) x n = 0`` on the outer boundary,

    A e = -i w q,    b = -C e / (i w),

where ``q`` holds the signed lengths of the mesh edges carrying the loop
current.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import linsolve
from .mfv import assemble_system, curl_matrix, gradient_incidence
from .models import AIR_CONDUCTIVITY, MU_0, CellConductivityModel

__all__ = [
    "LoopSource",
    "ReceiverGrid",
    "ForwardResult",
    "forward3d",
    "interpolate_B",
    "secondary_field",
    "delta_B_error",
    "write_receiver_csv",
    "layered_background",
    "receiver_B",
    "compare_coarse_models",
]

log = logging.getLogger(__name__)


def _snap(axis_nodes, v):
    return int(np.argmin(np.abs(axis_nodes - v)))


@dataclass(frozen=True)
class LoopSource:
    """Horizontal rectangular loop carrying a uniform current.

    The loop runs counter-clockwise seen from above (+z up) for a positive
    ``current``. Corners are snapped to the nearest mesh nodes.

    Parameters
    ----------
    x, y : (2,) float
        Loop extent along x and y (m).
    z : float
        Elevation of the loop plane (m).
    current : float, default: 1
        Current in A; a negative value reverses the loop.
    """

    x: tuple
    y: tuple
    z: float
    current: float = 1.0

    def __post_init__(self):
        x = tuple(sorted(float(v) for v in self.x))
        y = tuple(sorted(float(v) for v in self.y))
        if len(x) != 2 or len(y) != 2 or x[0] == x[1] or y[0] == y[1]:
            raise ValueError("loop needs two distinct x and two distinct y coordinates")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", float(self.z))
        object.__setattr__(self, "current", float(self.current))

    def node_box(self, mesh):
        """Snapped node indices ``(i0, i1, j0, j1, k)`` of the loop."""
        nx, ny, nz = mesh.nodes_axes
        i0, i1 = _snap(nx, self.x[0]), _snap(nx, self.x[1])
        j0, j1 = _snap(ny, self.y[0]), _snap(ny, self.y[1])
        k = _snap(nz, self.z)
        if i0 == i1 or j0 == j1:
            raise ValueError("loop collapses to a line after snapping to the mesh")
        return i0, i1, j0, j1, k

    def edge_currents(self, mesh):
        """Signed current (A) on every mesh edge, zero off the loop."""
        i0, i1, j0, j1, k = self.node_box(mesh)
        s = np.zeros(mesh.n_edges)
        ii = np.arange(i0, i1)
        jj = np.arange(j0, j1)
        s[mesh.edge_index(0, ii, j0, k)] += 1.0
        s[mesh.edge_index(1, i1, jj, k)] += 1.0
        s[mesh.edge_index(0, ii, j1, k)] -= 1.0
        s[mesh.edge_index(1, i0, jj, k)] -= 1.0
        return self.current * s

    def source_vector(self, mesh):
        """Signed edge lengths times current, ``q`` in ``A e = -i w q``."""
        return self.edge_currents(mesh) * mesh.edge_lengths

    def divergence(self, mesh):
        """Net current leaving every node; zero for a closed loop."""
        return gradient_incidence(mesh).T @ self.edge_currents(mesh)

    def reversed(self):
        return LoopSource(self.x, self.y, self.z, -self.current)

    def to_dict(self):
        return {"x": list(self.x), "y": list(self.y), "z": self.z, "current": self.current}


@dataclass(frozen=True)
class ReceiverGrid:
    """Regular horizontal grid of three-component B receivers.

    Points are ordered with x fastest.
    """

    x: tuple
    y: tuple
    z: float

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in np.atleast_1d(self.x)))
        object.__setattr__(self, "y", tuple(float(v) for v in np.atleast_1d(self.y)))
        object.__setattr__(self, "z", float(self.z))
        if not self.x or not self.y:
            raise ValueError("receiver grid is empty")

    @classmethod
    def regular(cls, x_range, y_range, z, spacing):
        """Grid from ``x_range[0]`` to ``x_range[1]`` (inclusive) every ``spacing`` m."""
        if not spacing > 0:
            raise ValueError("receiver spacing must be positive")

        def axis(r):
            n = int(np.floor((r[1] - r[0]) / spacing + 1e-9)) + 1
            return r[0] + spacing * np.arange(n)

        return cls(axis(x_range), axis(y_range), z)

    @property
    def locations(self):
        gx, gy = np.meshgrid(self.x, self.y, indexing="ij")
        n = gx.size
        return np.column_stack([gx.ravel(order="F"), gy.ravel(order="F"), np.full(n, self.z)])

    @property
    def n_receivers(self):
        return len(self.x) * len(self.y)

    def to_dict(self):
        return {"x": list(self.x), "y": list(self.y), "z": self.z}


@dataclass(frozen=True, eq=False)
class ForwardResult:
    mesh: object
    e: np.ndarray
    b: np.ndarray
    frequency: float
    residual: float


def forward3d(mesh, model, source, frequency, mu=MU_0, backend="auto", iterative=False):
    """Solve the loop-source problem on the whole mesh.

    Parameters
    ----------
    mesh : TensorMesh3D
    model : CellConductivityModel or array_like
        Isotropic (n_cells,) or tensor (n_cells, 6) conductivity.
    source : LoopSource
    frequency : float
        Hz.
    backend : str
        Direct solver backend, see :func:`emupscale.linsolve.factorize`.
    iterative : bool
        Use the preconditioned Krylov path instead of a factorization.

    Returns
    -------
    ForwardResult
    """
    if not float(frequency) > 0:
        raise ValueError(f"frequency must be positive, got {frequency}")
    if np.any(np.abs(source.divergence(mesh)) > 1e-9 * max(abs(source.current), 1.0)):
        raise ValueError("loop source is not closed on the mesh")
    if not isinstance(model, CellConductivityModel):
        model = CellConductivityModel(model)
    omega = 2.0 * np.pi * float(frequency)
    sysm = assemble_system(mesh, model, mu=mu, omega=omega)
    rhs = -1j * omega * source.source_vector(mesh)
    if iterative:
        e = linsolve.iterative_solve(sysm.A, rhs)
    else:
        f = linsolve.factorize(sysm.A, backend=backend, coords=mesh.edge_midpoints)
        try:
            e = f.solve(rhs)
        finally:
            f.release()
    res = float(np.linalg.norm(sysm.A @ e - rhs) / np.linalg.norm(rhs))
    log.debug("forward3d f=%g Hz: relative residual %.2e", frequency, res)
    b = -(curl_matrix(mesh) @ e) / (1j * omega)
    return ForwardResult(mesh, e, b, float(frequency), res)


def interpolate_B(mesh, b, points):
    """Three-component B at arbitrary points by per-component linear interpolation.

    Each component is interpolated trilinearly from its own face centres.
    Between the outermost face centres and the mesh boundary the nearest
    sample layer is used (constant extrapolation within half a cell).

    Parameters
    ----------
    mesh : TensorMesh3D
    b : (n_faces,) complex
    points : (n, 3) float

    Returns
    -------
    (n, 3) complex
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lo = np.array([a[0] for a in mesh.nodes_axes])
    hi = np.array([a[-1] for a in mesh.nodes_axes])
    tol = 1e-9 * np.max(mesh.extent)
    bad = np.any((pts < lo - tol) | (pts > hi + tol), axis=1)
    if np.any(bad):
        raise ValueError(f"{int(bad.sum())} receiver(s) outside the mesh, e.g. {pts[bad][0]}")
    b = np.asarray(b)
    out = np.empty((pts.shape[0], 3), dtype=complex)
    for a, shape in enumerate(mesh.shape_faces):
        axes = mesh._staggered(a, "face")
        start = mesh.face_offset(a)
        vals = b[start : start + int(np.prod(shape))].reshape(shape, order="F")
        q = np.column_stack([np.clip(pts[:, c], axes[c][0], axes[c][-1]) for c in range(3)])
        # a single sample along an axis needs no interpolation along it
        keep = [c for c in range(3) if len(axes[c]) > 1]
        if len(keep) < 3:
            vals = vals.reshape([len(axes[c]) for c in keep])
        interp = RegularGridInterpolator([axes[c] for c in keep], vals, method="linear")
        out[:, a] = interp(q[:, keep])
    return out


def secondary_field(B_model, B_background):
    """``B(model) - B(background)`` per receiver and component."""
    a = np.asarray(B_model)
    b = np.asarray(B_background)
    if a.shape != b.shape:
        raise ValueError(f"field shapes differ: {a.shape} vs {b.shape}")
    return a - b


def delta_B_error(dB_fine, dB_coarse, denominator="coarse"):
    """Infinity-norm relative error of secondary-field magnitudes, in percent.

    ``100 * max| |dB_fine| - |dB_coarse| | / max|dB_coarse|`` over all
    receivers and components. ``denominator="fine"`` normalizes by the
    fine-model field instead.
    """
    f = np.abs(np.asarray(dB_fine))
    c = np.abs(np.asarray(dB_coarse))
    if f.shape != c.shape:
        raise ValueError(f"field shapes differ: {f.shape} vs {c.shape}")
    if denominator == "coarse":
        den = c.max(initial=0.0)
    elif denominator == "fine":
        den = f.max(initial=0.0)
    else:
        raise ValueError(f"denominator must be 'coarse' or 'fine', got {denominator!r}")
    if den == 0:
        raise ZeroDivisionError("secondary field in the denominator is identically zero")
    return float(100.0 * np.max(np.abs(f - c)) / den)


RECEIVER_COLUMNS = ("x", "y", "z", "re_bx", "im_bx", "re_by", "im_by", "re_bz", "im_bz", "frequency")


def write_receiver_csv(path, locations, B, frequency):
    """Receiver data as CSV, one row per receiver."""
    loc = np.asarray(locations)
    B = np.asarray(B)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECEIVER_COLUMNS)
        for p, v in zip(loc, B):
            w.writerow(
                [repr(float(t)) for t in p]
                + [repr(float(t)) for c in v for t in (c.real, c.imag)]
                + [repr(float(frequency))]
            )


# --------------------------------------------------------- comparisons
COMPARISON_MODELS = ("arithmetic", "geometric", "harmonic")


def layered_background(mesh, sigma, surface=None, air=AIR_CONDUCTIVITY):
    """Uniform earth of conductivity ``sigma`` below ``surface``, air above."""
    out = np.full(mesh.n_cells, float(sigma))
    if surface is not None:
        out[mesh.cell_centers[:, 2] > surface] = air
    return out


def receiver_B(mesh, model, source, receivers, frequency, **kw):
    """B at the receiver locations, ``(n_receivers, 3)`` complex."""
    res = forward3d(mesh, model, source, frequency, **kw)
    return interpolate_B(mesh, res.b, receivers.locations)


def compare_coarse_models(
    fine,
    fine_model,
    spec,
    source,
    receivers,
    frequencies,
    paddings=(4, 8),
    kind="B",
    background=0.01,
    surface=None,
    workers=1,
    backend="auto",
    upscale_options=None,
):
    """Secondary-field errors of coarse models against the fine model.

    For every frequency the fine model and five coarse models (three
    averages and the upscaled tensors for each padding) are simulated, each
    on its own mesh, and compared through :func:`delta_B_error`. The
    secondary field subtracts a uniform-earth response computed on the
    same mesh as the model.

    Returns
    -------
    rows : list of dict
        Keys ``frequency, model, delta_B_percent, delta_B_fine_denominator_percent,
        n_cells, n_edges``.
    reports : dict
        ``(frequency, padding) -> UpscaleResult``.
    fields : dict
        ``(frequency, model) -> (n_receivers, 3)`` secondary fields.
    """
    from .mesh import CoarseningSpec, coarsen
    from .upscale3d import UpscaleConfig, average_model, upscale_model

    spec = spec if isinstance(spec, CoarseningSpec) else CoarseningSpec(spec)
    coarse = coarsen(fine, spec)
    bg_fine = layered_background(fine, background, surface)
    bg_coarse = layered_background(coarse, background, surface)
    averages = {m: average_model(fine, fine_model, spec, m) for m in COMPARISON_MODELS}
    rows, reports, fields = [], {}, {}
    opts = dict(upscale_options or {})
    for f in frequencies:
        kw = dict(backend=backend)
        dB_fine = secondary_field(
            receiver_B(fine, fine_model, source, receivers, f, **kw),
            receiver_B(fine, bg_fine, source, receivers, f, **kw),
        )
        B_bg = receiver_B(coarse, bg_coarse, source, receivers, f, **kw)
        fields[(float(f), "fine")] = dB_fine
        coarse_models = dict(averages)
        for p in paddings:
            cfg = UpscaleConfig(frequency=float(f), padding=int(p), kind=kind, backend=backend, **opts)
            res = upscale_model(fine, fine_model, spec, cfg, workers=workers)
            reports[(float(f), int(p))] = res
            coarse_models[f"upscaled_p{int(p)}"] = res.model
        for name, m in coarse_models.items():
            dB = secondary_field(receiver_B(coarse, m, source, receivers, f, **kw), B_bg)
            fields[(float(f), name)] = dB
            rows.append(
                {
                    "frequency": float(f),
                    "model": name,
                    "delta_B_percent": delta_B_error(dB_fine, dB),
                    "delta_B_fine_denominator_percent": delta_B_error(dB_fine, dB, "fine"),
                    "n_cells": coarse.n_cells,
                    "n_edges": coarse.n_edges,
                }
            )
    return rows, reports, fields
