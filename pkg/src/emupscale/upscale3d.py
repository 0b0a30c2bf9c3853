"""
Local electromagnetic upscaling of cell conductivities to SPD tensors.

For every coarse cell an extended block of fine cells (the coarse cell
plus ``padding`` fine cells per side) is excited by twelve Dirichlet
conditions, one per edge of the block. Each condition is tangential to
its edge, equals 1 on that edge and decays bilinearly to 0 at the far
transverse sides. The fine response is reduced to data on the coarse
cell, either as tangential E integrated along its twelve edges or as
normal B integrated over its six faces. A homogeneous trial tensor
filling the whole block is then fitted to those data by projected
Gauss-Newton, with eigenvalue clamping as the projection.
"""
from __future__ import annotations

import hashlib
import logging
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from . import linsolve
from .mesh import (
    CoarseningSpec,
    ExtendedDomain,
    TensorMesh3D,
    aggregation_maps,
    box_edge_slots,
    coarsen,
    extended_domain,
)
from .mfv import curl_matrix, edge_mass, edge_mass_basis, face_mass
from .models import MU_0, CellConductivityModel, matrix_to_params, params_to_matrix

__all__ = [
    "SPDTensor",
    "UpscaleConfig",
    "LocalDataVector",
    "LocalFields",
    "UpscaleReport",
    "UpscaleResult",
    "CellUpscaleError",
    "boundary_values",
    "local_fields",
    "extract_data",
    "fine_data",
    "coarse_trial_data",
    "misfit",
    "sensitivities",
    "project_spd",
    "upscale_cell",
    "upscale_model",
]

log = logging.getLogger(__name__)

_KINDS = {"E": "E", "total-E": "E", "B": "B", "total-B": "B"}


class CellUpscaleError(RuntimeError):
    """A coarse cell could not be upscaled."""


# ------------------------------------------------------------------ types
@dataclass(frozen=True)
class SPDTensor:
    """Symmetric tensor ``(s1, s2, s3, s4=xy, s5=xz, s6=yz)`` in S/m."""

    params: tuple

    def __post_init__(self):
        p = tuple(float(v) for v in np.asarray(self.params, dtype=float).reshape(6))
        if not all(np.isfinite(p)) or np.linalg.eigvalsh(params_to_matrix(p))[0] <= 0:
            raise ValueError(f"tensor {p} is not symmetric positive definite")
        object.__setattr__(self, "params", p)

    @classmethod
    def from_matrix(cls, m):
        return cls(matrix_to_params(m))

    @classmethod
    def isotropic(cls, s):
        return cls((s, s, s, 0.0, 0.0, 0.0))

    @property
    def matrix(self):
        return params_to_matrix(np.array(self.params))

    @property
    def eigenvalues(self):
        return np.linalg.eigvalsh(self.matrix)

    def as_array(self):
        return np.array(self.params)


@dataclass(frozen=True)
class UpscaleConfig:
    """Settings of the local upscaling problem.

    Parameters
    ----------
    frequency : float
        Source frequency in Hz (``omega = 2 pi f``).
    padding : int, default: 4
        Fine cells added on every side of the coarse cell.
    kind : {"E", "B"}, default: "B"
        Data integrated along the coarse edges (E) or over the coarse
        faces (B).
    mu : float
        Magnetic permeability (H/m).
    bounds : (float, float), optional
        Eigenvalue bounds of the estimate; default ``[0.1 min, 10 max]`` of
        the fine eigenvalues in the extended block.
    max_iter, gtol, xtol : int, float, float
        Stop after ``max_iter`` Gauss-Newton steps, when the gradient norm
        falls below ``gtol`` times its initial value, or when an accepted
        step changes the tensor by less than ``xtol`` (relative).
    armijo, backtrack, max_backtracks : float, float, int
        Sufficient-decrease constant, step reduction factor and maximum
        number of reductions of the line search.
    weighting : {"none", "relative"}
        ``"relative"`` divides every residual by the modulus of its fine
        datum.
    homogeneous_shortcut : bool, default: True
        Return a homogeneous extended block's own tensor without fitting.
    backend : str, default: "auto"
        Linear solver backend (see :mod:`emupscale.linsolve`).
    extended_precision : bool, default: True
        Refine local solutions with long-double residuals. At low induction
        numbers the local systems have condition numbers near 1e8, and
        plain double-precision solves are only accurate to about 1e-9.
    """

    frequency: float
    padding: int = 4
    kind: str = "B"
    mu: float = MU_0
    bounds: tuple | None = None
    max_iter: int = 50
    gtol: float = 1e-8
    xtol: float = 1e-10
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 30
    weighting: str = "none"
    homogeneous_shortcut: bool = True
    backend: str = "auto"
    extended_precision: bool = True

    def __post_init__(self):
        if not float(self.frequency) > 0:
            raise ValueError(f"frequency must be positive, got {self.frequency}")
        if int(self.padding) < 0:
            raise ValueError("padding must be non-negative")
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be 'E' or 'B', got {self.kind!r}")
        object.__setattr__(self, "kind", _KINDS[self.kind])
        object.__setattr__(self, "padding", int(self.padding))
        if not (self.gtol > 0 and self.max_iter >= 0 and 0 < self.armijo < 1 and 0 < self.backtrack < 1):
            raise ValueError("Gauss-Newton settings out of range")
        if self.weighting not in ("none", "relative"):
            raise ValueError(f"unknown weighting {self.weighting!r}")
        if self.bounds is not None:
            lo, hi = (float(v) for v in self.bounds)
            if not 0 < lo <= hi:
                raise ValueError(f"eigenvalue bounds must satisfy 0 < lo <= hi, got {self.bounds}")
            object.__setattr__(self, "bounds", (lo, hi))

    @property
    def omega(self):
        return 2.0 * np.pi * float(self.frequency)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class LocalDataVector:
    """Local data: ``(12, 12)`` edge integrals (E) or ``(12, 6)`` face fluxes (B).

    Row ``l`` holds the response to the ``l``-th boundary excitation.
    """

    kind: str
    values: np.ndarray
    provenance: str = "fine"

    def __post_init__(self):
        kind = _KINDS.get(self.kind)
        if kind is None:
            raise ValueError(f"unknown data kind {self.kind!r}")
        v = np.asarray(self.values, dtype=complex)
        expected = (12, 12) if kind == "E" else (12, 6)
        if v.shape != expected:
            raise ValueError(f"{kind} data must have shape {expected}, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("local data must be finite")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True, eq=False)
class LocalFields:
    """The twelve local solutions on the extended block.

    ``e`` has shape ``(n_edges, 12)`` and ``b`` shape ``(n_faces, 12)``.
    """

    mesh: TensorMesh3D
    e: np.ndarray
    b: np.ndarray


@dataclass(frozen=True)
class UpscaleReport:
    """Convergence record of one coarse cell."""

    k: int
    status: str
    iterations: int
    initial_misfit: float
    final_misfit: float
    gradient_ratio: float
    converged: bool
    message: str = ""


@dataclass(frozen=True, eq=False)
class UpscaleResult:
    model: CellConductivityModel
    coarse_mesh: TensorMesh3D
    reports: tuple

    @property
    def tensors(self):
        return self.model.values


# ----------------------------------------------------------- excitations
def _hat(x, lo, hi, side):
    t = (x - lo) / (hi - lo)
    return 1.0 - t if side == 0 else t


def boundary_values(mesh, l):
    """Edge values of the ``l``-th boundary excitation (``l = 1..12``).

    Parameters
    ----------
    mesh : TensorMesh3D
        Mesh of the extended block.
    l : int
        Excitation number, ordered like the edges of a one-cell mesh.

    Returns
    -------
    (n_edges,) float array
        Nonzero only on boundary edges parallel to edge ``l``; the value is
        the product of the two transverse hat functions at the edge
        midpoint.
    """
    if isinstance(mesh, ExtendedDomain):
        raise TypeError("pass the extended block's mesh (ExtendedDomain.submesh)")
    l = int(l)
    if not 1 <= l <= 12:
        raise ValueError(f"excitation index must be in 1..12, got {l}")
    axis, s0, s1 = box_edge_slots()[l - 1]
    t0, t1 = (b for b in range(3) if b != axis)
    out = np.zeros(mesh.n_edges)
    on = mesh.boundary_edges & (mesh.edge_axis == axis)
    x = mesh.edge_midpoints[on]
    n = mesh.nodes_axes
    out[on] = _hat(x[:, t0], n[t0][0], n[t0][-1], s0) * _hat(x[:, t1], n[t1][0], n[t1][-1], s1)
    return out


# ------------------------------------------------------ local operators
class _LocalOperators:
    """Geometry-only pieces of the local problem on one extended block.

    The trial operator for a homogeneous tensor ``t`` is
    ``K + i w sum_j t_j M_j``; all blocks are split once into interior
    (``i``) and boundary (``b``) edges.
    """

    def __init__(self, mesh, ext, cfg):
        self.mesh = mesh
        self.cfg = cfg
        self.omega = cfg.omega
        self.C = curl_matrix(mesh)
        K = (self.C.T @ face_mass(mesh, cfg.mu) @ self.C).tocsr()
        self.ii = np.flatnonzero(~mesh.boundary_edges)
        self.bb = np.flatnonzero(mesh.boundary_edges)
        self.Eb = np.column_stack([boundary_values(mesh, l)[self.bb] for l in range(1, 13)])
        self.K_ii, self.K_ib = self._split(K)
        self.agg = aggregation_maps(ext, mesh)
        # data = P e for E, and P = -F C / (i w) for B
        self.P = {
            "E": self.agg.edge_matrix.tocsc(),
            "B": (self.agg.face_matrix @ self.C).tocsc() * (-1.0 / (1j * self.omega)),
        }
        self.coords = mesh.edge_midpoints[self.ii]
        self._basis = None

    def _split(self, M):
        Mi = M.tocsr()[self.ii]
        return Mi[:, self.ii].tocsr(), Mi[:, self.bb].tocsr()

    @property
    def basis(self):
        """Interior/boundary blocks of the six unit-tensor mass matrices."""
        if self._basis is None:
            self._basis = [self._split(m) for m in edge_mass_basis(self.mesh)]
        return self._basis

    def _solve(self, M_ii, M_ib):
        e = np.zeros((self.mesh.n_edges, 12), dtype=complex)
        e[self.bb] = self.Eb
        if self.ii.size == 0:
            return e, None
        A_ii = self.K_ii + 1j * self.omega * M_ii
        rhs = -(self.K_ib @ self.Eb + 1j * self.omega * (M_ib @ self.Eb))
        f = linsolve.factorize(A_ii, backend=self.cfg.backend, coords=self.coords)
        e[self.ii] = f.solve(rhs, extended=self.cfg.extended_precision)
        return e, f

    def solve_model(self, model):
        """Fields of a heterogeneous block model; returns (e_full, factorization)."""
        return self._solve(*self._split(edge_mass(self.mesh, model)))

    def solve_trial(self, t):
        """Fields of the homogeneous tensor ``t`` filling the block."""
        M_ii = sum(float(tj) * Mi for tj, (Mi, _) in zip(t, self.basis))
        M_ib = sum(float(tj) * Mb for tj, (_, Mb) in zip(t, self.basis))
        return self._solve(M_ii, M_ib)

    def fluxes(self, e):
        return -(self.C @ e) / (1j * self.omega)

    def data(self, e, kind):
        return (self.P[kind] @ e).T

    def jacobian(self, e, f, kind):
        """Derivatives (6, 12, m) of the trial data by the adjoint method.

        ``A_ii`` is complex symmetric, so one solve per datum column
        (``m = 12`` or ``6``) replaces 72 forward sensitivity solves.
        """
        m = 12 if kind == "E" else 6
        J = np.zeros((6, 12, m), dtype=complex)
        if f is None:
            return J
        P_i = self.P[kind][:, self.ii].toarray()
        W = f.solve(P_i.T, extended=self.cfg.extended_precision)
        ei, eb = e[self.ii], e[self.bb]
        for j, (Mi, Mb) in enumerate(self.basis):
            R = -1j * self.omega * (Mi @ ei + Mb @ eb)
            J[j] = R.T @ W
        return J


def _ops(ext, fine, cfg):
    mesh = fine if fine.shape_cells == ext.shape else ext.submesh(fine)
    return _LocalOperators(mesh, ext, cfg)


def _block_model(ext, fine, model):
    """Fine model restricted to the extended block (accepts either)."""
    model = model if isinstance(model, CellConductivityModel) else CellConductivityModel(model)
    n_ext = int(np.prod(ext.shape))
    if len(model) == n_ext:
        return model
    if len(model) != fine.n_cells:
        raise ValueError("model size matches neither the fine mesh nor the extended block")
    return model.subset(ext.cell_indices(fine))


# ------------------------------------------------------------ pipelines
def local_fields(ext, fine, model, cfg):
    """Solve the twelve local problems on the fine extended block.

    Parameters
    ----------
    ext : ExtendedDomain
    fine : TensorMesh3D
        Global fine mesh (or the extended block's mesh itself).
    model : CellConductivityModel or array_like
        Fine conductivities of the global mesh or of the block.
    cfg : UpscaleConfig

    Returns
    -------
    LocalFields
    """
    ops = _ops(ext, fine, cfg)
    e, _ = ops.solve_model(_block_model(ext, fine, model))
    return LocalFields(ops.mesh, e, ops.fluxes(e))


def extract_data(fields, agg, kind, provenance="fine"):
    """Integrate local fields onto the coarse edges (E) or faces (B)."""
    kind = _KINDS[kind]
    if kind == "E":
        v = (agg.edge_matrix @ fields.e).T
    else:
        v = (agg.face_matrix @ fields.b).T
    return LocalDataVector(kind, v, provenance)


def fine_data(ext, fine, model, cfg):
    """Local data of the fine model (``local_fields`` + ``extract_data``)."""
    ops = _ops(ext, fine, cfg)
    e, _ = ops.solve_model(_block_model(ext, fine, model))
    return LocalDataVector(cfg.kind, ops.data(e, cfg.kind), "fine")


def _as_params(t):
    if isinstance(t, SPDTensor):
        return t.as_array()
    t = np.asarray(t, dtype=float)
    return matrix_to_params(t) if t.shape == (3, 3) else t.reshape(6)


def coarse_trial_data(ext, fine, t, cfg):
    """Local data with the homogeneous tensor ``t`` filling the extended block."""
    ops = _ops(ext, fine, cfg)
    p = _as_params(t)
    _check_spd(p)
    e, _ = ops.solve_trial(p)
    return LocalDataVector(cfg.kind, ops.data(e, cfg.kind), "coarse")


def _check_spd(p):
    if np.linalg.eigvalsh(params_to_matrix(p))[0] <= 0:
        raise ValueError("trial tensor is not positive definite")


def sensitivities(ext, fine, t, cfg):
    """Derivatives of the trial data with respect to the six tensor parameters.

    Returns
    -------
    (2 * n_data, 6) float array
        Real parts of all data (row-major over ``(l, m)``) followed by the
        imaginary parts.
    """
    ops = _ops(ext, fine, cfg)
    p = _as_params(t)
    _check_spd(p)
    e, f = ops.solve_trial(p)
    return _stack_jacobian(ops.jacobian(e, f, cfg.kind))


def _stack(d):
    d = np.asarray(d).ravel()
    return np.concatenate([d.real, d.imag])


def _stack_jacobian(J):
    return np.column_stack([_stack(J[j]) for j in range(6)])


def misfit(trial, fine):
    """Half the sum of squared moduli of the data differences."""
    a = trial.values if isinstance(trial, LocalDataVector) else np.asarray(trial)
    b = fine.values if isinstance(fine, LocalDataVector) else np.asarray(fine)
    if isinstance(trial, LocalDataVector) and isinstance(fine, LocalDataVector) and trial.kind != fine.kind:
        raise ValueError("data kinds differ")
    if a.shape != b.shape:
        raise ValueError(f"data shapes differ: {a.shape} vs {b.shape}")
    r = a - b
    return 0.5 * float(np.sum(r.real**2 + r.imag**2))


def project_spd(m, bounds):
    """Clamp the eigenvalues of a symmetric 3x3 matrix into ``bounds``.

    Matrices already inside the bounds are returned unchanged, which makes
    the projection idempotent.
    """
    lo, hi = (float(v) for v in bounds)
    if not 0 < lo <= hi:
        raise ValueError(f"invalid eigenvalue bounds {bounds}")
    m = np.asarray(m, dtype=float)
    m = 0.5 * (m + m.T)
    w, V = np.linalg.eigh(m)
    slack = 1e-12
    if w[0] >= lo * (1 - slack) and w[-1] <= hi * (1 + slack):
        return SPDTensor.from_matrix(m)
    w = np.clip(w, lo, hi)
    out = (V * w) @ V.T
    return SPDTensor.from_matrix(0.5 * (out + out.T))


def default_bounds(block_model):
    """``[0.1 min, 10 max]`` of the fine eigenvalues in the block."""
    ev = block_model.eigenvalues()
    return 0.1 * float(ev.min()), 10.0 * float(ev.max())


# --------------------------------------------------------- optimisation
def _residual_weights(dfine, weighting):
    if weighting == "none":
        return None
    a = np.abs(dfine)
    # entries that vanish by symmetry carry only rounding noise
    floor = 1e-6 * max(a.max(), np.finfo(float).tiny)
    return _stack(1.0 / np.maximum(a, floor) + 0j)


def upscale_cell(ext, fine, model, cfg, k=None):
    """Fit a homogeneous SPD tensor to the local data of one coarse cell.

    Parameters
    ----------
    ext : ExtendedDomain
    fine : TensorMesh3D
    model : CellConductivityModel or array_like
        Fine model (global or restricted to the block).
    cfg : UpscaleConfig

    Returns
    -------
    tensor : SPDTensor
    report : UpscaleReport
    """
    k = ext.k if k is None else k
    block = _block_model(ext, fine, model)
    bounds = cfg.bounds if cfg.bounds is not None else default_bounds(block)
    inner = block.params()[ext.inner_cell_mask()]

    if cfg.homogeneous_shortcut and block.is_homogeneous():
        t = project_spd(params_to_matrix(block.params()[0]), bounds)
        return t, UpscaleReport(int(k), "homogeneous", 0, 0.0, 0.0, 0.0, True, "homogeneous block")

    ops = _ops(ext, fine, cfg)
    try:
        e, _ = ops.solve_model(block)
    except (linsolve.SingularMatrixError, MemoryError) as err:
        raise CellUpscaleError(f"coarse cell {k}: fine solve failed: {err}") from err
    dfine = ops.data(e, cfg.kind)
    w = _residual_weights(dfine, cfg.weighting)
    target = _stack(dfine)

    def evaluate(p):
        e, f = ops.solve_trial(p)
        r = _stack(ops.data(e, cfg.kind)) - target
        if w is not None:
            r = r * w
        return 0.5 * float(r @ r), r, (e, f)

    def jacobian(state):
        J = _stack_jacobian(ops.jacobian(*state, cfg.kind))
        return J * w[:, None] if w is not None else J

    mean = float(np.mean(inner[:, :3]))
    p = project_spd(mean * np.eye(3), bounds).as_array()
    try:
        c, r, state = evaluate(p)
        J = jacobian(state)
    except (linsolve.SingularMatrixError, MemoryError) as err:
        raise CellUpscaleError(f"coarse cell {k}: trial solve failed: {err}") from err
    c0 = c
    g = J.T @ r
    g0 = float(np.linalg.norm(g))
    status, message = "max_iter", ""
    it = 0
    gratio = 1.0 if g0 > 0 else 0.0
    if g0 == 0.0:
        status, message = "converged", "data are insensitive to the tensor"
    while status == "max_iter":
        if c == 0.0 or np.linalg.norm(g) <= cfg.gtol * g0:
            status = "converged"
            break
        if it >= cfg.max_iter:
            break
        # Gauss-Newton step with a tiny Levenberg shift against rank deficiency
        lam = 1e-12 * float(np.sum(J * J))
        Aug = np.vstack([J, np.sqrt(lam) * np.eye(6)])
        s = np.linalg.lstsq(Aug, np.r_[-r, np.zeros(6)], rcond=None)[0]
        alpha, accepted = 1.0, False
        for _ in range(cfg.max_backtracks + 1):
            pn = project_spd(params_to_matrix(p + alpha * s), bounds).as_array()
            dp = pn - p
            if not np.any(dp):
                break
            try:
                cn, rn, staten = evaluate(pn)
            except linsolve.SingularMatrixError:
                cn = np.inf
            if cn <= c + cfg.armijo * float(g @ dp):
                accepted = True
                break
            alpha *= cfg.backtrack
        it += 1
        if not accepted:
            status, message = "stalled", "line search found no decrease"
            break
        p, c, r, state = pn, cn, rn, staten
        J = jacobian(state)
        g = J.T @ r
        gratio = float(np.linalg.norm(g) / g0)
        log.debug("cell %s it %d misfit %.3e grad ratio %.2e step %.2e", k, it, c, gratio, alpha)
        if np.linalg.norm(dp) <= cfg.xtol * np.linalg.norm(p):
            status, message = "converged", "step below tolerance"
    converged = status == "converged"
    # a stalled search at a stationary point is as good as converged
    if status == "stalled" and gratio <= 1e-6:
        converged = True
    report = UpscaleReport(int(k), status, it, c0, c, gratio, converged, message)
    return SPDTensor(p), report


# ------------------------------------------------------------- driver
def _cell_key(ext, fine, block, cfg):
    h = hashlib.sha256()
    h.update(repr((ext.shape, ext.inner)).encode())
    sub = ext.submesh(fine)
    for a in sub.h:
        h.update(np.ascontiguousarray(a).tobytes())
    h.update(np.ascontiguousarray(block.values).tobytes())
    h.update(repr(sorted(cfg.to_dict().items())).encode())
    return h.hexdigest()


def _run_cell(args):
    ext, sub, block, cfg = args
    try:
        t, rep = upscale_cell(ext, sub, block, cfg)
        return t.params, rep, None
    except CellUpscaleError as err:
        return None, None, str(err)


def upscale_model(fine, model, spec, cfg, workers=1, on_failure="raise", memoize=True):
    """Upscale a fine model to one SPD tensor per coarse cell.

    Parameters
    ----------
    fine : TensorMesh3D
    model : CellConductivityModel or array_like
    spec : CoarseningSpec or (3,) int
    cfg : UpscaleConfig
    workers : int, default: 1
        Worker processes. The result does not depend on this number.
    on_failure : {"raise", "average"}
        Abort on a failed cell, or fall back to the isotropic arithmetic
        average of its fine cells with a warning.
    memoize : bool, default: True
        Solve cells with identical blocks (geometry, model, settings) once.

    Returns
    -------
    UpscaleResult
    """
    if on_failure not in ("raise", "average"):
        raise ValueError(f"unknown failure policy {on_failure!r}")
    spec = spec if isinstance(spec, CoarseningSpec) else CoarseningSpec(spec)
    model = model if isinstance(model, CellConductivityModel) else CellConductivityModel(model)
    if len(model) != fine.n_cells:
        raise ValueError(f"model has {len(model)} cells, mesh has {fine.n_cells}")
    coarse = coarsen(fine, spec)
    tasks, keys = {}, []
    for k in range(coarse.n_cells):
        ext = extended_domain(fine, spec, k, cfg.padding)
        block = model.subset(ext.cell_indices(fine))
        key = _cell_key(ext, fine, block, cfg) if memoize else str(k)
        keys.append(key)
        if key not in tasks:
            # origins do not enter the local problem; a zero origin keeps keys honest
            sub = TensorMesh3D(ext.submesh(fine).h)
            local = ExtendedDomain(k, ext.padding, tuple((0, n) for n in ext.shape), ext.inner)
            tasks[key] = (local, sub, block, cfg)
    order = list(tasks)
    if workers is None:
        workers = os.cpu_count() or 1
    if workers > 1 and len(order) > 1:
        with ProcessPoolExecutor(max_workers=int(workers)) as pool:
            outs = list(pool.map(_run_cell, [tasks[q] for q in order]))
    else:
        outs = []
        for n, q in enumerate(order, 1):
            outs.append(_run_cell(tasks[q]))
            log.info("upscaled %d/%d distinct cells", n, len(order))
    results = dict(zip(order, outs))

    params = np.empty((coarse.n_cells, 6))
    reports = []
    failures = []
    for k, key in enumerate(keys):
        p, rep, err = results[key]
        if err is not None:
            failures.append(k)
            if on_failure == "raise":
                raise CellUpscaleError(err)
            fine_idx = spec.fine_cells(fine, k)
            mean = float(np.mean(model.params()[fine_idx, :3]))
            warnings.warn(f"coarse cell {k} fell back to the arithmetic average: {err}", stacklevel=2)
            params[k] = (mean, mean, mean, 0.0, 0.0, 0.0)
            reports.append(UpscaleReport(k, "failed", 0, np.nan, np.nan, np.nan, False, err))
            continue
        params[k] = p
        reports.append(replace(rep, k=k))
    return UpscaleResult(CellConductivityModel(params, check=False), coarse, tuple(reports))


def average_model(fine, model, spec, rule="arithmetic"):
    """Isotropic averages of the fine cells in every coarse cell.

    ``rule`` is ``"arithmetic"``, ``"geometric"`` or ``"harmonic"``
    (volume weighted).
    """
    spec = spec if isinstance(spec, CoarseningSpec) else CoarseningSpec(spec)
    model = model if isinstance(model, CellConductivityModel) else CellConductivityModel(model)
    if not model.isotropic:
        raise ValueError("averaging needs an isotropic fine model")
    coarse = coarsen(fine, spec)
    out = np.empty(coarse.n_cells)
    vol = fine.cell_volumes
    for k in range(coarse.n_cells):
        idx = spec.fine_cells(fine, k)
        s, v = model.values[idx], vol[idx] / vol[idx].sum()
        if rule == "arithmetic":
            out[k] = v @ s
        elif rule == "geometric":
            out[k] = np.exp(v @ np.log(s))
        elif rule == "harmonic":
            out[k] = 1.0 / (v @ (1.0 / s))
        else:
            raise ValueError(f"unknown averaging rule {rule!r}")
    return CellConductivityModel(out)
