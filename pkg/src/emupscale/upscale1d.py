"""
Coarse-layer conductivities for layered-earth loop-loop data.

A coarse layer replaces the fine layers inside it by one conductivity,
chosen so that the predicted datum matches the fine-model datum at one
frequency. All other layers keep their fine values, so every coarse
layer is an independent scalar search over ``log(sigma)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .em1d import LayeredModel, _normalized, _survey_kernel, _tanh, hz_secondary_many
from .models import MU_0

__all__ = [
    "CoarseLayering",
    "LayerReport",
    "average_upscale",
    "average_values",
    "replace_layers",
    "upscale_layer",
    "upscale_log",
    "data_relative_error",
    "AVERAGE_METHODS",
]

AVERAGE_METHODS = ("arithmetic", "geometric", "harmonic")


@dataclass(frozen=True)
class CoarseLayering:
    """Coarse layer boundaries (depths in m, increasing)."""

    boundaries: tuple

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=float).ravel()
        if b.size < 2 or np.any(np.diff(b) <= 0) or b[0] < 0:
            raise ValueError("coarse boundaries must be non-negative and strictly increasing")
        object.__setattr__(self, "boundaries", tuple(float(v) for v in b))

    @classmethod
    def uniform(cls, top, bottom, thickness):
        n = int(round((bottom - top) / thickness))
        if n < 1 or not np.isclose(top + n * thickness, bottom, rtol=0, atol=1e-9 * thickness):
            raise ValueError("interval is not a whole number of coarse layers")
        return cls(top + thickness * np.arange(n + 1))

    @property
    def n_layers(self):
        return len(self.boundaries) - 1

    def fine_members(self, fine, k, atol=1e-9):
        """Indices and thicknesses of the fine layers inside coarse layer ``k``.

        Raises ``ValueError`` if the boundaries are not fine interfaces.
        """
        if not 0 <= k < self.n_layers:
            raise IndexError(f"coarse layer {k} out of range")
        tops = fine.tops
        bots = np.r_[fine.interfaces, np.inf]
        lo, hi = self.boundaries[k], self.boundaries[k + 1]
        for z in (lo, hi):
            if not (np.any(np.abs(tops - z) <= atol) or np.any(np.abs(bots - z) <= atol)):
                raise ValueError(f"coarse boundary {z} m is not a fine-layer interface")
        idx = np.flatnonzero((tops >= lo - atol) & (bots <= hi + atol))
        if idx.size == 0:
            raise ValueError(f"coarse layer {k} contains no fine layer")
        return idx, bots[idx] - tops[idx]


@dataclass(frozen=True)
class LayerReport:
    layer: int
    frequency: float
    sigma: float
    misfit: float
    iterations: int
    converged: bool
    method: str


def average_values(sigma, weights, method):
    """Weighted arithmetic, geometric or harmonic mean."""
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    s = np.asarray(sigma, dtype=float)
    if method == "arithmetic":
        return float(w @ s)
    if method == "geometric":
        return float(np.exp(w @ np.log(s)))
    if method == "harmonic":
        return float(1.0 / (w @ (1.0 / s)))
    raise ValueError(f"unknown averaging method {method!r}")


def replace_layers(fine, layering, values):
    """Fine model with every coarse layer ``k`` set to ``values[k]``.

    ``None`` entries keep the fine layers. Adjacent equal layers are merged.
    """
    s = np.array(fine.conductivities, dtype=float)
    for k, v in enumerate(values):
        if v is None:
            continue
        idx, _ = layering.fine_members(fine, k)
        s[idx] = v
    return LayeredModel(fine.thicknesses, s).merged()


def average_upscale(fine, layering, method):
    """Coarse model from thickness-weighted averages per coarse layer."""
    vals = []
    for k in range(layering.n_layers):
        idx, w = layering.fine_members(fine, k)
        vals.append(average_values(fine.conductivities[idx], w, method))
    return replace_layers(fine, layering, vals)


def _datum(model, survey, f):
    return complex(hz_secondary_many(model, survey, [f])[0])


class _LayerResponse:
    """Datum as a function of one block of adjacent fine layers.

    Everything below the block collapses into one admittance and the
    recursion through the layers above into one Mobius map per wavenumber,
    so each evaluation costs a single layer of the recursion.
    """

    def __init__(self, fine, idx, survey, f):
        self.survey = survey
        self.lam, self.kernel = _survey_kernel(survey)
        self.iwm = 1j * 2.0 * np.pi * float(f) * MU_0
        s, t = fine.conductivities, fine.thicknesses
        j0, j1 = int(idx[0]), int(idx[-1])
        if j1 >= s.size - 1 or np.any(np.diff(idx) != 1):
            raise ValueError("the block must be contiguous and above the basement")
        self.thickness = float(t[j0 : j1 + 1].sum())
        Y = self._u(s[-1])
        for j in range(s.size - 2, j1, -1):
            Y = self._step(Y, s[j], t[j])
        self.below = Y
        # map Y -> (a Y + b) / (c Y + d) through layers j0 - 1 ... 0
        a, b, c, d = (np.ones_like(Y), np.zeros_like(Y), np.zeros_like(Y), np.ones_like(Y))
        for j in range(j0):
            u = self._u(s[j])
            th = _tanh(u * t[j])
            a, b, c, d = a * u + b * th, a * u * u * th + b * u, c * u + d * th, c * u * u * th + d * u
            scale = np.maximum(np.abs(a), np.abs(c))
            a, b, c, d = a / scale, b / scale, c / scale, d / scale
        self.above = (a, b, c, d)

    def _u(self, sigma):
        return np.sqrt(self.lam**2 + self.iwm * sigma)

    def _step(self, Y, sigma, t):
        u = self._u(sigma)
        th = _tanh(u * t)
        return u * (Y + u * th) / (u + Y * th)

    def __call__(self, sigma):
        Y = self._step(self.below, sigma, self.thickness)
        a, b, c, d = self.above
        Y = (a * Y + b) / (c * Y + d)
        r_te = (self.lam - Y) / (self.lam + Y)
        return complex(_normalized(r_te, self.kernel, self.survey))


def upscale_layer(fine, layering, k, survey, f, d_fine=None, max_iter=100, xtol=1e-8, n_grid=41):
    """Conductivity of coarse layer ``k`` that best reproduces the fine datum.

    The misfit ``0.5 |d(sigma) - d_fine|^2`` is scanned on a log grid over
    ``[0.1 min, 10 max]`` of the layer's fine conductivities (plus the three
    averages), then refined around the best grid point with a safeguarded
    Newton iteration on the derivative in ``log(sigma)`` (central
    differences, relative step 1e-4). When the derivative does not change
    sign across the bracket, a bounded golden-section search is used.

    Returns
    -------
    sigma : float
    report : LayerReport
    """
    idx, w = layering.fine_members(fine, k)
    s_layer = fine.conductivities[idx]
    if d_fine is None:
        d_fine = _datum(fine, survey, f)
    lo, hi = np.log(0.1 * s_layer.min()), np.log(10.0 * s_layer.max())
    response = _LayerResponse(fine, idx, survey, f)

    cache = {}

    def phi(x):
        if x not in cache:
            cache[x] = 0.5 * abs(response(np.exp(x)) - d_fine) ** 2
        return cache[x]

    if np.all(s_layer == s_layer[0]):
        x = float(np.log(s_layer[0]))
        return float(s_layer[0]), LayerReport(k, float(f), float(s_layer[0]), phi(x), 0, True, "homogeneous")

    avgs = [np.log(average_values(s_layer, w, m)) for m in AVERAGE_METHODS]
    grid = np.linspace(lo, hi, n_grid)
    cand = np.r_[grid, avgs]
    vals = np.array([phi(float(x)) for x in cand])
    best = int(np.argmin(vals))
    x_best = float(cand[best])
    # bracket on the sorted candidate set
    order = np.sort(cand)
    pos = int(np.searchsorted(order, x_best))
    a = float(order[max(pos - 1, 0)])
    b = float(order[min(pos + 1, order.size - 1)])

    h = 1e-4

    def grad(x):
        return (phi(x + h) - phi(x - h)) / (2 * h)

    def curv(x):
        return (phi(x + h) - 2 * phi(x) + phi(x - h)) / h**2

    ga, gb = grad(a), grad(b)
    x, it, converged, method = x_best, 0, False, "newton"
    if a < b and ga < 0 < gb:
        for it in range(1, max_iter + 1):
            g = grad(x)
            if g == 0.0:
                converged = True
                break
            if g < 0:
                a = x
            else:
                b = x
            c2 = curv(x)
            step = -g / c2 if c2 > 0 else np.inf
            xn = x + step
            if not (a < xn < b):
                xn = 0.5 * (a + b)
            dx = abs(xn - x)
            x = xn
            if dx < xtol or b - a < xtol:
                converged = True
                break
    elif a < b:
        method = "golden"
        res = minimize_scalar(phi, bounds=(a, b), method="bounded", options=dict(xatol=xtol, maxiter=max_iter))
        x, it, converged = float(res.x), int(res.nit), bool(res.success)
    else:
        converged = True
    # the result is never worse than any scanned candidate
    if phi(x) > vals[best]:
        x = x_best
    return float(np.exp(x)), LayerReport(k, float(f), float(np.exp(x)), phi(x), it, converged, method)


def upscale_log(fine, layering, survey, frequencies=None):
    """Optimized coarse model per frequency.

    Returns
    -------
    models : list of LayeredModel
        One per frequency.
    reports : list of list of LayerReport
    """
    freqs = survey.frequencies if frequencies is None else tuple(np.atleast_1d(frequencies))
    d_fine = hz_secondary_many(fine, survey, freqs)
    models, reports = [], []
    for f, df in zip(freqs, d_fine):
        vals, reps = [], []
        for k in range(layering.n_layers):
            s, rep = upscale_layer(fine, layering, k, survey, f, d_fine=complex(df))
            vals.append(s)
            reps.append(rep)
        models.append(replace_layers(fine, layering, vals))
        reports.append(reps)
    return models, reports


def data_relative_error(d_fine, d_coarse):
    """``100 * || |d_f| - |d_c| ||_2 / || |d_f| ||_2`` in percent."""
    a = np.abs(np.atleast_1d(np.asarray(d_fine)))
    b = np.abs(np.atleast_1d(np.asarray(d_coarse)))
    if a.shape != b.shape:
        raise ValueError(f"data shapes differ: {a.shape} vs {b.shape}")
    den = np.linalg.norm(a)
    if den == 0:
        raise ZeroDivisionError("fine data have zero norm")
    return float(100.0 * np.linalg.norm(a - b) / den)
