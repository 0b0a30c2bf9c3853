"""
Seeded synthetic inputs: lognormal well logs and block-in-background 3D models.

Both generators take an explicit seed and draw from ``numpy.random.default_rng``
only, so a fixed seed gives bitwise-identical output.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import AIR_CONDUCTIVITY

__all__ = ["LogSpec", "lognormal_log", "Prism", "BlockModelSpec", "block_model", "contrasted_log"]


@dataclass(frozen=True)
class LogSpec:
    """Parameters of a synthetic conductivity log.

    Parameters
    ----------
    n_samples : int
        Number of samples (default 320, i.e. 80 m at 0.25 m).
    spacing : float
        Sample spacing in m.
    top : float
        Depth of the first sample in m.
    median : float
        Median conductivity in S/m.
    std_log10 : float
        Standard deviation of ``log10(sigma)``. Zero gives a constant log.
    correlation_length : float
        e-folding length (m) of the AR(1) correlation of ``log10(sigma)``.
    decades : float
        Total width of the allowed range, centred on the median in log10.
        Values are clipped into it.
    """

    n_samples: int = 320
    spacing: float = 0.25
    top: float = 0.125
    median: float = 1e-2
    std_log10: float = 0.8
    correlation_length: float = 1.0
    decades: float = 4.0

    def __post_init__(self):
        if int(self.n_samples) < 2:
            raise ValueError("a log needs at least two samples")
        if not (self.spacing > 0 and self.median > 0 and self.decades > 0):
            raise ValueError("spacing, median and decades must be positive")
        if self.std_log10 < 0 or self.correlation_length < 0:
            raise ValueError("std_log10 and correlation_length must be non-negative")
        if self.top < 0.5 * self.spacing - 1e-12:
            raise ValueError("first sample must be at least half a spacing below the surface")


def lognormal_log(spec=LogSpec(), seed=0):
    """Stationary AR(1) lognormal conductivity log.

    Returns
    -------
    depth, sigma : (n_samples,) float arrays
    """
    rng = np.random.default_rng(seed)
    n = int(spec.n_samples)
    depth = spec.top + spec.spacing * np.arange(n)
    rho = np.exp(-spec.spacing / spec.correlation_length) if spec.correlation_length > 0 else 0.0
    z = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = z[0]
    innov = np.sqrt(1.0 - rho * rho)
    for i in range(1, n):
        x[i] = rho * x[i - 1] + innov * z[i]
    half = 0.5 * spec.decades
    logs = np.clip(spec.std_log10 * x, -half, half) + np.log10(spec.median)
    return depth, 10.0**logs


def contrasted_log(n_samples=320, spacing=0.25, period=2.5, high=0.1, low=1e-4):
    """Deterministic log alternating between two conductivities every ``period`` m."""
    depth = 0.5 * spacing + spacing * np.arange(n_samples)
    sigma = np.where(np.floor(depth / period) % 2 == 0, high, low)
    return depth, sigma


@dataclass(frozen=True)
class Prism:
    """Axis-aligned box ``[lo, hi]`` (m) of constant conductivity."""

    lo: tuple
    hi: tuple
    conductivity: float

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != 3 or len(hi) != 3 or any(b <= a for a, b in zip(lo, hi)):
            raise ValueError("prism needs three increasing (lo, hi) pairs")
        if not self.conductivity > 0:
            raise ValueError("prism conductivity must be positive")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "conductivity", float(self.conductivity))

    def to_dict(self):
        return {"lo": list(self.lo), "hi": list(self.hi), "conductivity": self.conductivity}


@dataclass(frozen=True)
class BlockModelSpec:
    """Prisms in a uniform background below a flat air layer.

    ``surface`` is the elevation (m) of the air-earth interface; cells whose
    centre lies above it get ``air``.
    """

    background: float = 4.5e-3
    prisms: tuple = ()
    surface: float | None = None
    air: float = AIR_CONDUCTIVITY

    def __post_init__(self):
        if not (self.background > 0 and self.air > 0):
            raise ValueError("background and air conductivities must be positive")
        object.__setattr__(
            self, "prisms", tuple(p if isinstance(p, Prism) else Prism(**p) for p in self.prisms)
        )

    def to_dict(self):
        return {
            "background": self.background,
            "prisms": [p.to_dict() for p in self.prisms],
            "surface": self.surface,
            "air": self.air,
        }


def block_model(mesh, spec, jitter=0.0, seed=0):
    """Cell conductivities of a block model on ``mesh``.

    Prisms are painted in order (later ones win) on cells whose centre
    falls inside. ``jitter > 0`` multiplies every earth cell by
    ``10**(jitter * N(0, 1))`` with a seeded generator, which breaks the
    piecewise-constant structure for tests that need texture.
    """
    c = mesh.cell_centers
    sigma = np.full(mesh.n_cells, float(spec.background))
    for p in spec.prisms:
        inside = np.all((c >= np.array(p.lo)) & (c <= np.array(p.hi)), axis=1)
        sigma[inside] = p.conductivity
    if jitter > 0:
        rng = np.random.default_rng(seed)
        sigma *= 10.0 ** (jitter * rng.standard_normal(mesh.n_cells))
    if spec.surface is not None:
        sigma[c[:, 2] > spec.surface] = spec.air
    return sigma
