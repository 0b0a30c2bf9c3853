"""
Frequency-domain response of a layered earth to a vertical magnetic dipole.

Source and receiver are vertical dipoles at the same height ``h`` above
the surface, separated horizontally by ``r`` (horizontal coplanar). With
the quasi-static approximation and the ``exp(+i w t)`` convention, the
secondary vertical field is

    Hz_s = m / (4 pi) * int_0^inf r_TE(lam) exp(-2 lam h) lam^2 J0(lam r) dlam,

evaluated with a 201-point digital filter for the order-0 Hankel transform
(see ``data/key_201_2009_j0.txt``).
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np

from .models import MU_0

__all__ = [
    "LayeredModel",
    "LoopLoopSurvey",
    "HFieldDatum",
    "WellLogError",
    "hankel_filter",
    "rte",
    "hz_secondary",
    "hz_secondary_many",
    "skin_depth",
    "read_well_log",
    "parse_well_log",
    "log_to_layered_model",
]


class WellLogError(ValueError):
    """Malformed well-log CSV."""


@dataclass(frozen=True, eq=False)
class LayeredModel:
    """Horizontally layered earth below ``z = 0``.

    Parameters
    ----------
    thicknesses : (n - 1,) array_like
        Thicknesses (m) of all layers but the last, which is a halfspace.
    conductivities : (n,) array_like
        Layer conductivities (S/m), top to bottom.
    """

    thicknesses: np.ndarray
    conductivities: np.ndarray

    def __post_init__(self):
        t = np.atleast_1d(np.asarray(self.thicknesses, dtype=float)).ravel()
        s = np.atleast_1d(np.asarray(self.conductivities, dtype=float)).ravel()
        if s.size < 1:
            raise ValueError("a layered model needs at least one layer")
        if t.size != s.size - 1:
            raise ValueError(
                f"need {s.size - 1} thicknesses for {s.size} layers (last is a halfspace), got {t.size}"
            )
        if not np.all(np.isfinite(s)) or np.any(s <= 0):
            raise ValueError("layer conductivities must be positive")
        if not np.all(np.isfinite(t)) or np.any(t <= 0):
            raise ValueError("layer thicknesses must be positive")
        t.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "thicknesses", t)
        object.__setattr__(self, "conductivities", s)

    @classmethod
    def halfspace(cls, sigma):
        return cls([], [sigma])

    @property
    def n_layers(self):
        return self.conductivities.size

    @property
    def interfaces(self):
        """Depths (m) of the layer tops below the first one."""
        return np.cumsum(self.thicknesses)

    @property
    def tops(self):
        return np.r_[0.0, self.interfaces]

    def merged(self):
        """Equivalent model with adjacent equal layers merged."""
        return _merge(self)


def _merge(model):
    s = list(model.conductivities)
    t = list(model.thicknesses) + [np.inf]
    out_s, out_t = [s[0]], [t[0]]
    for sj, tj in zip(s[1:], t[1:]):
        if sj == out_s[-1]:
            out_t[-1] += tj
        else:
            out_s.append(sj)
            out_t.append(tj)
    return LayeredModel(out_t[:-1], out_s)


@dataclass(frozen=True)
class LoopLoopSurvey:
    """Horizontal-coplanar dipole pair above a layered earth.

    Parameters
    ----------
    height : float
        Source and receiver height above the surface (m).
    separation : float
        Horizontal source-receiver offset (m).
    frequencies : sequence of float
        Frequencies (Hz).
    moment : float, default: 1
        Dipole moment (A m^2).
    """

    height: float
    separation: float
    frequencies: tuple = (300.0,)
    moment: float = 1.0

    def __post_init__(self):
        f = tuple(float(v) for v in np.atleast_1d(self.frequencies))
        if not (self.height > 0 and self.separation > 0):
            raise ValueError("height and separation must be positive")
        if not f or any(not v > 0 for v in f):
            raise ValueError("frequencies must be positive")
        if not self.moment != 0:
            raise ValueError("dipole moment must be nonzero")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "height", float(self.height))
        object.__setattr__(self, "separation", float(self.separation))
        object.__setattr__(self, "moment", float(self.moment))

    def to_dict(self):
        return {
            "height": self.height,
            "separation": self.separation,
            "frequencies": list(self.frequencies),
            "moment": self.moment,
        }

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(d["height"], d["separation"], tuple(d["frequencies"]), d.get("moment", 1.0))
        except KeyError as err:
            raise ValueError(f"survey is missing {err}") from None


@dataclass(frozen=True)
class HFieldDatum:
    """Secondary Hz in percent of the free-space primary ``|Hz_p|``."""

    value: complex
    frequency: float

    @property
    def magnitude(self):
        return abs(self.value)


@lru_cache(maxsize=1)
def hankel_filter():
    """Abscissae and J0 weights of the 201-point Hankel filter.

    ``int_0^inf f(lam) J0(lam r) dlam ~= sum(f(base / r) * j0) / r``.
    """
    text = resources.files("emupscale").joinpath("data/key_201_2009_j0.txt").read_text()
    base, j0 = np.loadtxt(io.StringIO(text), unpack=True)
    base.setflags(write=False)
    j0.setflags(write=False)
    return base, j0


def _tanh(x):
    # stable for large positive real part
    q = np.exp(-2.0 * x)
    return (1.0 - q) / (1.0 + q)


def rte(lam, model, omega, mu=MU_0):
    """TE reflection coefficient of the layered earth.

    Parameters
    ----------
    lam : array_like
        Horizontal wavenumbers (1/m), positive.
    model : LayeredModel
    omega : float
        Angular frequency (rad/s).
    mu : float
        Permeability of all layers.

    Returns
    -------
    complex array, shape of ``lam``
    """
    lam = np.asarray(lam, dtype=float)
    iwm = 1j * omega * mu
    s = model.conductivities
    t = model.thicknesses
    # admittances in units of 1 / (i w mu)
    Y = np.sqrt(lam**2 + iwm * s[-1])
    for j in range(s.size - 2, -1, -1):
        u = np.sqrt(lam**2 + iwm * s[j])
        th = _tanh(u * t[j])
        Y = u * (Y + u * th) / (u + Y * th)
    return (lam - Y) / (lam + Y)


def _survey_kernel(survey):
    """Filter wavenumbers and the matching weights of the Hz integrand."""
    base, j0 = hankel_filter()
    lam = base / survey.separation
    return lam, np.exp(-2.0 * lam * survey.height) * lam**2 * j0


def _normalized(r_te, kernel, survey):
    """Secondary Hz in percent of ``|Hz_p|`` from filter-sampled ``r_TE``."""
    r, m = survey.separation, survey.moment
    hs = m / (4.0 * np.pi) * np.dot(r_te, kernel) / r
    hp = abs(m) / (4.0 * np.pi * r**3)
    return 100.0 * hs / hp


def hz_secondary_many(model, survey, frequencies=None):
    """Normalized secondary Hz (percent of ``|Hz_p|``) for several frequencies."""
    f = survey.frequencies if frequencies is None else np.atleast_1d(frequencies)
    lam, kernel = _survey_kernel(survey)
    out = np.empty(len(f), dtype=complex)
    for n, fn in enumerate(f):
        out[n] = _normalized(rte(lam, model, 2.0 * np.pi * fn), kernel, survey)
    return out


def hz_secondary(model, survey, f):
    """Secondary Hz at one frequency as an :class:`HFieldDatum`."""
    return HFieldDatum(complex(hz_secondary_many(model, survey, [f])[0]), float(f))


def skin_depth(sigma, f, mu=MU_0):
    """Skin depth ``sqrt(2 / (w mu sigma))`` in meters."""
    sigma = np.asarray(sigma, dtype=float)
    f = np.asarray(f, dtype=float)
    if np.any(sigma <= 0) or np.any(f <= 0):
        raise ValueError("conductivity and frequency must be positive")
    out = np.sqrt(2.0 / (2.0 * np.pi * f * mu * sigma))
    return float(out) if out.ndim == 0 else out


# ------------------------------------------------------------- well logs
LOG_COLUMNS = ("depth_m", "conductivity_S_per_m")


def parse_well_log(text, rtol=1e-6):
    """Parse a well-log CSV with columns ``depth_m, conductivity_S_per_m``.

    Returns
    -------
    depths, conductivities : float arrays
        Uniformly sampled, increasing depths.

    Raises
    ------
    WellLogError
        With the offending line number for malformed content.
    """
    rows = list(csv.reader(io.StringIO(text)))
    data = []
    header_seen = False
    for lineno, row in enumerate(rows, start=1):
        cells = [c.strip() for c in row]
        if not cells or all(c == "" for c in cells) or cells[0].startswith("#"):
            continue
        if not header_seen:
            if tuple(c.lower() for c in cells) != tuple(c.lower() for c in LOG_COLUMNS):
                raise WellLogError(
                    f"line {lineno}: expected header '{','.join(LOG_COLUMNS)}', got '{','.join(cells)}'"
                )
            header_seen = True
            continue
        if len(cells) != 2:
            raise WellLogError(f"line {lineno}: expected 2 columns, got {len(cells)}")
        try:
            d, s = float(cells[0]), float(cells[1])
        except ValueError:
            raise WellLogError(f"line {lineno}: could not parse numbers from '{','.join(cells)}'") from None
        if not (np.isfinite(d) and np.isfinite(s)):
            raise WellLogError(f"line {lineno}: non-finite value")
        if s <= 0:
            raise WellLogError(f"line {lineno}: conductivity must be positive, got {s}")
        if d < 0:
            raise WellLogError(f"line {lineno}: depth must be non-negative, got {d}")
        data.append((lineno, d, s))
    if not header_seen:
        raise WellLogError("line 1: empty well log")
    if len(data) < 2:
        raise WellLogError(f"line {len(rows)}: a well log needs at least two samples")
    depth = np.array([d for _, d, _ in data])
    sigma = np.array([s for _, _, s in data])
    step = depth[1] - depth[0]
    if not step > 0:
        raise WellLogError(f"line {data[1][0]}: depths must increase")
    for (lineno, _, _), dd in zip(data[1:], np.diff(depth)):
        if abs(dd - step) > rtol * step + 1e-9:
            raise WellLogError(
                f"line {lineno}: non-uniform sampling (step {dd:g} m, expected {step:g} m)"
            )
    return depth, sigma


def log_to_layered_model(depth, sigma):
    """Layered model with one layer per sample, boundaries at midpoints.

    Each sample occupies ``[d - dz/2, d + dz/2]``. Above the first sample
    the first conductivity extends to the surface (a separate layer if the
    log starts below ``dz/2``); below the last sample its conductivity
    continues as the basement halfspace.

    Returns
    -------
    model : LayeredModel
    logged : (2,) float
        Top and bottom depth of the logged interval.
    """
    depth = np.asarray(depth, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    dz = depth[1] - depth[0]
    top = depth[0] - 0.5 * dz
    if top < -1e-9 * dz:
        raise WellLogError(f"first sample at {depth[0]} m is closer to the surface than half a step")
    top = max(top, 0.0)
    bottom = depth[-1] + 0.5 * dz
    edges = np.r_[top, 0.5 * (depth[1:] + depth[:-1]), bottom]
    thick = np.diff(edges)
    cond = list(sigma)
    if top > 0:
        thick = np.r_[top, thick]
        cond = [sigma[0]] + cond
    cond.append(sigma[-1])
    return LayeredModel(thick, cond), np.array([top, bottom])


def read_well_log(path):
    """Read a well-log CSV file into ``(LayeredModel, logged_interval)``."""
    with open(path, newline="") as fh:
        depth, sigma = parse_well_log(fh.read())
    return log_to_layered_model(depth, sigma)
