"""Cell conductivity models (isotropic scalars or symmetric 3x3 tensors).

A symmetric tensor is stored as six parameters ``(s1, ..., s6)``::

    [[s1, s4, s5],
     [s4, s2, s6],
     [s5, s6, s3]]
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "CellConductivityModel",
    "params_to_matrix",
    "matrix_to_params",
    "TENSOR_BASIS",
    "MU_0",
    "AIR_CONDUCTIVITY",
]

MU_0 = 4e-7 * np.pi
AIR_CONDUCTIVITY = 1e-8

# (row, col) pairs of the six parameters
_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


def params_to_matrix(p):
    """Symmetric matrices from six-parameter vectors, shape ``(..., 6) -> (..., 3, 3)``."""
    p = np.asarray(p, dtype=float)
    m = np.empty(p.shape[:-1] + (3, 3))
    for n, (a, b) in enumerate(_PAIRS):
        m[..., a, b] = p[..., n]
        m[..., b, a] = p[..., n]
    return m


def matrix_to_params(m):
    """Inverse of :func:`params_to_matrix` (symmetric part is used)."""
    m = np.asarray(m, dtype=float)
    m = 0.5 * (m + np.swapaxes(m, -1, -2))
    return np.stack([m[..., a, b] for a, b in _PAIRS], axis=-1)


def _basis():
    out = np.zeros((6, 3, 3))
    for n, (a, b) in enumerate(_PAIRS):
        out[n, a, b] = out[n, b, a] = 1.0
    out.setflags(write=False)
    return out


#: derivative of the tensor with respect to each of the six parameters
TENSOR_BASIS = _basis()


class CellConductivityModel:
    """Per-cell conductivity, isotropic (``(n,)``) or tensor (``(n, 6)``).

    Parameters
    ----------
    values : array_like
        Either ``n_cells`` positive scalars or ``(n_cells, 6)`` tensor
        parameters (see module docstring).
    check : bool, default: True
        Validate positivity / positive definiteness.
    """

    def __init__(self, values, check=True):
        v = np.array(values, dtype=float)
        if v.ndim == 2 and v.shape[1] == 6:
            self.isotropic = False
        elif v.ndim == 1:
            self.isotropic = True
        else:
            raise ValueError(f"expected (n,) or (n, 6) conductivities, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("conductivities must be finite")
        v.setflags(write=False)
        self.values = v
        if check:
            self.validate()

    def __len__(self):
        return self.values.shape[0]

    def __repr__(self):
        kind = "isotropic" if self.isotropic else "tensor"
        return f"CellConductivityModel({kind}, n_cells={len(self)})"

    @classmethod
    def from_tensors(cls, matrices, check=True):
        return cls(matrix_to_params(matrices), check=check)

    def validate(self):
        if self.isotropic:
            bad = np.flatnonzero(self.values <= 0)
        else:
            bad = np.flatnonzero(self.eigenvalues()[:, 0] <= 0)
        if bad.size:
            raise ValueError(
                f"{bad.size} cell(s) are not positive definite (first offending cell {bad[0]})"
            )

    def params(self):
        """Tensor parameters ``(n, 6)`` (isotropic models are expanded)."""
        if not self.isotropic:
            return self.values
        out = np.zeros((len(self), 6))
        out[:, :3] = self.values[:, None]
        return out

    def tensors(self):
        return params_to_matrix(self.params())

    def eigenvalues(self):
        """Ascending eigenvalues per cell, shape ``(n, 3)``."""
        if self.isotropic:
            return np.repeat(self.values[:, None], 3, axis=1)
        return np.linalg.eigvalsh(self.tensors())

    def subset(self, index):
        return CellConductivityModel(self.values[index], check=False)

    def is_homogeneous(self):
        v = self.values
        return bool(np.all(v == v[0]))
