"""Chebyshev evaluation kernels with import-time backend selection.

Two interchangeable implementations of the batched tensor contraction exist:
the compiled extension :mod:`pdrenorm._cheb_ext` (built from Cython) and a
pure-numpy fallback.  The compiled one is used when importable unless the
environment variable ``PDRENORM_NO_EXT`` is set to a non-empty value.
``benchmarks/bench_kernels.py`` compares the two.
"""

from __future__ import annotations

import os

import numpy as np
from numpy.polynomial import chebyshev as _cheb

try:  # pragma: no cover - exercised only when the extension is built
    from . import _cheb_ext
except ImportError:  # pragma: no cover
    _cheb_ext = None

USING_EXT = _cheb_ext is not None and not os.environ.get("PDRENORM_NO_EXT")

BACKEND = "compiled" if USING_EXT else "numpy"


def cheb_vander(x: np.ndarray, degree: int) -> np.ndarray:
    """Chebyshev basis values T_0..T_degree at unit-interval points x."""
    return _cheb.chebvander(x, degree)


def _contract_numpy(coeffs: np.ndarray, vanders: list[np.ndarray]) -> np.ndarray:
    # Successive per-point contraction: after the first tensordot the point
    # axis leads, and each following axis is reduced with an einsum.
    out = np.tensordot(vanders[0], coeffs, axes=([1], [0]))
    for van in vanders[1:]:
        out = np.einsum("pi...,pi->p...", out, van)
    return out


def eval_tensor(coeffs: np.ndarray, unit_pts: np.ndarray) -> np.ndarray:
    """Evaluate a Chebyshev coefficient tensor at scattered unit points.

    Parameters
    ----------
    coeffs : ndarray, rank d
        Dense tensor of T_{i0} x ... x T_{id-1} coefficients.
    unit_pts : ndarray, shape (N, d)
        Points with every coordinate already rescaled to [-1, 1].
    """
    pts = np.ascontiguousarray(unit_pts, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != coeffs.ndim:
        raise ValueError("point array must have shape (N, rank(coeffs))")
    vanders = [
        np.ascontiguousarray(cheb_vander(pts[:, a], coeffs.shape[a] - 1))
        for a in range(coeffs.ndim)
    ]
    c = np.ascontiguousarray(coeffs, dtype=np.float64)
    if USING_EXT and 1 <= c.ndim <= 4:
        return _cheb_ext.contract_batch(c, vanders)
    return _contract_numpy(c, vanders)


def eval_grid(coeffs: np.ndarray, unit_axes: list[np.ndarray]) -> np.ndarray:
    """Evaluate on a tensor grid given per-axis unit coordinates.

    Separable contraction; returns the full value tensor with shape
    ``(len(unit_axes[0]), ..., len(unit_axes[-1]))``.
    """
    out = coeffs
    for a, ax in enumerate(unit_axes):
        van = cheb_vander(np.asarray(ax, dtype=np.float64), coeffs.shape[a] - 1)
        out = np.moveaxis(np.tensordot(van, out, axes=([1], [a])), 0, a)
    return out


def gauss_nodes(n: int) -> np.ndarray:
    """Chebyshev-Gauss nodes (first kind) on [-1, 1], ascending."""
    k = np.arange(n)
    return -np.cos((2.0 * k + 1.0) * np.pi / (2.0 * n))


def analysis_matrix(n: int) -> np.ndarray:
    """Matrix mapping values at gauss_nodes(n) to coefficients of T_0..T_{n-1}."""
    k = np.arange(n)
    theta = (2.0 * k + 1.0) * np.pi / (2.0 * n)
    # Nodes above are -cos(theta) = cos(pi - theta).
    mat = 2.0 / n * np.cos(np.outer(k, np.pi - theta))
    mat[0, :] *= 0.5
    return mat


def values_to_coeffs(values: np.ndarray) -> np.ndarray:
    """Tensor Chebyshev analysis: grid values at Gauss nodes -> coefficients."""
    out = values
    for a in range(values.ndim):
        mat = analysis_matrix(values.shape[a])
        out = np.moveaxis(np.tensordot(mat, out, axes=([1], [a])), 0, a)
    return out
