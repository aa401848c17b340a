"""Arithmetic on analytic functions over axis-aligned boxes.

Functions are stored as dense tensors of Chebyshev coefficients on axes
rescaled to the box.  Analyticity of the maps manipulated here makes the
coefficients decay geometrically, which is also the truncation diagnostic:
every projection can be validated pointwise against the callable it came
from.  All values are immutable after construction and every operation is a
pure function of its inputs.

Defaults follow the package-wide policy: degree 16 per axis up to three
dimensions and 10 per axis in four, absolute sup-norm tolerance 1e-10,
composition validation on 33 points per axis (9 in four dimensions), and a
1e-9 clamp slack for inner ranges that graze the outer domain.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import chebyshev as _cheb
from scipy.optimize import brentq

from . import _kernels
from .exceptions import (
    NotMonotone,
    PointOutsideDomain,
    RangeEscapesDomain,
    TruncationOverflow,
)

TOLERANCE = 1e-10
EVAL_SLACK = 1e-12
CLAMP_SLACK = 1e-9


def default_degree(dim: int) -> int:
    return 16 if dim <= 3 else 10


def validation_points(dim: int) -> int:
    return 33 if dim <= 3 else 9


@dataclass(frozen=True)
class Box:
    """Axis-aligned box: the common domain of a family of functions."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi) or not lo:
            raise ValueError("lower/upper must be non-empty and equal length")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError("need lower[i] < upper[i] on every axis")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def cube(cls, dim: int, lo: float = -1.0, hi: float = 1.0) -> "Box":
        return cls((lo,) * dim, (hi,) * dim)

    @classmethod
    def interval(cls, lo: float, hi: float) -> "Box":
        return cls((lo,), (hi,))

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def widths(self) -> np.ndarray:
        return np.asarray(self.upper) - np.asarray(self.lower)

    def to_unit(self, pts: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.lower)
        return 2.0 * (pts - lo) / self.widths - 1.0

    def from_unit(self, unit: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.lower)
        return lo + 0.5 * (unit + 1.0) * self.widths

    def contains(self, pts: np.ndarray, slack: float = 0.0) -> bool:
        pts = np.atleast_2d(pts)
        lo = np.asarray(self.lower) - slack
        hi = np.asarray(self.upper) + slack
        return bool(np.all(pts >= lo) and np.all(pts <= hi))

    def clamp(self, pts: np.ndarray) -> np.ndarray:
        return np.clip(pts, np.asarray(self.lower), np.asarray(self.upper))

    def grid(self, n_per_axis: int) -> np.ndarray:
        """Uniform lattice of n_per_axis**dim points, flattened to (N, dim)."""
        axes = [np.linspace(lo, hi, n_per_axis) for lo, hi in zip(self.lower, self.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def close_to(self, other: "Box", tol: float = 1e-12) -> bool:
        return (
            self.dim == other.dim
            and max(abs(a - b) for a, b in zip(self.lower, other.lower)) <= tol
            and max(abs(a - b) for a, b in zip(self.upper, other.upper)) <= tol
        )


class AnalyticFunction:
    """Truncated Chebyshev tensor representation of a scalar function."""

    __slots__ = ("box", "coeffs", "tolerance")

    def __init__(self, box: Box, coeffs: np.ndarray, tolerance: float = TOLERANCE):
        coeffs = np.ascontiguousarray(coeffs, dtype=np.float64)
        if coeffs.ndim != box.dim:
            raise ValueError("coefficient tensor rank must equal box dimension")
        coeffs.flags.writeable = False
        self.box = box
        self.coeffs = coeffs
        self.tolerance = float(tolerance)

    # -- construction -------------------------------------------------------

    @classmethod
    def from_callable(cls, fn, box: Box, degrees=None, tolerance: float = TOLERANCE):
        """Project ``fn`` (vectorized over an (N, dim) array) onto the basis."""
        degrees = _normalize_degrees(degrees, box.dim)
        axes_unit = [_kernels.gauss_nodes(d + 1) for d in degrees]
        pts = _mesh_points(box, axes_unit)
        values = np.asarray(fn(pts), dtype=np.float64).reshape([d + 1 for d in degrees])
        return cls(box, _kernels.values_to_coeffs(values), tolerance)

    @classmethod
    def constant(cls, value: float, box: Box, tolerance: float = TOLERANCE):
        coeffs = np.zeros((1,) * box.dim)
        coeffs[(0,) * box.dim] = value
        return cls(box, coeffs, tolerance)

    @classmethod
    def zero(cls, box: Box, tolerance: float = TOLERANCE):
        return cls.constant(0.0, box, tolerance)

    @classmethod
    def coordinate(cls, box: Box, axis: int, tolerance: float = TOLERANCE):
        """The function w -> w[axis]."""
        if not 0 <= axis < box.dim:
            raise IndexError("axis out of range")
        shape = [1] * box.dim
        shape[axis] = 2
        coeffs = np.zeros(shape)
        mid = 0.5 * (box.lower[axis] + box.upper[axis])
        half = 0.5 * (box.upper[axis] - box.lower[axis])
        idx0 = [0] * box.dim
        idx1 = list(idx0)
        idx1[axis] = 1
        coeffs[tuple(idx0)] = mid
        coeffs[tuple(idx1)] = half
        return cls(box, coeffs, tolerance)

    # -- basic queries -------------------------------------------------------

    @property
    def dim(self) -> int:
        return self.box.dim

    @property
    def degrees(self) -> tuple:
        return tuple(n - 1 for n in self.coeffs.shape)

    def __call__(self, pts, slack: float = EVAL_SLACK):
        """Evaluate at one point (dim,) or a batch (N, dim)."""
        arr = np.asarray(pts, dtype=np.float64)
        single = arr.ndim == 1
        arr = np.atleast_2d(arr)
        if arr.shape[1] != self.dim:
            raise ValueError(f"expected points of dimension {self.dim}")
        if not self.box.contains(arr, slack=slack):
            raise PointOutsideDomain(
                f"point outside domain {self.box.lower}..{self.box.upper}"
            )
        unit = np.clip(self.box.to_unit(arr), -1.0, 1.0)
        out = _kernels.eval_tensor(self.coeffs, unit)
        return float(out[0]) if single else out

    def eval_grid(self, axes: list) -> np.ndarray:
        """Evaluate on the tensor grid spanned by per-axis coordinate arrays."""
        unit = [
            np.clip(
                2.0 * (np.asarray(ax) - self.box.lower[a])
                / (self.box.upper[a] - self.box.lower[a])
                - 1.0,
                -1.0,
                1.0,
            )
            for a, ax in enumerate(axes)
        ]
        return _kernels.eval_grid(self.coeffs, unit)

    def sup_norm(self, n_per_axis: int = 17, box: Box | None = None) -> float:
        """Sampled sup norm, by default over the function's own domain."""
        box = box or self.box
        axes = [np.linspace(lo, hi, n_per_axis) for lo, hi in zip(box.lower, box.upper)]
        return float(np.abs(self.eval_grid(axes)).max())

    # -- calculus and algebra -------------------------------------------------

    def partial(self, axis: int) -> "AnalyticFunction":
        """Exact derivative of the truncated series along one axis."""
        if not 0 <= axis < self.dim:
            raise IndexError("axis out of range")
        if self.coeffs.shape[axis] == 1:
            return AnalyticFunction.zero(self.box, self.tolerance)
        der = _cheb.chebder(self.coeffs, m=1, axis=axis)
        scale = 2.0 / (self.box.upper[axis] - self.box.lower[axis])
        return AnalyticFunction(self.box, der * scale, self.tolerance)

    def gradient(self) -> list:
        return [self.partial(a) for a in range(self.dim)]

    def _binary(self, other, op):
        if not self.box.close_to(other.box):
            raise ValueError("operands must share a domain box")
        shape = tuple(
            max(a, b) for a, b in zip(self.coeffs.shape, other.coeffs.shape)
        )
        a = np.zeros(shape)
        b = np.zeros(shape)
        a[tuple(slice(0, s) for s in self.coeffs.shape)] = self.coeffs
        b[tuple(slice(0, s) for s in other.coeffs.shape)] = other.coeffs
        return AnalyticFunction(self.box, op(a, b), min(self.tolerance, other.tolerance))

    def __add__(self, other):
        if np.isscalar(other):
            coeffs = np.array(self.coeffs)
            coeffs[(0,) * self.dim] += other
            return AnalyticFunction(self.box, coeffs, self.tolerance)
        return self._binary(other, lambda a, b: a + b)

    __radd__ = __add__

    def __sub__(self, other):
        if np.isscalar(other):
            return self + (-other)
        return self._binary(other, lambda a, b: a - b)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return AnalyticFunction(self.box, -self.coeffs, self.tolerance)

    def __mul__(self, other):
        if np.isscalar(other):
            return AnalyticFunction(self.box, self.coeffs * other, self.tolerance)
        if not self.box.close_to(other.box):
            raise ValueError("operands must share a domain box")
        # Product degree is the sum of the degrees, so this projection is exact.
        degrees = tuple(
            d1 + d2 for d1, d2 in zip(self.degrees, other.degrees)
        )
        return AnalyticFunction.from_callable(
            lambda pts: self(pts, slack=CLAMP_SLACK) * other(pts, slack=CLAMP_SLACK),
            self.box,
            degrees,
            min(self.tolerance, other.tolerance),
        )

    __rmul__ = __mul__

    def reproject(self, degrees=None, box: Box | None = None) -> "AnalyticFunction":
        box = box or self.box
        return AnalyticFunction.from_callable(
            lambda pts: self(pts, slack=CLAMP_SLACK), box, degrees, self.tolerance
        )

    # -- serialization --------------------------------------------------------

    def to_text(self) -> str:
        """Documented text format: header lines, then row-major coefficients
        with 17 significant digits, one per line."""
        buf = io.StringIO()
        buf.write("pdrenorm-analytic-function 1\n")
        buf.write(f"dim {self.dim}\n")
        buf.write("degrees " + " ".join(str(d) for d in self.degrees) + "\n")
        buf.write("lower " + " ".join(f"{v:.17g}" for v in self.box.lower) + "\n")
        buf.write("upper " + " ".join(f"{v:.17g}" for v in self.box.upper) + "\n")
        buf.write(f"tolerance {self.tolerance:.17g}\n")
        for v in self.coeffs.ravel(order="C"):
            buf.write(f"{v:.17g}\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "AnalyticFunction":
        lines = text.strip().splitlines()
        if not lines[0].startswith("pdrenorm-analytic-function"):
            raise ValueError("not an analytic-function file")
        dim = int(lines[1].split()[1])
        degrees = [int(t) for t in lines[2].split()[1:]]
        lower = [float(t) for t in lines[3].split()[1:]]
        upper = [float(t) for t in lines[4].split()[1:]]
        tolerance = float(lines[5].split()[1])
        flat = np.array([float(t) for t in lines[6:]])
        shape = tuple(d + 1 for d in degrees)
        if dim != len(degrees) or flat.size != int(np.prod(shape)):
            raise ValueError("malformed analytic-function file")
        return cls(Box(tuple(lower), tuple(upper)), flat.reshape(shape), tolerance)


class VectorFunction:
    """Ordered components sharing one domain box; empty vectors are allowed."""

    __slots__ = ("components", "box")

    def __init__(self, components, box: Box | None = None):
        components = list(components)
        if components:
            box = components[0].box
            for c in components[1:]:
                if not c.box.close_to(box):
                    raise ValueError("components must share a domain box")
        elif box is None:
            raise ValueError("empty VectorFunction needs an explicit box")
        self.components = components
        self.box = box

    @classmethod
    def zero(cls, box: Box, m: int):
        return cls([AnalyticFunction.zero(box) for _ in range(m)], box)

    def __len__(self):
        return len(self.components)

    def __getitem__(self, j):
        return self.components[j]

    def __call__(self, pts, slack: float = EVAL_SLACK) -> np.ndarray:
        arr = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        if not self.components:
            return np.zeros((arr.shape[0], 0))
        return np.stack([c(arr, slack=slack) for c in self.components], axis=-1)

    def partial(self, axis: int) -> "VectorFunction":
        return VectorFunction([c.partial(axis) for c in self.components], self.box)

    def sup_norm(self, n_per_axis: int = 17, box: Box | None = None) -> float:
        if not self.components:
            return 0.0
        return max(c.sup_norm(n_per_axis, box) for c in self.components)


# -- module-level operations ----------------------------------------------


def project(fn, box: Box, degrees=None, tolerance: float = TOLERANCE) -> AnalyticFunction:
    """Alias for AnalyticFunction.from_callable."""
    return AnalyticFunction.from_callable(fn, box, degrees, tolerance)


def compose(
    outer: AnalyticFunction,
    inner,
    degrees=None,
    tolerance: float | None = None,
    clamp_slack: float = CLAMP_SLACK,
    validate: bool = True,
) -> AnalyticFunction:
    """Project ``outer`` composed with a list of inner functions.

    The inner functions share one domain; the result lives there.  The sampled
    inner range must stay inside ``outer``'s box: excursions below
    ``clamp_slack`` are clamped to the boundary, larger ones raise
    :class:`RangeEscapesDomain`.  The projection is validated pointwise on a
    lattice unless ``validate`` is False; a residual above the tolerance
    warns, above 10x it raises :class:`TruncationOverflow`.
    """
    inner = list(inner)
    if len(inner) != outer.dim:
        raise ValueError("need one inner function per outer axis")
    box = inner[0].box
    for g in inner[1:]:
        if not g.box.close_to(box):
            raise ValueError("inner functions must share a domain box")
    tolerance = outer.tolerance if tolerance is None else tolerance

    def chained(pts):
        stacked = np.stack([g(pts, slack=clamp_slack) for g in inner], axis=-1)
        if not outer.box.contains(stacked, slack=clamp_slack):
            raise RangeEscapesDomain("sampled inner range leaves the outer domain")
        return outer(outer.box.clamp(stacked), slack=clamp_slack)

    if degrees is None:
        base = default_degree(box.dim)
        degrees = tuple(
            max(base, *(g.degrees[a] for g in inner)) for a in range(box.dim)
        )
    result = AnalyticFunction.from_callable(chained, box, degrees, tolerance)
    if validate:
        pts = box.grid(validation_points(box.dim))
        resid = float(np.abs(result(pts) - chained(pts)).max())
        if resid > 10.0 * tolerance:
            raise TruncationOverflow(
                f"composition residual {resid:.3e} exceeds 10x tolerance {tolerance:.1e}"
            )
        if resid > tolerance:
            warnings.warn(
                f"composition residual {resid:.3e} above tolerance {tolerance:.1e}",
                stacklevel=2,
            )
    return result


def invert_monotone_1d(
    f: AnalyticFunction,
    branch: tuple,
    degrees=None,
    tolerance: float | None = None,
    yrange: tuple | None = None,
) -> AnalyticFunction:
    """Inverse of a strictly monotone 1-D branch, projected on f(branch).

    Monotonicity is checked by sampling f' on the branch; each Chebyshev node
    of the result is solved with bracketed root finding, so the construction
    is deterministic.  When ``degrees`` is omitted the degree is escalated
    until the round-trip residual meets the tolerance (branches ending near a
    critical point put a square-root singularity next to the output domain,
    which slows the coefficient decay).  ``yrange`` restricts the output
    domain to a subinterval of f(branch) for callers that only need part of
    the range.
    """
    if f.dim != 1:
        raise ValueError("inversion requires a 1-D function")
    lo, hi = float(branch[0]), float(branch[1])
    if not (f.box.lower[0] - EVAL_SLACK <= lo < hi <= f.box.upper[0] + EVAL_SLACK):
        raise ValueError("branch must be a nontrivial subinterval of the domain")
    tolerance = f.tolerance if tolerance is None else tolerance
    fprime = f.partial(0)
    xs = np.linspace(lo, hi, 257)
    dvals = fprime(xs[:, None])
    if dvals.max() > 0 and dvals.min() < 0 or np.abs(dvals).min() == 0.0:
        raise NotMonotone("f' changes sign on the requested branch")
    f_lo = f(np.array([[lo]]))[0]
    f_hi = f(np.array([[hi]]))[0]
    ylo, yhi = min(f_lo, f_hi), max(f_lo, f_hi)
    if yrange is not None:
        if yrange[0] < ylo - EVAL_SLACK or yrange[1] > yhi + EVAL_SLACK:
            raise ValueError("yrange must lie inside f(branch)")
        ylo, yhi = max(ylo, float(yrange[0])), min(yhi, float(yrange[1]))
    ybox = Box.interval(ylo, yhi)

    def solve_one(y):
        return brentq(
            lambda x: f(np.array([[x]]))[0] - y, lo, hi, xtol=1e-14, rtol=8.9e-16
        )

    def g_of(pts):
        ys = np.clip(pts[:, 0], ylo, yhi)
        return np.array([solve_one(y) for y in ys])

    ladder = [degrees] if degrees is not None else [16, 32, 64, 128, 256, 512]
    resid = np.inf
    g = None
    for deg in ladder:
        g = AnalyticFunction.from_callable(g_of, ybox, deg, tolerance)
        ys = np.linspace(ylo, yhi, 257)[:, None]
        gx = np.clip(g(ys), lo, hi)[:, None]
        resid = float(np.abs(f(gx, slack=1e-9) - ys[:, 0]).max())
        if resid <= tolerance:
            return g
    if resid > 10.0 * max(tolerance, 1e-12):
        raise TruncationOverflow(f"inverse residual {resid:.3e} too large")
    warnings.warn(f"inverse residual {resid:.3e} above tolerance", stacklevel=2)
    return g


def _normalize_degrees(degrees, dim: int):
    if degrees is None:
        degrees = default_degree(dim)
    if np.isscalar(degrees):
        degrees = (int(degrees),) * dim
    degrees = tuple(int(d) for d in degrees)
    if len(degrees) != dim or any(d < 0 for d in degrees):
        raise ValueError("bad degrees")
    return degrees


def _mesh_points(box: Box, axes_unit) -> np.ndarray:
    axes = [
        box.lower[a] + 0.5 * (np.asarray(u) + 1.0) * (box.upper[a] - box.lower[a])
        for a, u in enumerate(axes_unit)
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)
