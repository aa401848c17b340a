"""One-dimensional period-doubling renormalization.

A unimodal map is kept on the reference interval I = [-1, 1] but represented
on a padded interval so that compositions arising later (branch inversions of
the higher-dimensional operator) can evaluate marginally outside I.  The
normalization is the standard one: a single interior critical point, critical
value +1 for maps with a maximum.

The renormalization interval J is bounded by q = f^2(c) and the point q_hat on
the other side of c at the same f-level (f(q_hat) = f(q)); the affine change A
maps J onto I with A(q) = +1 so the critical value stays normalized level to
level.  The scaling factor is sigma = |J| / |I|.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import funcspace as fs
from .exceptions import NoConvergence, NotRenormalizable

PAD = 0.2
REF_INTERVAL = (-1.0, 1.0)


def padded_interval(pad: float = PAD) -> fs.Box:
    return fs.Box.interval(REF_INTERVAL[0] - pad, REF_INTERVAL[1] + pad)


class UnimodalMap:
    """Analytic unimodal map on I = [-1, 1] with one interior critical point.

    ``containment_slack`` loosens the f(I) in I check; the sections extracted
    from the higher-dimensional operator overshoot the critical value by the
    square of the perturbation scale, which is legitimate.
    """

    __slots__ = ("func", "critical_point", "curvature_sign", "interval")

    def __init__(self, func: fs.AnalyticFunction, interval=REF_INTERVAL,
                 containment_slack: float = 1e-9):
        if func.dim != 1:
            raise ValueError("unimodal maps are one dimensional")
        self.func = func
        self.interval = (float(interval[0]), float(interval[1]))
        c, sign = _locate_critical_point(func, self.interval)
        self.critical_point = c
        self.curvature_sign = sign
        lo, hi = self.interval
        xs = np.linspace(lo, hi, 257)[:, None]
        vals = func(xs)
        if vals.min() < lo - containment_slack or vals.max() > hi + containment_slack:
            raise ValueError("map does not send I into I")

    @classmethod
    def from_callable(cls, fn, degree: int = 16, interval=REF_INTERVAL, pad: float = PAD):
        half = 0.5 * (interval[1] - interval[0])
        dom = fs.Box.interval(interval[0] - pad * half, interval[1] + pad * half)
        func = fs.project(lambda p: fn(p[:, 0]), dom, degree)
        return cls(func, interval)

    @classmethod
    def quadratic(cls, a: float, degree: int = 16, pad: float = PAD):
        """The family x -> 1 - a x^2."""
        return cls.from_callable(lambda x: 1.0 - a * x * x, degree, pad=pad)

    def __call__(self, x):
        arr = np.asarray(x, dtype=np.float64)
        pts = np.atleast_1d(arr)[:, None]
        out = self.func(pts, slack=1e-9)
        return float(out[0]) if arr.ndim == 0 else out

    @property
    def domain(self) -> fs.Box:
        return self.func.box

    @property
    def degree(self) -> int:
        return self.func.degrees[0]

    def derivative(self):
        return self.func.partial(0)

    def even_coefficients(self, n_even: int) -> np.ndarray:
        """Coefficients of T_0, T_2, ..., T_{2(n_even-1)} of the even part."""
        sym = fs.project(
            lambda p: 0.5 * (self.func(p, slack=1e-9) + self.func(-p, slack=1e-9)),
            self.domain,
            2 * (n_even - 1),
        )
        return sym.coeffs[::2].copy()


def _locate_critical_point(func: fs.AnalyticFunction, interval) -> tuple:
    lo, hi = interval
    der = func.partial(0)
    # even point count: a symmetric map's critical point falls between samples
    xs = np.linspace(lo + 1e-9, hi - 1e-9, 512)
    dv = der(xs[:, None])
    signs = np.sign(dv)
    flips = np.nonzero(signs[:-1] * signs[1:] < 0)[0]
    if len(flips) != 1:
        raise ValueError(
            f"expected exactly one interior critical point, found {len(flips)}"
        )
    i = flips[0]
    c = brentq(lambda x: der(np.array([[x]]))[0], xs[i], xs[i + 1], xtol=1e-14)
    second = der.partial(0)(np.array([[c]]))[0]
    if second == 0.0:
        raise ValueError("degenerate critical point")
    return float(c), -1.0 if second < 0 else 1.0


def _other_preimage(f: UnimodalMap, x: float):
    """Point on the other side of the critical point with the same f-value."""
    c = f.critical_point
    level = f(x)
    lo, hi = f.domain.lower[0], f.domain.upper[0]
    if x < c:
        bracket = (c, hi)
    else:
        bracket = (lo, c)
    g = lambda t: f(t) - level
    a, b = bracket
    # shrink until a sign change is bracketed; f is monotone on each side of c
    ga = g(c + (1e-12 if x < c else -1e-12))
    grid = np.linspace(a, b, 257)
    vals = g(grid[:, None] if False else grid)
    sign_flip = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
    if len(sign_flip) == 0:
        return None
    i = sign_flip[0] if x < c else sign_flip[-1]
    return float(brentq(g, grid[i], grid[i + 1], xtol=1e-14))


def orientation_reversing_fixed_point(f: UnimodalMap):
    """Fixed point with negative multiplier, or None."""
    lo, hi = f.interval
    xs = np.linspace(lo, hi, 513)
    vals = f(xs) - xs
    flips = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
    der = f.derivative()
    for i in flips:
        root = brentq(lambda x: f(x) - x, xs[i], xs[i + 1], xtol=1e-14)
        if der(np.array([[root]]))[0] < 0:
            return float(root)
    return None


def is_renormalizable_1d(f: UnimodalMap, slack: float = 1e-9):
    """Period-doubling renormalizability test.

    Returns ``(flag, J)`` where J is the smallest invariant interval carrying
    the doubling: bounded by q = f^2(c) and its same-level partner q_hat,
    with c inside, f(J) disjoint from J and f^2(J) inside J (checked on a
    dense sample).  The orientation-reversing fixed point must exist; it
    separates J from f(J).
    """
    empty = (False, None)
    if orientation_reversing_fixed_point(f) is None:
        return empty
    c = f.critical_point
    q = f(f(c))
    if abs(q - c) < 1e-12:
        return empty
    q_hat = _other_preimage(f, q)
    if q_hat is None:
        return empty
    j_lo, j_hi = (q, q_hat) if q < q_hat else (q_hat, q)
    if not (j_lo + 1e-12 < c < j_hi - 1e-12):
        return empty
    xs = np.linspace(j_lo, j_hi, 513)
    fx = f(xs)
    if fx.min() <= j_hi and fx.max() >= j_lo:  # f(J) must avoid J
        return empty
    ffx = f(np.clip(fx, *f.interval))
    if ffx.min() < j_lo - slack or ffx.max() > j_hi + slack:
        return empty
    return True, (j_lo, j_hi)


def doubling_failure_side(f: UnimodalMap) -> int:
    """Which side of the doubling window a non-renormalizable map sits on.

    Returns -1 before the window (critical orbit not yet doubled), +1 past it
    (doubling interval no longer invariant), 0 when renormalizable.  Used by
    the kneading-style tower tuning.
    """
    if orientation_reversing_fixed_point(f) is None:
        return -1
    c = f.critical_point
    q = f(f(c))
    if f.curvature_sign < 0:
        if q >= c - 1e-12:
            return -1
    elif q <= c + 1e-12:
        return -1
    ok, _ = is_renormalizable_1d(f)
    return 0 if ok else +1


@dataclass(frozen=True)
class AffineChange:
    """x -> scale * x + offset."""

    scale: float
    offset: float

    def __call__(self, x):
        return self.scale * np.asarray(x) + self.offset

    def inverse(self) -> "AffineChange":
        return AffineChange(1.0 / self.scale, -self.offset / self.scale)


def doubling_change(f: UnimodalMap):
    """Affine A with A(J_f) = I and A(f^2(c)) = +1 for maps with a maximum.

    Returns (A, A_inverse); A_inverse(x) = sigma0 * x + beta is the rescaling
    the higher-dimensional operator lifts diagonally.
    """
    ok, J = is_renormalizable_1d(f)
    if not ok:
        raise NotRenormalizable("no doubling interval")
    q = f(f(f.critical_point))
    j_lo, j_hi = J
    q_hat = j_hi if abs(q - j_lo) < abs(q - j_hi) else j_lo
    target = 1.0 if f.curvature_sign < 0 else -1.0
    # A(q) = target, A(q_hat) = -target
    scale = 2.0 * target / (q - q_hat)
    offset = target - scale * q
    A = AffineChange(scale, offset)
    return A, A.inverse()


def renormalize_1d(f: UnimodalMap, degree: int | None = None) -> UnimodalMap:
    """Affine-rescaled first-return map A o f^2 o A^{-1}, projected on the
    padded interval at the map's own degree by default."""
    A, Ainv = doubling_change(f)
    degree = f.degree if degree is None else degree

    def rf(x):
        return A(f(f(Ainv(x))))

    func = fs.project(lambda p: rf(p[:, 0]), f.domain, degree)
    return UnimodalMap(func)


@dataclass(frozen=True)
class RenormFixedPoint:
    f_star: UnimodalMap
    sigma: float
    residual: float


def _even_map(domain: fs.Box, even_coeffs: np.ndarray) -> fs.AnalyticFunction:
    full = np.zeros(2 * len(even_coeffs) - 1)
    full[::2] = even_coeffs
    return fs.AnalyticFunction(domain, full)


def fixed_point_1d(
    initial: UnimodalMap,
    tol: float = 1e-10,
    max_iter: int = 50,
    fd_step: float = 1e-7,
) -> RenormFixedPoint:
    """Newton solve for the doubling fixed point in the even representation.

    Unknowns are the even Chebyshev coefficients of f with f(0) = 1 imposed by
    eliminating the constant term; the Jacobian is built by finite differences
    on the coefficients.  Residual is the even-coefficient difference between
    Rf and f; convergence is declared on the sup norm of Rf - f.
    """
    degree = initial.degree
    n_even = degree // 2 + 1
    domain = initial.domain
    parity = (-1.0) ** np.arange(n_even)  # T_{2k}(0)

    def pack(coeffs):
        return coeffs[1:].copy()

    def unpack(u):
        c = np.empty(n_even)
        c[1:] = u
        c[0] = 1.0 - float(parity[1:] @ u)  # pins f(0) = 1
        return c

    def build(u):
        return UnimodalMap(_even_map(domain, unpack(u)))

    def residual_vec(u):
        f = build(u)
        rf = renormalize_1d(f, degree)
        r_even = rf.even_coefficients(n_even)
        return pack(r_even) - u

    u = pack(initial.even_coefficients(n_even))
    last_norm = np.inf
    for _ in range(max_iter):
        try:
            r = residual_vec(u)
        except (NotRenormalizable, ValueError) as exc:
            raise NoConvergence(f"iterate left the doubling domain: {exc}") from exc
        f = build(u)
        rf = renormalize_1d(f, degree)
        xs = np.linspace(*f.interval, 257)
        sup = float(np.abs(rf(xs) - f(xs)).max())
        if sup <= tol:
            _, J = is_renormalizable_1d(f)
            sigma = (J[1] - J[0]) / (f.interval[1] - f.interval[0])
            return RenormFixedPoint(f, sigma, sup)
        jac = np.empty((u.size, u.size))
        for j in range(u.size):
            up = u.copy()
            up[j] += fd_step
            jac[:, j] = (residual_vec(up) - r) / fd_step
        step = np.linalg.solve(jac, -r)
        # damp if the full step leaves the renormalizable window
        for damp in (1.0, 0.5, 0.25, 0.125):
            try:
                residual_vec(u + damp * step)
                u = u + damp * step
                break
            except (NotRenormalizable, ValueError):
                continue
        else:
            raise NoConvergence("no admissible Newton step")
        last_norm = sup
    raise NoConvergence(f"no convergence after {max_iter} iterations ({last_norm:.2e})")


def superstable_parameter(period_doublings: int, a_max: float = 1.4012) -> float:
    """Parameter of x -> 1 - a x^2 whose critical orbit is superstable with
    period 2**period_doublings.  Kneading-style: the wanted parameter is the
    largest root of a -> f_a^{2^n}(0) below the cascade accumulation."""
    n = 2**period_doublings

    def orbit_value(a):
        x = 0.0
        for _ in range(n):
            x = 1.0 - a * x * x
        return x

    step = 1e-3
    hi = a_max
    val_hi = orbit_value(hi)
    a = hi - step
    while a > 0.7:
        val = orbit_value(a)
        if val * val_hi < 0:
            return float(brentq(orbit_value, a, hi, xtol=1e-13))
        hi, val_hi = a, val
        a -= step
    raise NoConvergence("no superstable parameter located")
