"""Henon-like maps in m+2 dimensions and their doubling renormalization.

A map F(x, y, z) = (f(x) - eps(w), x, delta(w)) lives on the reference
hypercube B = [-1,1]^(m+2); its components are represented on the padded box
so the horizontal change H and its inverse can evaluate marginally outside B.

One renormalization step:

    RF = Lambda o H o F^2 o H^{-1} o Lambda^{-1}

with H(x,y,z) = (f(x) - eps(x,y,z), y, z - p(y)), p(y) = delta(y, f^{-1}(y), 0)
on the branch of f through the critical-value piece, and Lambda^{-1}(w) =
(sigma0*x + beta, sigma0*y + beta, sigma0*z).  The pair (sigma0, beta) is the
1-D affine normalization of f's doubling interval lifted diagonally; beta
vanishes for symmetric maps and keeps the critical point centered otherwise.
The second coordinate of RF equals x exactly by construction, so RF is again
Henon-like; the new unimodal part is read off the (y, z) = (0, 0) section and
the new eps is the transverse remainder, which contracts quadratically.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import brentq

from . import funcspace as fs
from . import unimodal as um
from .exceptions import (
    ClassificationAmbiguous,
    DepthExceeded,
    HInversionFailed,
    NewtonDiverged,
    NotRenormalizable,
)

CONTAINMENT_SLACK = 0.05
UNIMODAL_SECTION_SLACK = 0.15


def padded_box(m: int, pad: float = um.PAD) -> fs.Box:
    return fs.Box.cube(m + 2, -1.0 - pad, 1.0 + pad)


def reference_box(m: int) -> fs.Box:
    return fs.Box.cube(m + 2)


class HenonLikeMap:
    """The triple (f, eps, delta) on the padded hypercube."""

    def __init__(self, f: um.UnimodalMap, eps: fs.AnalyticFunction,
                 delta: fs.VectorFunction, eps_bar: float | None = None):
        if not eps.box.close_to(delta.box):
            raise ValueError("eps and delta must share a box")
        self.m = len(delta)
        if eps.dim != self.m + 2:
            raise ValueError("eps dimension must be m + 2")
        self.f = f
        self.eps = eps
        self.delta = delta
        self.box = eps.box
        self.ref_box = reference_box(self.m)
        self.eps_bar = eps_bar
        self._partials = {}

    @classmethod
    def degenerate(cls, f: um.UnimodalMap, m: int, pad: float = um.PAD):
        box = padded_box(m, pad)
        return cls(f, fs.AnalyticFunction.zero(box), fs.VectorFunction.zero(box, m), 0.0)

    @classmethod
    def build(cls, f: um.UnimodalMap, m: int, eps_fn=None, delta_fns=None,
              degrees=None, eps_bar=None, pad: float = um.PAD):
        """Project callables eps_fn(pts) and delta_fns[j](pts) on the padded box."""
        box = padded_box(m, pad)
        if degrees is None:
            degrees = fs.default_degree(m + 2)
        eps = (fs.project(eps_fn, box, degrees) if eps_fn is not None
               else fs.AnalyticFunction.zero(box))
        comps = [fs.project(g, box, degrees) for g in (delta_fns or [])]
        while len(comps) < m:
            comps.append(fs.AnalyticFunction.zero(box))
        return cls(f, eps, fs.VectorFunction(comps, box), eps_bar)

    # -- evaluation -----------------------------------------------------------

    def __call__(self, pts, slack: float = 1e-9) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        x = pts[:, 0]
        fx = self.f.func(x[:, None], slack=slack)
        out = np.empty_like(pts)
        out[:, 0] = fx - self.eps(pts, slack=slack)
        out[:, 1] = x
        if self.m:
            out[:, 2:] = self.delta(pts, slack=slack)
        return out

    def iterate(self, w, n: int) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(w, dtype=np.float64))
        for _ in range(n):
            pts = self(pts)
        return pts

    def is_degenerate(self, tol: float = 1e-13) -> bool:
        return self.eps.sup_norm() <= tol and self.delta.sup_norm() <= tol

    def perturbation_norms(self, n_per_axis: int = 17) -> tuple:
        """(sup|eps|, sup|delta|) over the reference hypercube."""
        return (
            self.eps.sup_norm(n_per_axis, self.ref_box),
            self.delta.sup_norm(n_per_axis, self.ref_box),
        )

    # -- derivatives ----------------------------------------------------------

    def _partial(self, which: str, j: int, axis: int) -> fs.AnalyticFunction:
        key = (which, j, axis)
        if key not in self._partials:
            base = self.eps if which == "eps" else self.delta[j]
            self._partials[key] = base.partial(axis)
        return self._partials[key]

    def eps_partial(self, axis: int) -> fs.AnalyticFunction:
        return self._partial("eps", 0, axis)

    def delta_partial(self, j: int, axis: int) -> fs.AnalyticFunction:
        return self._partial("delta", j, axis)

    def derivative(self, pts) -> np.ndarray:
        """Batched full derivative, shape (N, m+2, m+2)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        n, d = pts.shape
        out = np.zeros((n, d, d))
        fprime = self.f.derivative()(pts[:, :1], slack=1e-9)
        out[:, 0, 0] = fprime - self.eps_partial(0)(pts, slack=1e-9)
        for a in range(1, d):
            out[:, 0, a] = -self.eps_partial(a)(pts, slack=1e-9)
        out[:, 1, 0] = 1.0
        for j in range(self.m):
            for a in range(d):
                out[:, 2 + j, a] = self.delta_partial(j, a)(pts, slack=1e-9)
        return out

    def jacobian(self, pts) -> np.ndarray:
        """det DF, batched."""
        return np.linalg.det(self.derivative(pts))

    def jacobian_blocks(self, pts):
        """(eps_y, E, Y, Z) blocks at each point; shapes (N,), (N,m), (N,m), (N,m,m)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        n = pts.shape[0]
        eps_y = self.eps_partial(1)(pts, slack=1e-9)
        E = np.stack([self.eps_partial(2 + l)(pts, slack=1e-9) for l in range(self.m)],
                     axis=-1) if self.m else np.zeros((n, 0))
        Y = np.stack([self.delta_partial(j, 1)(pts, slack=1e-9) for j in range(self.m)],
                     axis=-1) if self.m else np.zeros((n, 0))
        Z = np.zeros((n, self.m, self.m))
        for j in range(self.m):
            for l in range(self.m):
                Z[:, j, l] = self.delta_partial(j, 2 + l)(pts, slack=1e-9)
        return eps_y, E, Y, Z

    def jacobian_block_form(self, pts) -> np.ndarray:
        """(eps_y - E Z^{-1} Y) det Z; equals det DF where Z is invertible."""
        eps_y, E, Y, Z = self.jacobian_blocks(pts)
        if self.m == 0:
            return eps_y
        det_z = np.linalg.det(Z)
        sol = np.linalg.solve(Z, Y[..., None])[..., 0]
        return (eps_y - np.einsum("nl,nl->n", E, sol)) * det_z

    def log_jacobian(self, pts) -> np.ndarray:
        sign, logabs = np.linalg.slogdet(self.derivative(pts))
        if np.any(sign == 0.0):
            logabs = np.where(sign == 0.0, -np.inf, logabs)
        return logabs


class LevelScope:
    """The non-linear changes psi_v, psi_c of one renormalization level."""

    def __init__(self, parent: HenonLikeMap, sigma0: float, beta: float,
                 xi: fs.AnalyticFunction, p: fs.VectorFunction,
                 q: fs.VectorFunction, finv: fs.AnalyticFunction):
        self.parent = parent
        self.sigma0 = float(sigma0)
        self.beta = float(beta)
        self.xi = xi
        self.p = p
        self.q = q
        self.finv = finv
        self._xi_grad = None

    @property
    def m(self) -> int:
        return self.parent.m

    def apply_v(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        out = np.empty_like(pts)
        out[:, 0] = self.xi(pts, slack=1e-9)
        ytil = self.sigma0 * pts[:, 1] + self.beta
        out[:, 1] = ytil
        if self.m:
            out[:, 2:] = self.sigma0 * pts[:, 2:] + self.p(ytil[:, None], slack=1e-9)
        return out

    def apply_c(self, pts) -> np.ndarray:
        return self.parent(self.apply_v(pts))

    def apply(self, letter: str, pts) -> np.ndarray:
        if letter == "v":
            return self.apply_v(pts)
        if letter == "c":
            return self.apply_c(pts)
        raise ValueError(f"bad letter {letter!r}")

    def xi_gradient(self):
        if self._xi_grad is None:
            self._xi_grad = self.xi.gradient()
        return self._xi_grad

    def derivative_v(self, pts) -> np.ndarray:
        """Batched derivative of psi_v."""
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        n, d = pts.shape
        out = np.zeros((n, d, d))
        grad = self.xi_gradient()
        for a in range(d):
            out[:, 0, a] = grad[a](pts, slack=1e-9)
        out[:, 1, 1] = self.sigma0
        if self.m:
            ytil = self.sigma0 * pts[:, 1] + self.beta
            qv = self.q(ytil[:, None], slack=1e-9)
            for j in range(self.m):
                out[:, 2 + j, 1] = self.sigma0 * qv[:, j]
                out[:, 2 + j, 2 + j] = self.sigma0
        return out


class RenormStep:
    """One accepted renormalization: the next map plus its scope data."""

    def __init__(self, F: HenonLikeMap, F_next: HenonLikeMap, scope: LevelScope,
                 residuals: dict):
        self.F = F
        self.F_next = F_next
        self.scope = scope
        self.residuals = residuals

    @property
    def sigma0(self) -> float:
        return self.scope.sigma0

    @property
    def beta(self) -> float:
        return self.scope.beta

    @property
    def s(self) -> float:
        """Dilation constant of Lambda; s < -1."""
        return 1.0 / self.scope.sigma0


def _value_branch(f: um.UnimodalMap, y_lo: float, y_hi: float):
    """Monotone branch of f on the critical-value side covering [y_lo, y_hi]."""
    if f.curvature_sign > 0:
        raise HInversionFailed("only maps with a maximum are supported")
    c = f.critical_point
    hi = f.domain.upper[0]
    xs = np.linspace(c, hi, 1024)
    vals = f(xs)
    above = np.nonzero(vals >= y_hi + 0.02)[0]
    below = np.nonzero(vals <= y_lo - 0.02)[0]
    if len(above) == 0 or len(below) == 0:
        raise HInversionFailed(
            f"branch image cannot cover [{y_lo:.3f}, {y_hi:.3f}]"
        )
    lo_x = xs[above[-1]]
    hi_x = xs[below[0]]
    if not lo_x < hi_x:
        raise HInversionFailed("branch collapsed")
    return float(lo_x), float(hi_x)


def _shift_function(F: HenonLikeMap, sigma0: float, beta: float, pad: float):
    """p(y) = delta(y, f^{-1}(y), 0) and q = p' on a covering y-interval."""
    r = abs(sigma0) * (1.0 + pad) + abs(beta) + 0.08
    branch = _value_branch(F.f, -r, r)
    finv = fs.invert_monotone_1d(F.f.func, branch, yrange=(-r, r))
    ybox = finv.box
    ident = fs.AnalyticFunction.coordinate(ybox, 0)
    zero = fs.AnalyticFunction.zero(ybox)
    inner = [ident, finv] + [zero] * F.m
    p_comps = [fs.compose(F.delta[j], inner, degrees=finv.degrees) for j in range(F.m)]
    p = fs.VectorFunction(p_comps, ybox)
    q = fs.VectorFunction([c.partial(0) for c in p_comps], ybox)
    return p, q, finv, branch


def _solve_xi(F: HenonLikeMap, pts: np.ndarray, sigma0: float, beta: float,
              p: fs.VectorFunction, finv: fs.AnalyticFunction,
              branch: tuple) -> np.ndarray:
    """Solve f(xi) - eps(xi, ytil, z_pre) = sigma0*x + beta per point."""
    target = sigma0 * pts[:, 0] + beta
    ytil = sigma0 * pts[:, 1] + beta
    if F.m:
        z_pre = sigma0 * pts[:, 2:] + p(ytil[:, None], slack=1e-9)
    else:
        z_pre = np.zeros((pts.shape[0], 0))
    rest = np.column_stack([ytil] + ([z_pre] if F.m else []))
    lo, hi = branch
    xi = np.clip(finv(np.clip(target, finv.box.lower[0], finv.box.upper[0])[:, None]),
                 lo, hi)
    fprime = F.f.derivative()
    eps_x = F.eps_partial(0)

    def g_and_slope(x):
        full = np.column_stack([x, rest])
        g = F.f.func(x[:, None], slack=1e-9) - F.eps(full, slack=1e-9) - target
        slope = fprime(x[:, None], slack=1e-9) - eps_x(full, slack=1e-9)
        return g, slope

    for _ in range(12):
        g, slope = g_and_slope(xi)
        if np.abs(g).max() < 1e-13:
            break
        xi = np.clip(xi - g / slope, lo, hi)
    g, _ = g_and_slope(xi)
    bad = np.nonzero(np.abs(g) > 1e-11)[0]
    for i in bad:  # stragglers: bracketed scalar solve
        row = rest[i]

        def scalar(t):
            full = np.concatenate([[t], row])[None, :]
            return (F.f.func(np.array([[t]]), slack=1e-9)[0]
                    - F.eps(full, slack=1e-9)[0] - target[i])

        try:
            xi[i] = brentq(scalar, lo, hi, xtol=1e-14)
        except ValueError as exc:
            raise HInversionFailed(f"x-branch inversion failed: {exc}") from exc
    return xi


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)
_GL_NODES = 0.5 * (_GL_NODES + 1.0)
_GL_WEIGHTS = 0.5 * _GL_WEIGHTS


def renormalize(F: HenonLikeMap, degrees=None, validate: bool = True,
                containment_slack: float = CONTAINMENT_SLACK) -> RenormStep:
    """One step of the doubling renormalization operator."""
    ok, _ = um.is_renormalizable_1d(F.f)
    if not ok:
        exc = NotRenormalizable("unimodal part is not doubling renormalizable")
        exc.side = um.doubling_failure_side(F.f)
        raise exc
    _, ainv = um.doubling_change(F.f)
    sigma0, beta = ainv.scale, ainv.offset
    # |sigma0| grows monotonically through the doubling window (~0.3995 at the
    # fixed point), which classifies every later failure for the tuner.
    side_guess = -1 if abs(sigma0) <= 0.3995 else +1
    if not 0.15 < abs(sigma0) < 0.65 or sigma0 >= 0:
        exc = NotRenormalizable(f"scaling constant sigma0={sigma0:.4f} out of range")
        exc.side = side_guess
        raise exc
    pad = (F.box.upper[0] - 1.0)
    try:
        p, q, finv, branch = _shift_function(F, sigma0, beta, pad)
    except HInversionFailed as exc:
        exc.side = side_guess
        raise
    fprime = F.f.derivative()

    def pieces(pts):
        """Stations of the chain Lambda o H o F^2 o H^{-1} o Lambda^{-1}."""
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        xi = _solve_xi(F, pts, sigma0, beta, p, finv, branch)
        u = sigma0 * pts[:, 0] + beta
        ytil = sigma0 * pts[:, 1] + beta
        if F.m:
            z_pre = sigma0 * pts[:, 2:] + p(ytil[:, None], slack=1e-9)
        else:
            z_pre = np.zeros((pts.shape[0], 0))
        w2 = np.column_stack([xi, ytil] + ([z_pre] if F.m else []))
        w3 = np.column_stack([u, xi]
                             + ([F.delta(w2, slack=1e-9)] if F.m else []))
        eps3 = F.eps(w3, slack=1e-9)
        w4 = np.column_stack([F.f.func(w3[:, :1], slack=1e-9) - eps3, u]
                             + ([F.delta(w3, slack=1e-9)] if F.m else []))
        eps4 = F.eps(w4, slack=1e-9)
        return u, w3, eps3, w4, eps4

    def chain(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        u, w3, eps3, w4, eps4 = pieces(pts)
        x5 = F.f.func(w4[:, :1], slack=1e-9) - eps4
        out = np.empty_like(pts)
        out[:, 0] = (x5 - beta) / sigma0
        out[:, 1] = pts[:, 0]
        if F.m:
            z5 = w4[:, 2:] - p(u[:, None], slack=1e-9)
            out[:, 2:] = z5 / sigma0
        return out

    def transverse_parts(pts, x_block: int | None = None):
        """eps_next and delta_next values, free of O(1) cancellation.

        eps_next(w) = f1(x) - pi_x(chain(w)) is a difference of two nearly
        equal chains; evaluated instead through the exact divided difference
        f(A - a) - f(A - b) = (b - a) * int_0^1 f'(A - b - t(a - b)) dt
        (Gauss-Legendre, exact at polynomial degree), which keeps the
        roundoff relative to the perturbation scale.  This is what lets the
        super-exponential decay of the towers stay visible over five levels.
        The section chain depends on x alone; on tensor grids (x slowest,
        contiguous blocks of x_block points per node) it is evaluated once
        per x-node and broadcast.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        u, w3, eps3, w4, eps4 = pieces(pts)
        if x_block:
            sec = np.zeros((pts.shape[0] // x_block, F.m + 2))
            sec[:, 0] = pts[::x_block, 0]
            expand = lambda a: np.repeat(a, x_block, axis=0)
        else:
            sec = np.zeros_like(pts)
            sec[:, 0] = pts[:, 0]
            expand = lambda a: a
        _, w3s, eps3s, w4s, eps4s = pieces(sec)
        base = expand(F.f.func(w3s[:, :1], slack=1e-9))  # f(u), shared chain head
        eps3s_e, eps4s_e = expand(eps3s), expand(eps4s)
        diff3 = eps3 - eps3s_e
        quad = np.zeros(pts.shape[0])
        for t, wgt in zip(_GL_NODES, _GL_WEIGHTS):
            arg = base - eps3s_e - t * diff3
            quad += wgt * fprime(arg[:, None], slack=1e-9)
        eps_next_vals = (diff3 * quad + (eps4 - eps4s_e)) / sigma0
        if F.m:
            delta_next_vals = (w4[:, 2:] - p(u[:, None], slack=1e-9)) / sigma0
        else:
            delta_next_vals = np.zeros((pts.shape[0], 0))
        return eps_next_vals, delta_next_vals

    if degrees is None:
        base_deg = fs.default_degree(F.m + 2)
        comp_degs = [F.eps.degrees] + [g.degrees for g in F.delta.components]
        deg_tuple = tuple(
            max([base_deg] + [cd[a] for cd in comp_degs]) for a in range(F.m + 2)
        )
    else:
        deg_tuple = fs._normalize_degrees(degrees, F.m + 2)
    nodes = [np.asarray(fs._kernels.gauss_nodes(d + 1)) for d in deg_tuple]
    grid_pts = fs._mesh_points(F.box, nodes)
    grid_shape = tuple(d + 1 for d in deg_tuple)

    # new unimodal part: section through (y, z) = 0
    xs_1d = fs._kernels.gauss_nodes(F.f.degree + 1)
    xs_phys = F.f.domain.from_unit(xs_1d[:, None])[:, 0]
    sec_pts = np.zeros((xs_phys.size, F.m + 2))
    sec_pts[:, 0] = xs_phys
    f1_vals = chain(sec_pts)[:, 0]
    f1_func = fs.AnalyticFunction(
        F.f.domain, fs._kernels.values_to_coeffs(f1_vals), F.eps.tolerance
    )
    try:
        f_next = um.UnimodalMap(f1_func,
                                containment_slack=UNIMODAL_SECTION_SLACK)
    except ValueError as exc:
        wrapped = NotRenormalizable(f"renormalized unimodal part invalid: {exc}")
        wrapped.side = side_guess
        raise wrapped from exc

    eps_grid, delta_grid = transverse_parts(
        grid_pts, x_block=int(np.prod(grid_shape[1:]))
    )
    eps_next = fs.AnalyticFunction(
        F.box, fs._kernels.values_to_coeffs(eps_grid.reshape(grid_shape)),
        F.eps.tolerance,
    )
    delta_comps = [
        fs.AnalyticFunction(
            F.box,
            fs._kernels.values_to_coeffs(delta_grid[:, j].reshape(grid_shape)),
            F.eps.tolerance,
        )
        for j in range(F.m)
    ]
    delta_next = fs.VectorFunction(delta_comps, F.box)
    eb = eps_next.sup_norm(9, reference_box(F.m))
    F_next = HenonLikeMap(f_next, eps_next, delta_next, eps_bar=eb)

    xi_fn = fs.AnalyticFunction.from_callable(
        lambda w: _solve_xi(F, np.atleast_2d(w), sigma0, beta, p, finv, branch),
        F.box, deg_tuple, F.eps.tolerance,
    )
    scope = LevelScope(F, sigma0, beta, xi_fn, p, q, finv)
    residuals = {}
    if validate:
        residuals = _validate_step(F, F_next, scope, chain, containment_slack,
                                   side_guess)
    return RenormStep(F, F_next, scope, residuals)


def _validate_step(F, F_next, scope, chain, containment_slack, side_guess=+1):
    d = F.m + 2
    grid = reference_box(F.m).grid(5)
    # conjugacy psi_v o RF = F^2 o psi_v and = F o psi_c
    lhs = scope.apply_v(F_next(grid))
    rhs2 = F(F(scope.apply_v(grid)))
    rhsc = F(scope.apply_c(grid))
    conj_v = float(np.abs(lhs - rhs2).max())
    conj_c = float(np.abs(lhs - rhsc).max())
    # containment: the piece cycle must stay inside B; the full image may
    # overshoot by the perturbation scale (the eps-displacement of the
    # critical value), so that escape is gated adaptively and recorded.
    img = F_next(grid)
    escape = float(np.maximum(img - 1.0, -1.0 - img).max())
    en, dn = F_next.perturbation_norms(9)
    en_parent = F.perturbation_norms(9)[0]
    allowed = max(containment_slack, 1.5 * (en + dn) + 3.0 * en_parent + 1e-6)
    pieces_v = scope.apply_v(grid)
    pieces_c = scope.apply_c(grid)
    gap = float(pieces_c[:, 0].max()) < float(pieces_v[:, 0].min())
    piece_escape = float(
        max(np.maximum(pieces_v - 1.0, -1.0 - pieces_v).max(),
            np.maximum(pieces_c - 1.0, -1.0 - pieces_c).max())
    )
    resid = {
        "conjugacy_v": conj_v,
        "conjugacy_c": conj_c,
        "containment_escape": escape,
        "piece_escape": piece_escape,
        "pieces_disjoint": bool(gap),
        "projection": float(np.abs(F_next(grid) - chain(grid)).max()),
    }
    if escape > allowed:
        exc = NotRenormalizable(
            f"renormalized map escapes the hypercube by {escape:.3e}"
        )
        exc.side = side_guess
        raise exc
    if piece_escape > 0.02:
        exc = NotRenormalizable(
            f"first-level pieces leave the hypercube by {piece_escape:.3e}"
        )
        exc.side = side_guess
        raise exc
    if not gap:
        exc = NotRenormalizable("first-level pieces are not disjoint")
        exc.side = side_guess
        raise exc
    return resid


class RenormalizationSequence:
    """Tower F_0 .. F_N with per-level scope data and diagnostics."""

    def __init__(self, maps, steps):
        self.maps = list(maps)
        self.steps = list(steps)
        self.cache = {}

    @property
    def depth(self) -> int:
        return len(self.steps)

    @property
    def m(self) -> int:
        return self.maps[0].m

    def level_map(self, k: int) -> HenonLikeMap:
        return self.maps[k]

    def level_scope(self, k: int) -> LevelScope:
        """Scope of level k: psi^{k+1} embedding level k+1 into level k."""
        return self.steps[k].scope

    def perturbation_norms(self, n_per_axis: int = 17):
        return [Fk.perturbation_norms(n_per_axis) for Fk in self.maps]

    def reliable_depth(self, floor_ratio: float = 1e-13,
                       component: str | None = None) -> int:
        """Deepest level whose perturbation parts are still signal.

        Each level is built from differences at the parent's scale, so a
        measured norm is roundoff once it either collapses far below its
        parent (inherited machine noise dominating a once-positive chain) or
        stops obeying the quadratic contraction from level to level (a noise
        floor decays much slower than the square).  ``component`` restricts
        the check to "eps" or "delta"; estimators that touch only one side
        (the z-block averages) should not be capped by the other's floor.
        """
        norms = self.perturbation_norms(9)
        pick = {"eps": (0,), "delta": (1,), None: (0, 1)}[component]
        for k in range(1, len(norms)):
            for idx in pick:
                prev, here = norms[k - 1][idx], norms[k][idx]
                if prev <= 0.0:
                    continue
                if here < floor_ratio * prev:
                    return k - 1
                if prev < 1e-4 and here > 1e3 * prev**1.8:
                    return k - 1
        return self.depth

    def distances_to_fixed_point(self, f_star: um.UnimodalMap):
        xs = np.linspace(-1, 1, 201)
        out = []
        for Fk, (en, dn) in zip(self.maps, self.perturbation_norms()):
            df = float(np.abs(Fk.f(xs) - f_star(xs)).max())
            out.append(df + en + dn)
        return out

    def fitted_rate(self, f_star: um.UnimodalMap, k_range=None) -> float:
        """Geometric rate rho_hat from log-linear fit of ||F_k - F*||."""
        dist = self.distances_to_fixed_point(f_star)
        ks = k_range or range(1, min(6, len(dist)))
        ks = [k for k in ks if dist[k] > 1e-14]
        if len(ks) < 2:
            return 0.0
        slope = np.polyfit(list(ks), [np.log(dist[k]) for k in ks], 1)[0]
        return float(np.exp(slope))


MAX_TOWER_DEPTH = 8


def renormalize_tower(F: HenonLikeMap, depth: int, degrees=None,
                      validate: bool = True,
                      containment_slack: float = CONTAINMENT_SLACK,
                      max_depth: int = MAX_TOWER_DEPTH):
    if depth > max_depth:
        raise DepthExceeded(f"depth {depth} above the feasibility knob {max_depth}")
    maps = [F]
    steps = []
    for k in range(depth):
        try:
            step = renormalize(maps[-1], degrees=degrees, validate=validate,
                               containment_slack=containment_slack)
        except (NotRenormalizable, HInversionFailed, ValueError) as exc:
            wrapped = NotRenormalizable(f"level {k}: {exc}")
            wrapped.level = k
            wrapped.side = getattr(exc, "side", +1)
            raise wrapped from exc
        steps.append(step)
        maps.append(step.F_next)
    return RenormalizationSequence(maps, steps)


# -- fixed points -----------------------------------------------------------


def _unimodal_fixed_points(f: um.UnimodalMap):
    lo, hi = f.domain.lower[0], f.domain.upper[0]
    xs = np.linspace(lo + 1e-9, hi - 1e-9, 1024)
    vals = f(xs) - xs
    flips = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
    return [float(brentq(lambda t: f(t) - t, xs[i], xs[i + 1], xtol=1e-14))
            for i in flips]


def fixed_points(F: HenonLikeMap, warn_eps_bar: float = 0.2):
    """The two fixed points (beta0, beta1) of F, Newton-refined and classified
    by the signs of the nonzero eigenvalue real parts."""
    import warnings

    norms = F.perturbation_norms(9)
    if max(norms) > warn_eps_bar:
        warnings.warn(f"perturbation norm {max(norms):.3f} above {warn_eps_bar}",
                      stacklevel=2)
    roots = _unimodal_fixed_points(F.f)
    if len(roots) < 2:
        raise NewtonDiverged(f"unimodal part has {len(roots)} fixed points, need 2")
    sols = []
    for x_star in roots[:2]:
        w = np.zeros(F.m + 2)
        w[0] = w[1] = x_star
        for _ in range(60):
            res = F(w[None, :])[0] - w
            if np.abs(res).max() < 1e-12:
                break
            jac = F.derivative(w[None, :])[0] - np.eye(F.m + 2)
            try:
                delta_w = np.linalg.solve(jac, -res)
            except np.linalg.LinAlgError as exc:
                raise NewtonDiverged(f"singular Newton system: {exc}") from exc
            w = w + delta_w
            if not F.box.contains(w[None, :], slack=0.0):
                raise NewtonDiverged("Newton iterate left the domain")
        else:
            raise NewtonDiverged("fixed-point Newton did not converge")
        sols.append(w)
    labeled = []
    for w in sols:
        eig = np.linalg.eigvals(F.derivative(w[None, :])[0])
        live = eig[np.abs(eig) >= 1e-8]
        if np.any(np.abs(live.real) < 1e-8):
            raise ClassificationAmbiguous(f"eigenvalues {eig} too close to the axis")
        labeled.append((w, bool(np.all(live.real > 0))))
    pos = [w for w, is_pos in labeled if is_pos]
    mix = [w for w, is_pos in labeled if not is_pos]
    if not pos or not mix:
        raise ClassificationAmbiguous("fixed points do not split into beta0/beta1")
    return pos[0], mix[0]


# -- serialization ------------------------------------------------------------


def save_map(F: HenonLikeMap, directory, provenance: str = "") -> list:
    """Write a map bundle: component functions plus a small manifest."""
    import json
    import os

    os.makedirs(directory, exist_ok=True)
    written = []

    def put(name, text):
        path = os.path.join(directory, name)
        with open(path, "w") as fh:
            fh.write(text)
        written.append(name)

    put("f.func", F.f.func.to_text())
    put("eps.func", F.eps.to_text())
    for j in range(F.m):
        put(f"delta{j}.func", F.delta[j].to_text())
    manifest = {
        "format": "pdrenorm-map 1",
        "m": F.m,
        "eps_bar": F.eps_bar,
        "interval": list(F.f.interval),
        "provenance": provenance,
        "files": written[:],
    }
    put("map.json", json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return written + ["map.json"]


def load_map(directory) -> HenonLikeMap:
    import json
    import os

    with open(os.path.join(directory, "map.json")) as fh:
        manifest = json.load(fh)

    def get(name):
        with open(os.path.join(directory, name)) as fh:
            return fs.AnalyticFunction.from_text(fh.read())

    f = um.UnimodalMap(get("f.func"), manifest["interval"],
                       containment_slack=UNIMODAL_SECTION_SLACK)
    eps = get("eps.func")
    delta = fs.VectorFunction(
        [get(f"delta{j}.func") for j in range(manifest["m"])], eps.box
    )
    return HenonLikeMap(f, eps, delta, eps_bar=manifest.get("eps_bar"))
