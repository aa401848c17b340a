"""Seed families and the kneading-style tower tuning.

Infinitely renormalizable maps form a codimension-one surface; a generic
perturbed seed escapes the doubling window after a level or two.  Seeds are
therefore built over the one-parameter unimodal family f_t = f* - t x^2 and t
is tuned by bisection so the whole tower renormalizes to the requested depth.
The bisection side at a failing level is read off that level's 1-D critical
orbit (before the window vs past it), exactly as in kneading bisection for
the quadratic family.
"""

from __future__ import annotations

import numpy as np

from . import funcspace as fs
from . import henon as hn
from . import unimodal as um
from .exceptions import NoConvergence, NotRenormalizable


def perturbed_quadratic(f_star: um.UnimodalMap, t: float) -> um.UnimodalMap:
    func = fs.project(
        lambda pts: f_star.func(pts, slack=1e-9) - t * pts[:, 0] ** 2,
        f_star.domain,
        f_star.degree,
    )
    return um.UnimodalMap(func, f_star.interval)


def dissipative_seed(f_star: um.UnimodalMap, t: float, b: float, c,
                     m: int = 1, degrees=None) -> hn.HenonLikeMap:
    """eps = b*y, delta_j = c_j * z_j: the factorized family.

    Constant Jacobian blocks: Jac F = b * prod(c_j), det Z = prod(c_j), so the
    universal numbers are b_F = |b prod c|, b_z = |prod c|, b_1 = |b| exactly.
    In the invariant class: Y and X vanish identically.
    """
    cs = [float(c)] * m if np.isscalar(c) else [float(v) for v in c]
    if len(cs) != m:
        raise ValueError("need one z-coefficient per z-axis")
    f_t = perturbed_quadratic(f_star, t)
    return hn.HenonLikeMap.build(
        f_t,
        m,
        eps_fn=lambda p: b * p[:, 1],
        delta_fns=[
            (lambda j: lambda p: cs[j] * p[:, 2 + j])(j) for j in range(m)
        ],
        degrees=degrees,
        eps_bar=abs(b),
    )


def shear_seed(f_star: um.UnimodalMap, t: float, b: float, c: float,
               a: float = 0.0, m: int = 1, degrees=None) -> hn.HenonLikeMap:
    """eps = b*y, delta_j = c*z_j + a*y: a seed outside the invariant class
    for a != 0 (Y = a, Z = c, X = 0 gives defect |a| at level 0)."""
    f_t = perturbed_quadratic(f_star, t)
    return hn.HenonLikeMap.build(
        f_t,
        m,
        eps_fn=lambda p: b * p[:, 1],
        delta_fns=[
            (lambda j: lambda p: c * p[:, 2 + j] + a * p[:, 1])(j)
            for j in range(m)
        ],
        degrees=degrees,
        eps_bar=max(abs(b), abs(a)),
    )


def z_family_seed(f_star: um.UnimodalMap, t: float, b: float = 0.05,
                  c: float = 0.3, mu: float = 0.12, degrees=None
                  ) -> hn.HenonLikeMap:
    """delta depending on z alone: X = Y = 0, so the class identity holds
    trivially while det Z = c + 2 mu z varies over the attractor.  The family
    is closed under renormalization (the shift p vanishes on z = 0)."""
    f_t = perturbed_quadratic(f_star, t)
    return hn.HenonLikeMap.build(
        f_t,
        1,
        eps_fn=lambda p: b * p[:, 1],
        delta_fns=[lambda p: c * p[:, 2] + mu * p[:, 2] ** 2],
        degrees=degrees,
        eps_bar=abs(b),
    )


def rich_seed(f_star: um.UnimodalMap, t: float, b: float = 0.05,
              c: float = 0.3, a: float = 0.05, e: float = 0.04,
              degrees=None) -> hn.HenonLikeMap:
    """m=1 seed with every scope quantity nontrivial.

    eps = b*y + e*z couples the x-dynamics to z (nonzero u); delta = c*z + a*y
    puts genuine curvature into p(y) = a f^{-1}(y) through the branch inverse,
    so d, t and the non-linear part R are all nonzero and R decays at the
    geometric rate instead of collapsing (the in-class families with
    proportional rows suppress it structurally).
    """
    f_t = perturbed_quadratic(f_star, t)
    return hn.HenonLikeMap.build(
        f_t,
        1,
        eps_fn=lambda p: b * p[:, 1] + e * p[:, 2],
        delta_fns=[lambda p: c * p[:, 2] + a * p[:, 1]],
        degrees=degrees,
        eps_bar=max(abs(b), abs(a), abs(e)),
    )


def tune_tower(make_map, depth: int, t_lo: float = -0.08, t_hi: float = 0.08,
               degrees=None, max_iter: int = 90, validate: bool = True):
    """Bisect the family parameter until the tower reaches ``depth``.

    ``make_map(t)`` builds the seed.  Returns ``(t, sequence)``.  Probes that
    fail early are cheap; the failing side is taken from the exception.
    """

    def probe(t):
        try:
            seq = hn.renormalize_tower(make_map(t), depth, degrees=degrees,
                                       validate=validate)
            return 0, seq
        except NotRenormalizable as exc:
            return (getattr(exc, "side", +1) or +1), None

    side_lo, seq = probe(t_lo)
    if side_lo == 0:
        return t_lo, seq
    side_hi, seq = probe(t_hi)
    if side_hi == 0:
        return t_hi, seq
    for _ in range(6):  # expand until the window is bracketed
        if side_lo == -1 and side_hi == +1:
            break
        if side_lo != -1:
            t_lo -= 2 * (t_hi - t_lo)
            side_lo, seq = probe(t_lo)
            if side_lo == 0:
                return t_lo, seq
        if side_hi != +1:
            t_hi += 2 * (t_hi - t_lo)
            side_hi, seq = probe(t_hi)
            if side_hi == 0:
                return t_hi, seq
    if not (side_lo == -1 and side_hi == +1):
        raise NoConvergence("could not bracket the doubling window")
    for _ in range(max_iter):
        t_mid = 0.5 * (t_lo + t_hi)
        side, seq = probe(t_mid)
        if side == 0:
            return t_mid, seq
        if side < 0:
            t_lo = t_mid
        else:
            t_hi = t_mid
        if t_hi - t_lo < 1e-15:
            break
    raise NoConvergence(f"no depth-{depth} tower inside the bracket")


def tuned_dissipative_tower(f_star: um.UnimodalMap, depth: int, b: float, c,
                            m: int = 1, degrees=None, t_hint: float | None = None):
    """Convenience wrapper: tune and build the factorized-seed tower."""
    make = lambda t: dissipative_seed(f_star, t, b, c, m=m, degrees=degrees)
    if t_hint is not None:
        width = 5e-3
        try:
            return tune_tower(make, depth, t_hint - width, t_hint + width,
                              degrees=degrees)
        except NoConvergence:
            pass
    return tune_tower(make, depth, degrees=degrees)
