"""The invariant class of maps with Y o F + (Z o F) X = 0.

X, Y, Z are the x-, y- and z-derivative blocks of the z-component delta.
Maps satisfying the identity on the first-level pieces stay inside the class
under renormalization; the operations here measure the defect, build the
canonical example family, and verify the derivative-block recursions (both
the in-class forms and the general pre-renormalization recursion).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import henon as hn
from . import unimodal as um
from .exceptions import ConstraintViolated

PIECES = "pieces"
FULL = "full"


@dataclass
class DerivativeBlocks:
    """Function-valued blocks of D(delta): X (m,), Y (m,), Z (m, m)."""

    X: list
    Y: list
    Z: list  # nested [j][l]

    @property
    def m(self) -> int:
        return len(self.X)

    def x_at(self, pts) -> np.ndarray:
        return _stack(self.X, pts)

    def y_at(self, pts) -> np.ndarray:
        return _stack(self.Y, pts)

    def z_at(self, pts) -> np.ndarray:
        pts = np.atleast_2d(pts)
        out = np.empty((pts.shape[0], self.m, self.m))
        for j in range(self.m):
            for l in range(self.m):
                out[:, j, l] = self.Z[j][l](pts, slack=1e-9)
        return out

    def min_abs_det_z(self, grid_pts) -> float:
        return float(np.abs(np.linalg.det(self.z_at(grid_pts))).min())


def _stack(funcs, pts) -> np.ndarray:
    pts = np.atleast_2d(pts)
    if not funcs:
        return np.zeros((pts.shape[0], 0))
    return np.stack([g(pts, slack=1e-9) for g in funcs], axis=-1)


def blocks(F: hn.HenonLikeMap) -> DerivativeBlocks:
    m = F.m
    return DerivativeBlocks(
        X=[F.delta_partial(j, 0) for j in range(m)],
        Y=[F.delta_partial(j, 1) for j in range(m)],
        Z=[[F.delta_partial(j, 2 + l) for l in range(m)] for j in range(m)],
    )


@dataclass(frozen=True)
class NDefectReport:
    sup_defect: float
    region: str
    grid: str


def _region_points(F: hn.HenonLikeMap, region: str, n_per_axis: int,
                   step: hn.RenormStep | None):
    base = F.ref_box.grid(n_per_axis)
    if region == FULL:
        return base, f"{n_per_axis}^{F.m + 2} lattice on B"
    if region == PIECES:
        if step is None:
            step = hn.renormalize(F, validate=False)
        pts = np.vstack([step.scope.apply_v(base), step.scope.apply_c(base)])
        return pts, f"{n_per_axis}^{F.m + 2} lattice through psi_v, psi_c"
    raise ValueError(f"unknown region {region!r}")


def n_defect(F: hn.HenonLikeMap, region: str = PIECES, n_per_axis: int = 9,
             step: hn.RenormStep | None = None) -> NDefectReport:
    """sup over the region of | Y o F + (Z o F) X |, componentwise max."""
    if F.m == 0:
        return NDefectReport(0.0, region, "no z-axes")
    pts, desc = _region_points(F, region, n_per_axis, step)
    blk = blocks(F)
    image = F(pts, slack=1e-6)
    y_im = blk.y_at(image)
    z_im = blk.z_at(image)
    x_here = blk.x_at(pts)
    defect = y_im + np.einsum("njl,nl->nj", z_im, x_here)
    return NDefectReport(float(np.abs(defect).max()), region, desc)


def make_example_n(f: um.UnimodalMap, m: int, eta_slopes=None, C=None,
                   eta_fns=None, eps_b: float = 0.05, degrees=None,
                   eps_bar: float | None = None) -> hn.HenonLikeMap:
    """Maps with delta^j(w) = eta^j(C_j0 y - sum_i C_ji z_i) + x.

    The row constraint C_j0 = sum_i C_ji makes the defect vanish identically
    (X = 1 so the bracket telescopes).  eta^j may be given as linear slopes or
    as callables; eps defaults to eps_b * y.
    """
    C = np.asarray(C, dtype=np.float64)
    if C.shape != (m, m + 1):
        raise ConstraintViolated(f"C must be {m}x{m + 1}, got {C.shape}")
    row_err = np.abs(C[:, 0] - C[:, 1:].sum(axis=1)).max()
    if row_err > 1e-12:
        raise ConstraintViolated(f"row sums violated by {row_err:.3e}")
    if eta_fns is None:
        if eta_slopes is None:
            raise ValueError("need eta_slopes or eta_fns")
        eta_fns = [(lambda s: (lambda t: s * t))(s) for s in eta_slopes]
    if len(eta_fns) != m:
        raise ConstraintViolated("need one eta per z-component")

    def delta_fn(j):
        def fn(pts):
            arg = C[j, 0] * pts[:, 1] - pts[:, 2:] @ C[j, 1:]
            return eta_fns[j](arg) + pts[:, 0]

        return fn

    scale = float(np.abs(C).max())
    if eps_bar is not None and scale > 10 * eps_bar:
        raise ConstraintViolated(
            f"coefficient scale {scale:.3f} far above eps_bar {eps_bar:.3f}"
        )
    return hn.HenonLikeMap.build(
        f, m,
        eps_fn=lambda p: eps_b * p[:, 1],
        delta_fns=[delta_fn(j) for j in range(m)],
        degrees=degrees,
        eps_bar=eps_bar if eps_bar is not None else max(scale, abs(eps_b)),
    )


@dataclass(frozen=True)
class RecursionReport:
    x_residual: float
    y_residual: float
    z_residual: float

    def max(self) -> float:
        return max(self.x_residual, self.y_residual, self.z_residual)


def verify_block_recursion(F: hn.HenonLikeMap, step: hn.RenormStep,
                           n_per_axis: int = 9) -> RecursionReport:
    """In-class recursion of the next level's blocks against this level's.

    X1 = X o psi_c - q o (pi_x psi_c),
    Y1 = (Z o psi_c)[Y o psi_v + (Z o psi_v) q o (pi_y psi_v)],
    Z1 = (Z o psi_c)(Z o psi_v),
    with both sides evaluated independently on a lattice of the next domain.
    """
    blk = blocks(F)
    blk1 = blocks(step.F_next)
    sc = step.scope
    pts = step.F_next.ref_box.grid(n_per_axis)
    wv = sc.apply_v(pts)
    wc = sc.apply_c(pts)
    qc = sc.q(wc[:, 0][:, None], slack=1e-9)
    qv = sc.q(wv[:, 1][:, None], slack=1e-9)
    x_rhs = blk.x_at(wc) - qc
    z_c = blk.z_at(wc)
    z_v = blk.z_at(wv)
    y_rhs = np.einsum(
        "njl,nl->nj", z_c,
        blk.y_at(wv) + np.einsum("njl,nl->nj", z_v, qv),
    )
    z_rhs = np.einsum("njk,nkl->njl", z_c, z_v)
    return RecursionReport(
        x_residual=float(np.abs(blk1.x_at(pts) - x_rhs).max()),
        y_residual=float(np.abs(blk1.y_at(pts) - y_rhs).max()),
        z_residual=float(np.abs(blk1.z_at(pts) - z_rhs).max()),
    )


def verify_appendix_recursion(F: hn.HenonLikeMap, step: hn.RenormStep,
                              n_per_axis: int = 9) -> RecursionReport:
    """General recursion of D(delta_1), valid outside the class as well.

    The common bracket [Y o psi_c + (Z o psi_c) X o psi_v] multiplies the
    partials of the x-branch inverse of the horizontal change; those partials
    are the stored gradient of xi = pi_x psi_v divided by sigma0.
    """
    blk = blocks(F)
    blk1 = blocks(step.F_next)
    sc = step.scope
    m = F.m
    pts = step.F_next.ref_box.grid(n_per_axis)
    wv = sc.apply_v(pts)
    wc = sc.apply_c(pts)
    x_v = blk.x_at(wv)
    y_v, y_c = blk.y_at(wv), blk.y_at(wc)
    x_c = blk.x_at(wc)
    z_v, z_c = blk.z_at(wv), blk.z_at(wc)
    qv = sc.q(wv[:, 1][:, None], slack=1e-9)
    qc = sc.q(wc[:, 0][:, None], slack=1e-9)
    bracket = y_c + np.einsum("njl,nl->nj", z_c, x_v)
    grad = [g(pts, slack=1e-9) / sc.sigma0 for g in sc.xi_gradient()]
    x_rhs = bracket * grad[0][:, None] + x_c - qc
    inner = y_v + np.einsum("nli,ni->nl", z_v, qv)
    y_rhs = bracket * grad[1][:, None] + np.einsum("njl,nl->nj", z_c, inner)
    x_res = float(np.abs(blk1.x_at(pts) - x_rhs).max())
    y_res = float(np.abs(blk1.y_at(pts) - y_rhs).max())
    z_res = 0.0
    z1 = blk1.z_at(pts)
    prod = np.einsum("njk,nkl->njl", z_c, z_v)
    for i in range(m):
        rhs_i = bracket * grad[2 + i][:, None] + prod[:, :, i]
        z_res = max(z_res, float(np.abs(z1[:, :, i] - rhs_i).max()))
    return RecursionReport(x_res, y_res, z_res)


def invariance_experiment(seq: hn.RenormalizationSequence,
                          n_per_axis: int = 9) -> list:
    """Per-level pieces-defect d_0 .. d_{depth-1} along a tower."""
    out = []
    for k in range(seq.depth):
        rep = n_defect(seq.maps[k], PIECES, n_per_axis, step=seq.steps[k])
        out.append(rep.sup_defect)
    return out
