"""Cantor-attractor measurements: pieces, universal numbers, overlap scans.

The attractor is sampled through piece hulls (images of a boundary lattice of
the hypercube under word-indexed scope compositions).  The invariant measure
is approximated by the uniform measure on level-N cylinders, i.e. averaging
along the orbit of the tip of length 2^N, which is exact for the adding
machine.  All deep-level determinants are handled in logs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from . import classn
from . import henon as hn
from . import scope as sc
from .exceptions import (
    DegenerateJacobian,
    DepthExceeded,
    DomainError,
    SingularZ,
)

HULL_PER_AXIS = 5


@dataclass(frozen=True)
class PieceSample:
    word: sc.Word
    level: int
    hull: np.ndarray
    bbox_lo: np.ndarray
    bbox_hi: np.ndarray

    def padded_contains(self, pts: np.ndarray, pad: float) -> bool:
        return bool(
            np.all(pts >= self.bbox_lo - pad) and np.all(pts <= self.bbox_hi + pad)
        )


def hull_template(dim: int, per_axis: int = HULL_PER_AXIS) -> np.ndarray:
    return sc._hull_template(dim, per_axis)


def piece(seq: hn.RenormalizationSequence, word: sc.Word,
          per_axis: int = HULL_PER_AXIS) -> PieceSample:
    """Sampled image of B under the word-indexed scope composition."""
    n = len(word)
    if n > seq.depth:
        raise DepthExceeded(f"word of length {n} needs depth {n} > {seq.depth}")
    mapped = sc.ScopeMap(seq, 0, word).apply(hull_template(seq.m + 2, per_axis))
    return PieceSample(word, n, mapped, mapped.min(axis=0), mapped.max(axis=0))


def diam(p: PieceSample) -> float:
    d = cdist(p.hull, p.hull)
    return float(d.max())


def dist_min(p: PieceSample, q: PieceSample) -> float:
    if p.level != q.level:
        raise ValueError("pieces must be of the same level")
    return float(cdist(p.hull, q.hull).min())


@dataclass(frozen=True)
class AverageJacobian:
    value: float
    error: float
    depth: int
    degenerate: bool = False


def _orbit_log_jacobian(seq, depth: int, fn) -> np.ndarray:
    F = seq.maps[0]
    w = sc.tip(seq, 0).point.copy()
    out = np.empty(2**depth)
    for i in range(out.size):
        out[i] = fn(F, w)
        w = F(w[None, :], slack=1e-6)[0]
    return out


def average_jacobian(seq: hn.RenormalizationSequence, depth: int = 10
                     ) -> AverageJacobian:
    """b_F from the ergodic average of log |Jac F| along the tip orbit."""
    logs = _orbit_log_jacobian(
        seq, depth, lambda F, w: float(F.log_jacobian(w[None, :])[0])
    )
    if not np.all(np.isfinite(logs)) or logs.min() < np.log(1e-300):
        return AverageJacobian(0.0, 0.0, depth, degenerate=True)
    full = float(np.exp(logs.mean()))
    half = float(np.exp(logs[: 2 ** (depth - 1)].mean()))
    return AverageJacobian(full, abs(full - half), depth)


@dataclass(frozen=True)
class BzEstimates:
    orbit: float
    renormalized: float
    gap: float
    depth: int
    by_level: list = field(default_factory=list)


def _log_det_z(F: hn.HenonLikeMap, pts: np.ndarray) -> np.ndarray:
    blk = classn.blocks(F)
    sign, logabs = np.linalg.slogdet(blk.z_at(pts))
    if np.any(sign == 0):
        raise SingularZ("det Z vanished on the sample")
    return logabs


def b_z(seq: hn.RenormalizationSequence, depth: int = 10) -> BzEstimates:
    """Two estimators of the z-block universal number.

    (a) ergodic average of log |det Z| along the tip orbit of length 2^depth;
    (b) 2^{-n} log |det Z_n| of the renormalized maps, whose agreement with
    (a) is the universality check.
    """
    if seq.m == 0:
        raise SingularZ("no z-axes")
    logs = _orbit_log_jacobian(
        seq, depth, lambda F, w: float(_log_det_z(F, w[None, :])[0])
    )
    if not np.all(np.isfinite(logs)):
        raise SingularZ("det Z vanished along the orbit")
    orbit_est = float(np.exp(logs.mean()))
    by_level = []
    for n in range(1, seq.reliable_depth(component="delta") + 1):
        tau = sc.tip(seq, n, allow_shallow=True).point
        grid = 0.5 * hull_template(seq.m + 2, 3) + tau
        grid = np.clip(grid, -1.0, 1.0)
        val = float(np.mean(_log_det_z(seq.maps[n], grid))) / 2**n
        by_level.append(float(np.exp(val)))
    if not by_level:
        raise SingularZ("no reliable renormalized level for the z-estimate")
    renorm_est = by_level[-1]
    return BzEstimates(orbit_est, renorm_est, abs(orbit_est - renorm_est),
                       depth, by_level)


@dataclass(frozen=True)
class B1Report:
    b1: float
    b_f: float
    b_z: float
    consistency: list  # per-level ratio of |eps_y - E Z^{-1} Y| to b1^{2^k} a(x)


def _log_a_profile(seq, b_f: float):
    """log a(x) sampled from the deepest reliable level's Jacobian."""
    n = seq.reliable_depth()
    tau = sc.tip(seq, n, allow_shallow=True).point
    xs = np.linspace(-0.9, 0.9, 33)
    pts = np.tile(tau, (xs.size, 1))
    pts[:, 0] = xs
    logs = seq.maps[n].log_jacobian(pts) - 2**n * np.log(b_f)
    return xs, logs


def b1(seq: hn.RenormalizationSequence, depth: int = 10,
       levels=(1, 2, 3)) -> B1Report:
    """b_1 = b_F / b_z plus the transverse-derivative consistency ratios."""
    bf = average_jacobian(seq, depth)
    if bf.degenerate:
        raise DegenerateJacobian("average Jacobian vanishes")
    bz = b_z(seq, depth)
    val = bf.value / bz.orbit
    xs, log_a = _log_a_profile(seq, bf.value)
    ratios = []
    for k in levels:
        if k >= seq.reliable_depth():
            break
        tau = sc.tip(seq, k, allow_shallow=True).point
        F = seq.maps[k]
        eps_y, E, Y, Z = F.jacobian_blocks(tau[None, :])
        lhs = eps_y[0]
        if seq.m:
            lhs = lhs - float(E[0] @ np.linalg.solve(Z[0], Y[0]))
        a_here = np.interp(tau[0], xs, log_a)
        log_ratio = np.log(abs(lhs)) - 2**k * np.log(val) - a_here
        ratios.append(float(np.exp(log_ratio)))
    return B1Report(val, bf.value, bz.orbit, ratios)


@dataclass(frozen=True)
class OverlapReport:
    k: int
    n: int
    overlaps: bool
    overlap_length: float
    x_interval_v: tuple
    x_interval_c: tuple
    resonance_ratio: float


def overlap_scan(seq, k: int, n: int, sigma: float, b1_value: float,
                 per_axis: int = HULL_PER_AXIS) -> OverlapReport:
    """x-axis overlap of the images of the level-(n+1) sibling pieces in
    level-k coordinates, with the resonance ratio sigma^{n-k} / b1^{2^k}."""
    if n + 1 > seq.depth:
        raise DepthExceeded(f"overlap at (k={k}, n={n}) needs depth {n + 1}")
    level_scope = seq.level_scope(n)
    hull = hull_template(seq.m + 2, per_axis)
    piece_v = level_scope.apply_v(hull)
    piece_c = level_scope.apply_c(hull)
    if n > k:
        carrier = sc.ScopeMap(seq, k, sc.Word.all_v(n - k))
        piece_v = carrier.apply(piece_v)
        piece_c = carrier.apply(piece_c)
    iv = (float(piece_v[:, 0].min()), float(piece_v[:, 0].max()))
    ic = (float(piece_c[:, 0].min()), float(piece_c[:, 0].max()))
    length = min(iv[1], ic[1]) - max(iv[0], ic[0])
    ratio = sigma ** (n - k) / b1_value ** (2**k)
    return OverlapReport(k, n, bool(length > 0), float(length), iv, ic, ratio)


@dataclass(frozen=True)
class RatioReport:
    k: int
    n: int
    word: str
    dist: float
    diameter: float
    ratio: float
    sigma_k_bound: float
    fitted_constant: float


def geometry_ratio_scan(seq, k: int, n: int, sigma: float,
                        per_axis: int = HULL_PER_AXIS) -> RatioReport:
    """dist_min / diam of the sibling pieces below the word v^k c v^{n-k-1}."""
    if n + 1 > seq.depth:
        raise DepthExceeded(f"ratio scan at (k={k}, n={n}) needs depth {n + 1}")
    base = ("v",) * k + ("c",) + ("v",) * (n - k - 1)
    p_v = piece(seq, sc.Word(base + ("v",)), per_axis)
    p_c = piece(seq, sc.Word(base + ("c",)), per_axis)
    d_min = dist_min(p_v, p_c)
    d_v = diam(p_v)
    ratio = d_min / d_v if d_v > 0 else np.inf
    bound = sigma**k
    return RatioReport(k, n, "".join(base), d_min, d_v, ratio, bound,
                       ratio / bound)


def holder_bound(b1_value: float, b1_tilde: float) -> float:
    """Upper bound (1/2)(1 + log b1 / log b1_tilde) for the conjugacy exponent."""
    for v in (b1_value, b1_tilde):
        if not 0.0 < v < 1.0:
            raise DomainError(f"universal numbers must lie in (0, 1), got {v}")
    if b1_tilde > b1_value:
        raise DomainError("requires b1 >= b1_tilde")
    return 0.5 * (1.0 + np.log(b1_value) / np.log(b1_tilde))


@dataclass(frozen=True)
class SweepRecord:
    b1: float
    tuned_t: float
    k: int
    n: int
    overlaps: bool
    overlap_length: float
    resonance_ratio: float
    dist_ratio: float
    sigma_k_bound: float


def sweep_b1(f_star, b_values, c: float = 0.3, depth: int = 6,
             k_max: int = 2, degrees=None, sigma: float | None = None):
    """Scan towers of the factorized family over a grid of b1 = |b| values.

    Returns one record per (b1, k, n) pair; at every detected x-overlap the
    sibling dist/diam ratio at the resonant word is attached.
    """
    from . import families as fam
    from . import unimodal as um

    if sigma is None:
        _, J = um.is_renormalizable_1d(f_star)
        sigma = (J[1] - J[0]) / 2.0
    records = []
    t_hint = None
    b_prev = None
    for b in b_values:
        # the tuned parameter scales almost linearly with the seed size
        hint = t_hint * b / b_prev if t_hint is not None else None
        t, seq = fam.tuned_dissipative_tower(
            f_star, depth, b=b, c=c, m=1, degrees=degrees, t_hint=hint
        )
        t_hint, b_prev = t, b
        for k in range(0, min(k_max + 1, depth - 1)):
            for n in range(k + 1, depth):
                rep = overlap_scan(seq, k, n, sigma, abs(b))
                ratio = geometry_ratio_scan(seq, k, n, sigma)
                records.append(
                    SweepRecord(abs(b), t, k, n, rep.overlaps,
                                rep.overlap_length, rep.resonance_ratio,
                                ratio.ratio, ratio.sigma_k_bound)
                )
    return records
