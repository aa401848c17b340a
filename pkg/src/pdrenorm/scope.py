"""Coordinate-change machinery across renormalization levels.

Words over {v, c} index the compositions of the per-level changes; the all-v
composition between levels k < n, translated so the tips sit at the origin,
factors as

    [unit triangular (t, u, d)] [diag(alpha, sigma, sigma Id)] [(x + S, y, z + R(y))]

with the linear part read off the exact derivative at the tip.  Tips and
critical points are computed from a single deepest-level anchor pushed down
through the compositions, which keeps every telescoping identity (the
d-additivity in particular) exact up to roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import funcspace as fs
from . import henon as hn
from .exceptions import DepthExceeded, SingularDerivative


@dataclass(frozen=True)
class Word:
    """Finite word over {v, c}; v = 0 and c = 1, first letter least significant."""

    letters: tuple

    def __post_init__(self):
        if any(l not in ("v", "c") for l in self.letters):
            raise ValueError("letters must be 'v' or 'c'")
        object.__setattr__(self, "letters", tuple(self.letters))

    @classmethod
    def parse(cls, text: str) -> "Word":
        return cls(tuple(text))

    @classmethod
    def all_v(cls, n: int) -> "Word":
        return cls(("v",) * n)

    @classmethod
    def all_c(cls, n: int) -> "Word":
        return cls(("c",) * n)

    @classmethod
    def from_int(cls, value: int, length: int) -> "Word":
        if not 0 <= value < 2**length:
            raise ValueError("value out of range")
        return cls(tuple("c" if (value >> i) & 1 else "v" for i in range(length)))

    def to_int(self) -> int:
        return sum((1 << i) for i, l in enumerate(self.letters) if l == "c")

    def __len__(self):
        return len(self.letters)

    def __str__(self):
        return "".join(self.letters)

    def successor(self) -> "Word":
        """The word of to_int() + 1 mod 2^n (the adding machine step)."""
        return Word.from_int((self.to_int() + 1) % (1 << len(self)), len(self))


class ScopeMap:
    """Composition psi^{k+1}_{w_1} o ... o psi^n_{w_{n-k}} of level changes."""

    def __init__(self, seq: hn.RenormalizationSequence, k: int, word: Word):
        if k + len(word) > seq.depth:
            raise DepthExceeded(
                f"word of length {len(word)} at level {k} needs depth "
                f"{k + len(word)} > {seq.depth}"
            )
        self.seq = seq
        self.k = k
        self.word = word

    @property
    def n(self) -> int:
        return self.k + len(self.word)

    def apply(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        for i in reversed(range(len(self.word))):
            pts = self.seq.level_scope(self.k + i).apply(self.word.letters[i], pts)
        return pts

    def apply_tip_centered(self, pts) -> np.ndarray:
        """Frame with the tips at the origin on both ends (all-v words)."""
        tau_n = tip(self.seq, self.n, allow_shallow=True).point
        tau_k = tip(self.seq, self.k, allow_shallow=True).point
        return self.apply(np.atleast_2d(pts) + tau_n) - tau_k


def compose_scope(seq: hn.RenormalizationSequence, k: int, word: Word) -> ScopeMap:
    return ScopeMap(seq, k, word)


@dataclass(frozen=True)
class TipEstimate:
    point: np.ndarray
    depth_used: int
    radius: float


def _hull_template(dim: int, per_axis: int = 5) -> np.ndarray:
    """Boundary lattice of the unit cube plus its center."""
    axes = [np.linspace(-1.0, 1.0, per_axis)] * dim
    mesh = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], -1)
    on_boundary = np.any(np.abs(mesh) >= 1.0 - 1e-14, axis=1)
    return np.vstack([mesh[on_boundary], np.zeros((1, dim))])


def _anchor(seq: hn.RenormalizationSequence) -> TipEstimate:
    """Approximate tip of the deepest level: the fixed point of the deepest
    available psi_v, found by direct iteration (contraction rate ~ sigma).
    Its error is estimated from the drift between the two deepest levels."""
    key = "tip_anchor"
    if key not in seq.cache:

        def psi_fixed_point(sc):
            w = np.zeros((1, seq.m + 2))
            for _ in range(160):
                w_next = sc.apply_v(w)
                if np.abs(w_next - w).max() < 1e-15:
                    return w_next[0]
                w = w_next
            return w[0]

        point = psi_fixed_point(seq.level_scope(seq.depth - 1))
        radius = 1e-3
        if seq.depth >= 2:
            other = psi_fixed_point(seq.level_scope(seq.depth - 2))
            radius = float(np.abs(point - other).max()) + 1e-15
        seq.cache[key] = TipEstimate(point, seq.depth, radius)
    return seq.cache[key]


def tip(seq: hn.RenormalizationSequence, k: int,
        allow_shallow: bool = False) -> TipEstimate:
    """Tip of level k: nested all-v limit, anchored at the deepest level.

    The public contract needs two levels below k; internal consumers
    (derivative chains at n = depth) may take the anchor itself.
    """
    if seq.depth < k + 2 and not (allow_shallow and k <= seq.depth):
        raise DepthExceeded(f"tip at level {k} needs depth >= {k + 2}")
    key = ("tip", k)
    if key not in seq.cache:
        anchor = _anchor(seq)
        n = seq.depth
        if k == n:
            return anchor
        word = Word.all_v(n - k)
        sm = ScopeMap(seq, k, word)
        point = sm.apply(anchor.point[None, :])[0]
        hull = sm.apply(_hull_template(seq.m + 2, 3))
        radius = 0.5 * float(
            np.linalg.norm(hull.max(axis=0) - hull.min(axis=0))
        )
        seq.cache[key] = TipEstimate(point, n, radius)
    return seq.cache[key]


def critical_point(seq: hn.RenormalizationSequence, k: int) -> np.ndarray:
    """Critical point of level k: nested all-c limit from the deepest level."""
    if seq.depth < k + 2:
        raise DepthExceeded(f"critical point at level {k} needs depth >= {k + 2}")
    key = ("crit", k)
    if key not in seq.cache:
        sm = ScopeMap(seq, k, Word.all_c(seq.depth - k))
        seq.cache[key] = sm.apply(np.zeros((1, seq.m + 2)))[0]
    return seq.cache[key]


@dataclass
class TipDecomposition:
    """Affine and non-linear parts of the tip-centered all-v composition."""

    k: int
    n: int
    alpha: float
    sigma: float
    t: float
    u: np.ndarray
    d: np.ndarray
    S: fs.AnalyticFunction
    R: fs.VectorFunction
    tau_k: np.ndarray
    tau_n: np.ndarray
    matrix: np.ndarray

    def reconstruct(self, pts) -> np.ndarray:
        """Evaluate the factored form at tip-centered points."""
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        m = len(self.u)
        ys = pts[:, 1][:, None]
        r_vals = self.R(ys, slack=1e-6) if m else np.zeros((pts.shape[0], 0))
        core_x = pts[:, 0] + self.S(pts, slack=1e-6)
        core_z = pts[:, 2:] + r_vals
        out = np.empty_like(pts)
        out[:, 1] = self.sigma * pts[:, 1]
        zsig = self.sigma * core_z
        out[:, 0] = (self.alpha * core_x + self.sigma * self.t * pts[:, 1]
                     + zsig @ self.u if m else
                     self.alpha * core_x + self.sigma * self.t * pts[:, 1])
        if m:
            out[:, 2:] = self.sigma * self.d * pts[:, 1][:, None] + zsig
        return out


def _level_keys(seq, k, n):
    if not 0 <= k < n <= seq.depth:
        raise DepthExceeded(f"need 0 <= {k} < {n} <= depth {seq.depth}")


def scope_derivative_at_tips(seq, k: int, n: int) -> np.ndarray:
    """D Psi^n_{k,v} at the level-n tip via the per-level chain rule."""
    _level_keys(seq, k, n)
    d = seq.m + 2
    out = np.eye(d)
    for i in range(k, n):
        tau = tip(seq, i + 1, allow_shallow=True).point
        out = out @ seq.level_scope(i).derivative_v(tau[None, :])[0]
    return out


def decompose_at_tip(seq: hn.RenormalizationSequence, k: int, n: int,
                     s_degree: int | None = None) -> TipDecomposition:
    """Extract (alpha, sigma, t, u, d, S, R) of the all-v scope between k < n."""
    _level_keys(seq, k, n)
    key = ("dec", k, n)
    if key in seq.cache:
        return seq.cache[key]
    m = seq.m
    mat = scope_derivative_at_tips(seq, k, n)
    alpha = mat[0, 0]
    sigma = mat[1, 1]
    if abs(sigma) < 1e-14 or abs(alpha) < 1e-200:
        raise SingularDerivative(f"sigma_nk={sigma:.3e}, alpha_nk={alpha:.3e}")
    t = mat[0, 1] / sigma
    u = mat[0, 2:] / sigma
    dvec = mat[2:, 1] / sigma
    tau_n = tip(seq, n, allow_shallow=True).point
    tau_k = tip(seq, k, allow_shallow=True).point
    sm = ScopeMap(seq, k, Word.all_v(n - k))

    ref = seq.maps[n].ref_box
    centered = fs.Box(
        tuple(lo - tau_n[a] for a, lo in enumerate(ref.lower)),
        tuple(hi - tau_n[a] for a, hi in enumerate(ref.upper)),
    )
    ybox = fs.Box.interval(centered.lower[1], centered.upper[1])

    def raw(pts):
        return sm.apply(np.atleast_2d(pts) + tau_n) - tau_k

    def r_values(pts):
        ys = pts[:, 0]
        full = np.zeros((ys.size, m + 2))
        full[:, 1] = ys
        zc = raw(full)[:, 2:]
        return zc / sigma - dvec * ys[:, None]

    if m:
        r_grid = fs._kernels.gauss_nodes(17)[:, None]
        r_pts = ybox.from_unit(r_grid)
        vals = r_values(r_pts)
        comps = [
            fs.AnalyticFunction(ybox, fs._kernels.values_to_coeffs(vals[:, j]))
            for j in range(m)
        ]
        R = fs.VectorFunction(comps, ybox)
    else:
        R = fs.VectorFunction([], ybox)

    def s_values(pts):
        pts = np.atleast_2d(pts)
        x_img = raw(pts)[:, 0]
        ys = pts[:, 1][:, None]
        rv = R(ys, slack=1e-6) if m else np.zeros((pts.shape[0], 0))
        lin = sigma * (t * pts[:, 1] + ((pts[:, 2:] + rv) @ u if m else 0.0))
        return (x_img - lin) / alpha - pts[:, 0]

    s_deg = s_degree or min(fs.default_degree(m + 2), 12)
    S = fs.project(s_values, centered, s_deg)
    dec = TipDecomposition(k, n, float(alpha), float(sigma), float(t),
                           np.array(u), np.array(dvec), S, R,
                           tau_k, tau_n, mat)
    seq.cache[key] = dec
    return dec


def reconstruction_residual(seq, k: int, n: int, n_per_axis: int = 5) -> float:
    """Factored form against the raw composition on a tip-centered lattice."""
    dec = decompose_at_tip(seq, k, n)
    ref = seq.maps[n].ref_box
    pts = ref.grid(n_per_axis) - dec.tau_n
    sm = ScopeMap(seq, k, Word.all_v(n - k))
    raw = sm.apply(pts + dec.tau_n) - dec.tau_k
    return float(np.abs(raw - dec.reconstruct(pts)).max())


@dataclass(frozen=True)
class DutReport:
    d_additivity: float
    u_sum: float
    t_sum: float
    t_minus_ud_sum: float
    d_increments: list
    u_increments: list
    t_increments: list

    def max_residual(self) -> float:
        return max(self.d_additivity, self.u_sum, self.t_sum, self.t_minus_ud_sum)


def verify_dut_recursions(seq, k: int, n: int) -> DutReport:
    """Telescoping identities of the triangular factors between levels.

    d is additive; u and t satisfy weighted sums with the exact weights
    prod_j alpha_{j+1,j} / sigma_{j+1,j}; the combined t - u.d identity uses
    d_{i+1,k}.  All quantities come from derivative-at-tip decompositions.
    """
    _level_keys(seq, k, n)
    singles = [decompose_at_tip(seq, i, i + 1) for i in range(k, n)]
    full = decompose_at_tip(seq, k, n)
    spans_from = {i: decompose_at_tip(seq, i, n) for i in range(k + 1, n)}
    spans_to = {i: decompose_at_tip(seq, k, i) for i in range(k + 1, n)}

    d_sum = sum((s.d for s in singles), np.zeros(seq.m))
    d_add = float(np.abs(full.d - d_sum).max()) if seq.m else 0.0

    weights = [1.0]
    for s in singles[:-1]:
        weights.append(weights[-1] * s.alpha / s.sigma)
    u_sum = sum(
        (w * s.u for w, s in zip(weights, singles)), np.zeros(seq.m)
    )
    u_res = float(np.abs(full.u - u_sum).max()) if seq.m else 0.0

    t_sum = 0.0
    t_ud_sum = 0.0
    for i, (w, s) in enumerate(zip(weights, singles)):
        level = k + i
        # d_{n, i+1} vanishes for i+1 = n; d_{i+1, k} is the full span there
        d_tail = spans_from[level + 1].d if level + 1 < n else np.zeros(seq.m)
        d_head = spans_to[level + 1].d if level + 1 < n else full.d
        t_sum += w * (s.t + float(s.u @ d_tail))
        t_ud_sum += w * (s.t - float(s.u @ d_head))
    t_res = float(abs(full.t - t_sum))
    t_ud_res = float(abs((full.t - float(full.u @ full.d)) - t_ud_sum))

    d_inc = [float(np.abs(s.d).max()) if seq.m else 0.0 for s in singles]
    u_inc = [float(np.abs(s.u).max()) if seq.m else 0.0 for s in singles]
    t_inc = [float(abs(s.t)) for s in singles]
    return DutReport(d_add, u_res, t_res, t_ud_res, d_inc, u_inc, t_inc)


@dataclass(frozen=True)
class RBoundsReport:
    norm: float
    dnorm: float
    norms_by_level: list
    fitted_rate: float
    recursion_residual: float


def verify_R_bounds(seq, k: int, n: int, n_grid: int = 65) -> RBoundsReport:
    """Norms and decay of the non-linear z-part R_{n,k}(y), plus the exact
    one-level recursion R_{n,k}(y) = R_{n,n-1}(y) + R_{n-1,k}(sigma y)/sigma."""
    _level_keys(seq, k, n)
    if seq.m == 0:
        return RBoundsReport(0.0, 0.0, [], 0.0, 0.0)
    dec = decompose_at_tip(seq, k, n)
    ys = np.linspace(dec.R.box.lower[0], dec.R.box.upper[0], n_grid)[:, None]
    norm = float(np.abs(dec.R(ys)).max())
    dnorm = float(np.abs(dec.R.partial(0)(ys)).max())
    norms = []
    for n2 in range(k + 1, n + 1):
        d2 = decompose_at_tip(seq, k, n2)
        y2 = np.linspace(d2.R.box.lower[0], d2.R.box.upper[0], n_grid)[:, None]
        norms.append(float(np.abs(d2.R(y2)).max()))
    rate = 0.0
    usable = [(i, v) for i, v in enumerate(norms) if v > 1e-15]
    if len(usable) >= 2:
        idx, vals = zip(*usable)
        rate = float(np.exp(np.polyfit(idx, np.log(vals), 1)[0]))
    resid = 0.0
    if n - k >= 2:
        last = decompose_at_tip(seq, n - 1, n)
        prev = decompose_at_tip(seq, k, n - 1)
        s_last = last.sigma
        lo = max(dec.R.box.lower[0], last.R.box.lower[0])
        hi = min(dec.R.box.upper[0], last.R.box.upper[0])
        ys = np.linspace(lo, hi, n_grid)
        inner = np.clip(s_last * ys, prev.R.box.lower[0], prev.R.box.upper[0])
        lhs = dec.R(ys[:, None])
        rhs = last.R(ys[:, None]) + prev.R(inner[:, None]) / s_last
        resid = float(np.abs(lhs - rhs).max())
    return RBoundsReport(norm, dnorm, norms, rate, resid)


def verify_q_sum_identity(seq, k: int, n: int, n_grid: int = 33) -> float:
    """sum_i q_i(pi_y Psi^n_{i,v}(w)) against d_{n,k} + R'_{n,k} on a y-grid."""
    _level_keys(seq, k, n)
    if seq.m == 0:
        return 0.0
    dec = decompose_at_tip(seq, k, n)
    ref = seq.maps[n].ref_box
    ys = np.linspace(ref.lower[1] + 1e-9, ref.upper[1] - 1e-9, n_grid)
    lhs = np.zeros((n_grid, seq.m))
    y = ys.copy()
    for i in reversed(range(k, n)):
        sc = seq.level_scope(i)
        y = sc.sigma0 * y + sc.beta
        lhs += sc.q(y[:, None], slack=1e-6)
    centered = np.clip(ys - dec.tau_n[1], dec.R.box.lower[0], dec.R.box.upper[0])
    rhs = dec.d[None, :] + dec.R.partial(0)(centered[:, None])
    return float(np.abs(lhs - rhs).max())
