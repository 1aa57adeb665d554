"""Relatively separated point sets, partitions of unity and oscillation bounds.

Point sets are built as jittered lattices in the exponential coordinates
(t1, t2) of the neighborhood ``U_eps = {exp(t1 X1) exp(t2 X2)}``, whose left
translate by a point ``x_i = (a_i, b_i)`` is exactly

    ``x_i U_eps = {(a, b) : |log(a/a_i)| <= eps and |b - b_i| <= eps * a}``.

That coordinate description makes covering checks, overlap counts, Voronoi
assignment and sequence-norm assembly cheap and exact.  Covering is
verified constructively against the quadrature grid rather than assumed.

The oscillation machinery follows two routes: a lattice supremum of
``|f(x u^{-1}) - f(x)|`` over the neighborhood, and the derivative route
that integrates ``|R^alpha f|`` composed with the one-parameter factors of
the neighborhood (the bound whose constant is carried separately).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix

from .grid import GridFunction, HaarGrid, lp_norm
from .group import GroupElement

__all__ = [
    "SampleSet",
    "BUPU",
    "SequenceCoefficients",
    "CoveringError",
    "generate_separated_set",
    "build_bupu",
    "bseq_norm",
    "oscillation_sup",
    "oscillation_interior_mask",
    "oscillation_derivative_bound",
    "right_derivatives",
    "ALPHAS_ORDER_ONE",
    "ALPHAS_ORDER_TWO",
    "all_alphas",
]

ALPHAS_ORDER_ONE = [(1,), (2,)]
ALPHAS_ORDER_TWO = [(1, 1), (1, 2), (2, 1), (2, 2)]


def all_alphas(dim=2, max_order=2):
    """Multi-indices 1 <= |alpha| <= max_order over the available directions."""
    if dim == 1:
        return [(2,), (2, 2)][: max_order if max_order <= 2 else 2]
    out = [a for a in ALPHAS_ORDER_ONE]
    if max_order >= 2:
        out += ALPHAS_ORDER_TWO
    return out


class CoveringError(RuntimeError):
    """Raised when the translated neighborhoods fail to cover the grid."""

    def __init__(self, uncovered: int, total: int):
        super().__init__(f"{uncovered} of {total} grid nodes not covered by the sample neighborhoods")
        self.uncovered = uncovered
        self.total = total


@dataclass
class SampleSet:
    """A U_eps-relatively separated family of points tied to a grid."""

    grid: HaarGrid
    log_a: np.ndarray  # log-scale coordinates of the points
    b: np.ndarray
    eps: float
    overlap_N: int = 0
    covering_ok: bool = False
    uncovered: int = 0

    def __post_init__(self):
        self.log_a = np.asarray(self.log_a, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.a = np.exp(self.log_a)

    def __len__(self):
        return self.log_a.size

    @property
    def points(self):
        return [GroupElement(float(a), float(b)) for a, b in zip(self.a, self.b)]

    def membership_ranges(self):
        """Per-point grid index ranges of the neighborhood x_i U_eps.

        Returns (row_lo, row_hi, col_lo, col_hi) arrays: point i owns grid
        rows row_lo[i]:row_hi[i], and within grid row r the columns
        col_lo[i, r], col_hi[i, r) (half-open).  Membership of node (la, b)
        is |la - la_i| <= eps and |b - b_i| <= eps * exp(la).
        """
        g = self.grid
        row_lo = np.searchsorted(g.log_a, self.log_a - self.eps, side="left")
        row_hi = np.searchsorted(g.log_a, self.log_a + self.eps, side="right")
        return row_lo, row_hi

    def neighborhood_mask(self, i: int):
        g = self.grid
        la_ok = np.abs(g.log_a - self.log_a[i]) <= self.eps
        b_ok = np.abs(g.b[None, :] - self.b[i]) <= self.eps * g.a[:, None]
        return la_ok[:, None] & b_ok

    def recompute_overlap(self) -> int:
        """Exhaustive pairwise overlap count of the closed neighborhoods."""
        la, b, eps = self.log_a, self.b, self.eps
        order = np.argsort(la, kind="stable")
        la_s, b_s = la[order], b[order]
        n = la.size
        best = 0
        for i in range(n):
            lo = np.searchsorted(la_s, la_s[i] - 2 * eps, side="left")
            hi = np.searchsorted(la_s, la_s[i] + 2 * eps, side="right")
            cand = slice(lo, hi)
            # the widest common slice decides the b criterion
            top = np.exp(np.minimum(la_s[cand], la_s[i]) + eps)
            cnt = int(np.sum(np.abs(b_s[cand] - b_s[i]) <= 2 * eps * top))
            best = max(best, cnt)
        return best

    def to_json(self, path=None):
        desc = {
            "eps": self.eps,
            "overlap_N": int(self.overlap_N),
            "covering_ok": bool(self.covering_ok),
            "points_a": [float(x) for x in self.a],
            "points_b": [float(x) for x in self.b],
        }
        if path is not None:
            with open(path, "w") as fh:
                json.dump(desc, fh, indent=2, sort_keys=True)
        return desc

    @classmethod
    def from_json(cls, desc, grid):
        ss = cls(grid, np.log(np.asarray(desc["points_a"])), np.asarray(desc["points_b"]), desc["eps"])
        ss.overlap_N = desc["overlap_N"]
        ss.covering_ok = desc["covering_ok"]
        return ss


def _check_covering(ss: SampleSet):
    """Count grid nodes not covered by any x_i U_eps."""
    g = ss.grid
    order = np.argsort(ss.b, kind="stable")
    b_sorted = ss.b[order]
    la_sorted = ss.log_a[order]
    uncovered = 0
    for r, la in enumerate(g.log_a):
        ok_rows = np.abs(la_sorted - la) <= ss.eps
        bs = b_sorted[ok_rows]
        if bs.size == 0:
            uncovered += g.b.size
            continue
        half = ss.eps * g.a[r]
        # nearest sample in b decides coverage of this grid row
        pos = np.searchsorted(bs, g.b)
        left = bs[np.clip(pos - 1, 0, bs.size - 1)]
        right = bs[np.clip(pos, 0, bs.size - 1)]
        dist = np.minimum(np.abs(g.b - left), np.abs(g.b - right))
        uncovered += int(np.sum(dist > half))
    return uncovered


def generate_separated_set(eps, jitter, seed, grid: HaarGrid, rho=0.75) -> SampleSet:
    """Jittered covering lattice in exponential coordinates.

    Rows are placed every ``rho * eps`` in log-scale and points every
    ``rho * eps`` in the t2 coordinate (so spacing ``rho * eps * a_row``
    along the shift axis); each coordinate is jittered uniformly by up to
    ``jitter * rho * eps / 2``.  Covering of the grid and the overlap count
    are verified exhaustively; failure to cover raises CoveringError.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not (0 <= jitter < 1):
        raise ValueError("jitter must lie in [0, 1)")
    if not (0 < rho <= 1):
        raise ValueError("rho must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    step = rho * eps
    amp = jitter * step / 2.0

    a_min, a_max, b_min, b_max = grid.bounds
    if grid.is_real_line:
        rows_la = np.array([0.0])
    else:
        la_lo, la_hi = np.log(a_min), np.log(a_max)
        n_rows = max(1, int(np.ceil((la_hi - la_lo) / step)))
        offset = ((la_hi - la_lo) - (n_rows - 1) * step) / 2.0
        rows_la = la_lo + offset + step * np.arange(n_rows)

    pts_la, pts_b = [], []
    for la_row in rows_la:
        la_jit = la_row + (rng.uniform(-amp, amp) if amp > 0 else 0.0)
        a_row = np.exp(la_jit)
        # t2 lattice wide enough that b = a * t2 spans the box
        t2_lo, t2_hi = b_min / a_row, b_max / a_row
        n_cols = max(1, int(np.ceil((t2_hi - t2_lo) / step)))
        off = ((t2_hi - t2_lo) - (n_cols - 1) * step) / 2.0
        t2 = t2_lo + off + step * np.arange(n_cols)
        if amp > 0:
            t2 = t2 + rng.uniform(-amp, amp, size=t2.size)
        pts_la.append(np.full(t2.size, la_jit))
        pts_b.append(a_row * t2)
    ss = SampleSet(grid, np.concatenate(pts_la), np.concatenate(pts_b), float(eps))
    ss.uncovered = _check_covering(ss)
    ss.covering_ok = ss.uncovered == 0
    if not ss.covering_ok:
        raise CoveringError(ss.uncovered, grid.shape[0] * grid.shape[1])
    ss.overlap_N = ss.recompute_overlap()
    return ss


@dataclass
class BUPU:
    """Partition of unity subordinate to the sample neighborhoods.

    Stored sparsely: ``assignment`` maps each grid node to its owning point
    for the indicator kind; the smooth kind keeps a CSR matrix of psi_i
    values over nodes.  ``mass`` is the Haar integral of each psi_i.
    """

    sample_set: SampleSet
    kind: str
    assignment: np.ndarray = None  # (n_nodes,) int, indicator kind
    matrix: csr_matrix = None  # (n_points, n_nodes), smooth kind
    mass: np.ndarray = None

    @property
    def grid(self):
        return self.sample_set.grid

    def assemble(self, point_values) -> GridFunction:
        """The grid function sum_i point_values[i] * psi_i."""
        g = self.grid
        point_values = np.asarray(point_values, dtype=complex)
        if self.kind == "indicator":
            flat = np.where(self.assignment >= 0, point_values[np.maximum(self.assignment, 0)], 0.0)
            return GridFunction(g, flat.reshape(g.shape))
        flat = self.matrix.T.dot(point_values)
        return GridFunction(g, flat.reshape(g.shape))

    def integrate_against(self, F: GridFunction) -> np.ndarray:
        """lambda_i = integral F psi_i dmu for every i."""
        g = self.grid
        wf = (g.node_weights * F.values).ravel()
        if self.kind == "indicator":
            ok = self.assignment >= 0
            out = np.zeros(len(self.sample_set), dtype=complex)
            np.add.at(out, self.assignment[ok], wf[ok])
            return out
        return self.matrix.dot(wf)

    def partition_sum(self) -> GridFunction:
        return self.assemble(np.ones(len(self.sample_set)))

    def to_json(self, path=None):
        desc = {"kind": self.kind, "sample_set": self.sample_set.to_json()}
        if self.kind == "indicator":
            desc["assignment"] = [int(i) for i in self.assignment]
        else:
            coo = self.matrix.tocoo()
            desc["entries"] = {
                "i": [int(x) for x in coo.row],
                "node": [int(x) for x in coo.col],
                "value": [float(x) for x in coo.data],
            }
        if path is not None:
            with open(path, "w") as fh:
                json.dump(desc, fh, sort_keys=True)
        return desc


def build_bupu(ss: SampleSet, kind="indicator") -> BUPU:
    """The partition of unity subordinate to {x_i U_eps}.

    Indicator kind: nearest-center Voronoi assignment in exponential
    coordinates, restricted to centers whose neighborhood contains the
    node (lowest index wins ties).  Smooth kind: normalized tensor cosine
    bumps in the same coordinates.
    """
    if not ss.covering_ok:
        raise CoveringError(ss.uncovered, ss.grid.shape[0] * ss.grid.shape[1])
    g = ss.grid
    n_nodes = g.shape[0] * g.shape[1]
    n_pts = len(ss)
    eps = ss.eps

    if kind == "indicator":
        assignment = np.full(n_nodes, -1, dtype=int)
        best = np.full(n_nodes, np.inf)
        node_la = np.repeat(g.log_a, g.b.size)
        node_b = np.tile(g.b, g.log_a.size)
        node_a = np.exp(node_la)
        # ascending index + strict inequality = lowest index wins ties
        for i in range(n_pts):
            t1 = node_la - ss.log_a[i]
            t2 = (node_b - ss.b[i]) / node_a
            member = (np.abs(t1) <= eps) & (np.abs(t2) <= eps)
            d = np.where(member, t1**2 + t2**2, np.inf)
            better = member & (d < best)
            assignment[better] = i
            best[better] = d[better]
        bupu = BUPU(ss, "indicator", assignment=assignment)
    elif kind == "smooth":
        rows, cols, vals = [], [], []
        node_la = np.repeat(g.log_a, g.b.size)
        node_b = np.tile(g.b, g.log_a.size)
        node_a = np.exp(node_la)
        for i in range(n_pts):
            t1 = node_la - ss.log_a[i]
            t2 = (node_b - ss.b[i]) / node_a
            member = (np.abs(t1) < eps) & (np.abs(t2) < eps)
            idx = np.nonzero(member)[0]
            if idx.size == 0:
                continue
            bump = np.cos(np.pi * t1[idx] / (2 * eps)) ** 2 * np.cos(np.pi * t2[idx] / (2 * eps)) ** 2
            rows.append(np.full(idx.size, i))
            cols.append(idx)
            vals.append(bump)
        mat = csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n_pts, n_nodes),
        )
        total = np.asarray(mat.sum(axis=0)).ravel()
        covered = total > 0
        scale = np.where(covered, 1.0 / np.where(covered, total, 1.0), 0.0)
        mat = mat.multiply(scale[None, :]).tocsr()
        bupu = BUPU(ss, "smooth", matrix=mat)
    else:
        raise ValueError(f"kind must be 'indicator' or 'smooth', got {kind!r}")
    bupu.mass = bupu.integrate_against(GridFunction(g, np.ones(g.shape))).real
    return bupu


@dataclass
class SequenceCoefficients:
    """Coefficients indexed like a SampleSet, with an L^p context."""

    values: np.ndarray
    sample_set: SampleSet
    p: float = 2.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (len(self.sample_set),):
            raise ValueError("coefficient count must match the sample set")


def bseq_norm(lam: SequenceCoefficients) -> float:
    """Sequence-space norm || sum_i |lam_i| 1_{x_i U_eps} ||_p on the grid."""
    ss = lam.sample_set
    g = ss.grid
    acc = np.zeros(g.shape, dtype=float)
    absv = np.abs(lam.values)
    eps = ss.eps
    for i in np.nonzero(absv)[0]:
        r_lo = int(np.searchsorted(g.log_a, ss.log_a[i] - eps, side="left"))
        r_hi = int(np.searchsorted(g.log_a, ss.log_a[i] + eps, side="right"))
        for r in range(r_lo, r_hi):
            half = eps * g.a[r]
            c_lo = int(np.searchsorted(g.b, ss.b[i] - half, side="left"))
            c_hi = int(np.searchsorted(g.b, ss.b[i] + half, side="right"))
            if c_hi > c_lo:
                acc[r, c_lo:c_hi] += absv[i]
    return lp_norm(GridFunction(g, acc, lam.p))


def oscillation_interior_mask(grid: HaarGrid, eps, side="right") -> np.ndarray:
    """Nodes whose whole U_eps query set stays inside the truncation box.

    Oscillations at nodes outside this mask compare against zero-filled
    values, so their size reflects the box truncation rather than the
    function; ratio studies over several eps levels should restrict norms
    to the mask of the largest eps to keep levels comparable.
    """
    a, b = grid.meshgrid()
    a_min, a_max, b_min, b_max = grid.bounds
    if grid.is_real_line:
        return (b - eps >= b_min) & (b + eps <= b_max)
    if side == "right":
        lo_a, hi_a = a * np.exp(-eps), a * np.exp(eps)
        lo_b, hi_b = b - a * eps, b + a * eps
    else:
        lo_a, hi_a = a * np.exp(-eps), a * np.exp(eps)
        reach = np.exp(eps) * (np.abs(b) + eps)
        lo_b, hi_b = -reach, reach
    return (lo_a >= a_min) & (hi_a <= a_max) & (lo_b >= b_min) & (hi_b <= b_max)


def oscillation_sup(F: GridFunction, eps, side="right", u_resolution=9) -> GridFunction:
    """Lattice supremum of local oscillations over the neighborhood U_eps.

    ``side="right"`` computes sup over u in U_eps of |F(x u^{-1}) - F(x)|,
    ``side="left"`` the version |F(u x) - F(x)|.  The supremum runs over a
    u_resolution x u_resolution coordinate lattice of the neighborhood (a
    single axis on real-line grids); off-node values are interpolated and
    zero outside the box.
    """
    if u_resolution < 3:
        raise ValueError("u_resolution must be at least 3")
    grid = F.grid
    a, b = grid.meshgrid()
    t_axis = np.linspace(-eps, eps, u_resolution)
    t1_axis = np.array([0.0]) if grid.is_real_line else t_axis
    out = np.zeros(grid.shape, dtype=float)
    base = F.values
    for t1 in t1_axis:
        for t2 in t_axis:
            if t1 == 0.0 and t2 == 0.0:
                continue
            if side == "right":
                # x (e^{t1 X1} e^{t2 X2})^{-1} = (a e^{-t1}, b - a t2)
                qa, qb = a * np.exp(-t1), b - a * t2
            elif side == "left":
                # e^{t1 X1} e^{t2 X2} x = (a e^{t1}, e^{t1}(b + t2))
                qa, qb = a * np.exp(t1), np.exp(t1) * (b + t2)
            else:
                raise ValueError(f"side must be 'right' or 'left', got {side!r}")
            shifted = grid.interpolate(base, qa, qb)
            np.maximum(out, np.abs(shifted - base), out=out)
    return GridFunction(grid, out, F.p)


def _gauss_nodes(eps, n):
    x, w = np.polynomial.legendre.leggauss(n)
    return x * eps, w * eps


def oscillation_derivative_bound(F_derivs: dict, eps, side="right", quad_nodes=9, grid: HaarGrid = None) -> GridFunction:
    """Sum of iterated integrals of |R^alpha F| over the neighborhood factors.

    ``F_derivs`` maps multi-indices (1 <= |alpha| <= dim) to GridFunctions
    of the corresponding one-sided derivatives.  The returned grid function
    is the derivative-route oscillation bound with its (implicit) constant
    carried separately by the caller.
    """
    some = next(iter(F_derivs.values()))
    grid = grid or some.grid
    dim = 1 if grid.is_real_line else 2
    needed = all_alphas(dim=dim, max_order=dim)
    missing = [al for al in needed if al not in F_derivs]
    if missing:
        raise KeyError(f"missing derivative entries {missing}")
    if side not in ("right", "left"):
        raise ValueError(f"side must be 'right' or 'left', got {side!r}")
    a, b = grid.meshgrid()
    t, w = _gauss_nodes(eps, quad_nodes)
    total = np.zeros(grid.shape, dtype=float)

    def query(vals, t1, t2):
        # tau_delta(t) = e^{t1 X1} e^{t2 X2}; right side composes with its
        # inverse on the right, left side multiplies on the left
        if side == "right":
            qa, qb = a * np.exp(-t1), b - a * t2
        else:
            qa, qb = a * np.exp(t1), np.exp(t1) * (b + t2)
        return np.abs(grid.interpolate(vals, qa, qb))

    for alpha in needed:
        vals = F_derivs[alpha].values
        if len(alpha) == 1:
            if dim == 2:
                acc1 = np.zeros(grid.shape)
                for tk, wk in zip(t, w):
                    acc1 += wk * query(vals, tk, 0.0)
                total += acc1
            acc2 = np.zeros(grid.shape)
            for tk, wk in zip(t, w):
                acc2 += wk * query(vals, 0.0, tk)
            total += acc2
        else:
            acc = np.zeros(grid.shape)
            for t1k, w1k in zip(t, w):
                for t2k, w2k in zip(t, w):
                    acc += w1k * w2k * query(vals, t1k, t2k)
            total += acc
    return GridFunction(grid, total, some.p)


def right_derivatives(f, grid: HaarGrid, order=2, h=1e-3, which=None) -> dict:
    """Central-difference right derivatives of a closed-form function on G.

    ``f`` is a vectorized callable of node coordinate arrays (a, b).  The
    one-parameter factors are composed exactly in coordinates, so each
    |alpha| = 2 entry costs four evaluations.  Multi-indices follow the
    convention that the first entry acts first.
    """
    if h <= 0:
        raise ValueError("step must be positive")
    dim = 1 if grid.is_real_line else 2
    if not grid.is_real_line and h >= grid.d_log_a * grid.shape[0] / 2:
        raise ValueError("step too large for the truncation box")
    a, b = grid.meshgrid()

    def compose(a0, b0, t, k):
        # x * exp(t X_k)
        if k == 1:
            return a0 * np.exp(t), b0
        return a0, b0 + a0 * t

    alphas = which if which is not None else all_alphas(dim=dim, max_order=order)
    out = {}
    for alpha in alphas:
        alpha = tuple(alpha)
        if len(alpha) == 1:
            (k,) = alpha
            ap, bp = compose(a, b, +h, k)
            am, bm = compose(a, b, -h, k)
            vals = (f(ap, bp) - f(am, bm)) / (2 * h)
        elif len(alpha) == 2:
            k1, k2 = alpha  # k1 acts first, k2 is the outer derivative
            vals = np.zeros(grid.shape, dtype=complex)
            for s2, c2 in ((+h, 1.0), (-h, -1.0)):
                a2, b2 = compose(a, b, s2, k2)
                for s1, c1 in ((+h, 1.0), (-h, -1.0)):
                    a1, b1 = compose(a2, b2, s1, k1)
                    vals = vals + c1 * c2 * f(a1, b1)
            vals = vals / (4 * h * h)
        else:
            raise ValueError("derivatives are provided up to order 2")
        out[alpha] = GridFunction(grid, vals)
    return out
