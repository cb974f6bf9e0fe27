"""Weighted infimal convolution, convex envelopes and log-concavity diagnostics."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from ._kernels import bilinear_many, infimal_convolution_arrays
from .geometry import Grid2D, signed_distance
from .grid import GridField


class NonConvexMaskError(ValueError):
    pass


@dataclass(eq=False)
class InfConvResult:
    w: GridField
    x0: np.ndarray = field(repr=False)
    x1: np.ndarray = field(repr=False)
    gap: np.ndarray = field(repr=False)
    t: float = 0.5
    unreachable: int = 0

    def witness_table(self) -> np.ndarray:
        """Rows (x, y, x0, y0, x1, y1, w) for the interior nodes of the output grid."""
        g = self.w.grid
        P = g.points()[g.mask]
        return np.column_stack([P, self.x0, self.x1, self.w.values[g.mask]])


def neg_log_transform(u: GridField, floor: float = 1e-12) -> GridField:
    """v = -log(max(u, floor)) on interior nodes, +inf elsewhere."""
    if not floor > 0:
        raise ValueError("floor must be positive")
    m = u.grid.mask
    inner = u.values[m]
    if np.any(inner < 0):
        raise ValueError("u must be nonnegative on interior nodes")
    v = np.full(u.grid.shape, np.inf)
    v[m] = -np.log(np.maximum(inner, floor))
    return GridField(u.grid, v, "v", {"floor": floor, "truncated": int(np.sum(inner < floor))})


def _read_many(v: GridField, pts: np.ndarray, logspace: bool) -> np.ndarray:
    g = v.grid
    if logspace:
        with np.errstate(divide="ignore"):
            return -np.log(bilinear_many(np.exp(-v.values), *g.origin, g.h, pts[:, 0], pts[:, 1]))
    return bilinear_many(np.ascontiguousarray(v.values), *g.origin, g.h, pts[:, 0], pts[:, 1])


def infimal_convolution(v0: GridField, v1: GridField, t: float, out: Grid2D, refine: bool = False,
                        interp: str = "linear", nodes: str = "v0", subdivide: int = 1) -> InfConvResult:
    """w(x) = inf {(1-t) v0(x0) + t v1(x1) : x = (1-t) x0 + t x1} at the interior nodes of ``out``.

    x0 ranges over the finite nodes of v0.  With ``interp="linear"`` v1 is
    read by bilinear interpolation, infinite as soon as a corner with
    positive weight is.  ``interp="log"`` reads v1 as -log of the bilinear
    interpolant of exp(-v1); for v = -log u this interpolates the smooth
    function u and stays accurate next to the zero set of u, where v blows up.
    With ``refine`` the best lattice point is polished by minimising a local
    quadratic model with cubic interpolation, which removes the lattice
    noise in w for smooth fields at the cost of exact agreement with the
    lattice search (it overshoots near logarithmic singularities).

    ``nodes`` selects the field searched over its lattice ("v0", "v1", or
    "auto" for the one with the smaller weight).  A branch x -> t v1((x - c)/t)
    of the lattice minimum has curvature D^2 v1 / t, so searching the
    lightly weighted field keeps the branches close to the true curvature.
    ``subdivide = k > 1`` follows the lattice search with a scan of the
    lattice of spacing h/k within one cell of the best node, reading the
    searched field off-node with the same interpolation; the sawtooth left by
    the discrete minimisation shrinks like 1/k^2.  Witnesses are always
    reported as (x0, x1).
    """
    if not 0 < t < 1:
        raise ValueError("t must lie strictly between 0 and 1; endpoints are handled by the caller")
    if interp not in ("linear", "log"):
        raise ValueError("interp must be 'linear' or 'log'")
    if nodes not in ("v0", "v1", "auto"):
        raise ValueError("nodes must be 'v0', 'v1' or 'auto'")
    if int(subdivide) != subdivide or subdivide < 1:
        raise ValueError("subdivide must be a positive integer")
    if nodes == "v1" or (nodes == "auto" and t < 0.5):
        r = infimal_convolution(v1, v0, 1 - t, out, refine, interp, "v0", subdivide)
        return InfConvResult(r.w, r.x1, r.x0, r.gap, float(t), r.unreachable)
    logspace = interp == "log"
    P = out.points()[out.mask]
    w, x0x, x0y = infimal_convolution_arrays(v0.values, v0.grid.origin, v0.grid.h,
                                             v1.values, v1.grid.origin, v1.grid.h,
                                             t, P[:, 0], P[:, 1], refine, logspace, int(subdivide))
    x0 = np.column_stack([x0x, x0y])
    x1 = (P - (1 - t) * x0) / t
    ok = np.isfinite(w)
    gap = np.full(w.shape, np.nan)
    if ok.any():
        a = _read_many(v0, x0[ok], logspace)
        b = _read_many(v1, x1[ok], logspace)
        gap[ok] = w[ok] - ((1 - t) * a + t * b)
    vals = np.full(out.shape, np.inf)
    vals[out.mask] = w
    return InfConvResult(GridField(out, vals, "v"), x0, x1, gap, float(t), int((~ok).sum()))


def infimal_convolution_many(fields: Sequence[GridField], weights: Sequence[float], grids: Sequence[Grid2D],
                             refine: bool = False) -> GridField:
    """Fold k > 2 functions pairwise; ``grids[i]`` is the output grid of the i-th partial combination."""
    if len(fields) != len(weights) or len(grids) != len(fields) - 1:
        raise ValueError("need one weight per field and one grid per fold")
    acc, acc_w = fields[0], weights[0]
    for f, w, g in zip(fields[1:], weights[1:], grids):
        tot = acc_w + w
        acc = infimal_convolution(acc, f, w / tot, g, refine).w
        acc_w = tot
    return acc


def brute_force_infconv(v0: GridField, v1: GridField, t: float, out: Grid2D) -> np.ndarray:
    """Exhaustive O(N_out N_0) search with an independent bilinear reader (small grids only)."""
    from scipy.interpolate import RegularGridInterpolator

    g1 = v1.grid
    xs = g1.origin[0] + g1.h * np.arange(g1.nx)
    ys = g1.origin[1] + g1.h * np.arange(g1.ny)
    finite = np.isfinite(v1.values)
    interp = RegularGridInterpolator((xs, ys), np.where(finite, v1.values, 0.0), bounds_error=False,
                                     fill_value=np.nan)
    bad = RegularGridInterpolator((xs, ys), (~finite).astype(float), bounds_error=False, fill_value=1.0)
    X0 = v0.grid.points()[np.isfinite(v0.values)]
    V0 = v0.values[np.isfinite(v0.values)]
    res = []
    for x in out.points()[out.mask]:
        x1 = (x - (1 - t) * X0) / t
        b = interp(x1)
        # an infinite corner with positive weight makes the value infinite
        b = np.where(bad(x1) > 1e-9, np.inf, b)
        b = np.where(np.isnan(b), np.inf, b)
        res.append(np.min((1 - t) * V0 + t * b))
    return np.array(res)


def node_pair_infconv(v0: GridField, v1: GridField, t: float, out: Grid2D) -> np.ndarray:
    """Exhaustive search over node pairs (x0, x1) with (1-t) x0 + t x1 exactly a node of ``out``."""
    h = out.h
    res = np.full(out.n_interior, np.inf)
    P = np.rint(out.points()[out.mask] / h).astype(np.int64)
    index = {tuple(p): k for k, p in enumerate(P)}
    I0 = np.rint(v0.grid.points()[np.isfinite(v0.values)] / v0.grid.h).astype(np.int64)
    V0 = v0.values[np.isfinite(v0.values)]
    I1 = np.rint(v1.grid.points()[np.isfinite(v1.values)] / v1.grid.h).astype(np.int64)
    V1 = v1.values[np.isfinite(v1.values)]
    for a, va in zip(I0, V0):
        z = (1 - t) * a + t * I1
        zr = np.rint(z)
        ok = np.all(np.abs(z - zr) < 1e-9, axis=1)
        for zz, vb in zip(zr[ok].astype(np.int64), V1[ok]):
            k = index.get(tuple(zz))
            if k is not None:
                res[k] = min(res[k], (1 - t) * va + t * vb)
    return res


# ---------------------------------------------------------------------------
# boundary behaviour of w
# ---------------------------------------------------------------------------

def divergence_at_boundary_check(result: InfConvResult, domain, domains: Sequence, inputs: Sequence[GridField],
                                 threshold: Optional[float] = None, layer: Optional[float] = None) -> dict:
    """Discrete shadow of w -> +inf at the boundary of the combination.

    Checks that ring minima of w grow towards the boundary, that the
    outermost interior ring exceeds ``threshold`` (default: half the
    smallest outermost-ring value of the inputs), and that witnesses of
    boundary-layer nodes hug the boundaries: d_i <= d/t_i with the stronger
    (1-t) d_0 + t d_1 <= d, up to 2h.
    """
    t = result.t
    ranges = [np.ptp(f.values[np.isfinite(f.values)]) for f in inputs]
    if max(ranges) <= 1e-12:
        return {"applicable": False, "passed": True, "reason": "constant inputs (indicator case)"}
    g = result.w.grid
    h = g.h
    P = g.points()[g.mask]
    w = result.w.values[g.mask]
    d = -signed_distance(domain, P)
    if layer is None:
        layer = 6 * h
    ring = np.floor(np.maximum(d, 0) / h).astype(int)
    in_layer = d <= layer
    kmax = int(np.ceil(layer / h))
    mins = [float(np.min(w[ring == k])) if np.any((ring == k) & np.isfinite(w)) else np.nan for k in range(kmax)]
    valid = [m for m in mins if np.isfinite(m)]
    monotone = all(a >= b - 1e-9 for a, b in zip(valid, valid[1:]))
    outer_vals = []
    for f in inputs:
        fg = f.grid
        fin = np.isfinite(f.values)
        border = fin.copy()
        border[1:-1, 1:-1] = fin[1:-1, 1:-1] & ~(fin[2:, 1:-1] & fin[:-2, 1:-1] & fin[1:-1, 2:] & fin[1:-1, :-2])
        outer_vals.append(float(np.min(f.values[border & fin])))
    if threshold is None:
        threshold = 0.5 * min(outer_vals)
    finite_w = np.isfinite(w)
    outermost = finite_w & (ring == ring[finite_w].min()) if finite_w.any() else finite_w
    ring_min = float(np.min(w[outermost])) if outermost.any() else np.nan
    sel = in_layer & finite_w
    d0 = -signed_distance(domains[0], result.x0[sel])
    d1 = -signed_distance(domains[1], result.x1[sel])
    dl = d[sel]
    ok_i = (d0 <= (dl + 2 * h) / (1 - t)) & (d1 <= (dl + 2 * h) / t)
    ok_sum = (1 - t) * d0 + t * d1 <= dl + 2 * h
    return {
        "applicable": True,
        "ring_minima": mins,
        "monotone": bool(monotone),
        "outermost_ring_min": ring_min,
        "threshold": float(threshold),
        "threshold_met": bool(ring_min >= threshold),
        "witness_nodes": int(sel.sum()),
        "witness_inclusion_fraction": float(ok_i.mean()) if sel.any() else 1.0,
        "witness_sum_fraction": float(ok_sum.mean()) if sel.any() else 1.0,
        "passed": bool(monotone and ring_min >= threshold and ok_i.all()),
    }


# ---------------------------------------------------------------------------
# convex envelopes
# ---------------------------------------------------------------------------

def mask_is_lattice_convex(mask: np.ndarray) -> bool:
    """Every lattice point of the convex hull of the mask nodes belongs to the mask."""
    I, J = np.nonzero(mask)
    pts = np.column_stack([I, J]).astype(float)
    if len(pts) < 3:
        return True
    try:
        hull = ConvexHull(pts)
    except QhullError:
        # collinear node set: convex iff it has no gaps along the line
        return True
    A = hull.equations[:, :2]
    b = hull.equations[:, 2]
    ii, jj = np.meshgrid(np.arange(mask.shape[0]), np.arange(mask.shape[1]), indexing="ij")
    Q = np.column_stack([ii.ravel(), jj.ravel()]).astype(float)
    inside = np.all(Q @ A.T + b <= 1e-9, axis=1).reshape(mask.shape)
    return bool(np.all(mask[inside]))


def _lower_envelope(pts: np.ndarray, vals: np.ndarray, query: np.ndarray) -> np.ndarray:
    scale = max(1.0, float(np.max(np.abs(vals))))
    A = np.column_stack([pts, np.ones(len(pts))])
    coef, *_ = np.linalg.lstsq(A, vals, rcond=None)
    if np.max(np.abs(A @ coef - vals)) <= 1e-12 * scale:
        return np.column_stack([query, np.ones(len(query))]) @ coef
    hull = ConvexHull(np.column_stack([pts, vals]))
    eq = hull.equations
    lower = eq[eq[:, 2] < -1e-12]
    # plane: n.x + c = 0  ->  z = -(n_x x + n_y y + c) / n_z
    a = -lower[:, 0] / lower[:, 2]
    b = -lower[:, 1] / lower[:, 2]
    c = -lower[:, 3] / lower[:, 2]
    out = np.empty(len(query))
    step = max(1, 4_000_000 // max(len(a), 1))
    for s in range(0, len(query), step):
        q = query[s:s + step]
        out[s:s + step] = np.max(q[:, :1] * a + q[:, 1:2] * b + c, axis=1)
    return out


def convex_envelope(v: GridField, mask: Optional[np.ndarray] = None, check_mask: bool = True) -> GridField:
    """Largest convex function below v on the mask nodes (lower hull of the lifted samples)."""
    g = v.grid
    mask = g.mask if mask is None else np.asarray(mask, dtype=bool)
    if check_mask and not mask_is_lattice_convex(mask):
        raise NonConvexMaskError("convex envelope requires a convex mask")
    vals = v.values[mask]
    if not np.all(np.isfinite(vals)):
        raise ValueError("v must be finite on the mask")
    pts = g.points()[mask]
    env = np.full(g.shape, np.inf)
    env[mask] = np.minimum(_lower_envelope(pts, vals, pts), vals)
    return GridField(g, env, "v")


def convex_envelope_midpoint(v: GridField, max_sweeps: int = 10_000, tol: float = 1e-13) -> GridField:
    """Oracle: iterate e(m) <- min(e(m), (e(x) + e(y))/2) over all node pairs with lattice midpoint m.

    Quadratic in the number of nodes per sweep; meant for small grids.
    """
    g = v.grid
    I, J = np.nonzero(g.mask)
    e = v.values[g.mask].astype(float).copy()
    idx = np.full(g.shape, -1)
    idx[I, J] = np.arange(I.size)
    a, b = np.triu_indices(I.size, 1)
    same = ((I[a] + I[b]) % 2 == 0) & ((J[a] + J[b]) % 2 == 0)
    a, b = a[same], b[same]
    m = idx[(I[a] + I[b]) // 2, (J[a] + J[b]) // 2]
    keep = m >= 0
    a, b, m = a[keep], b[keep], m[keep]
    for _ in range(max_sweeps):
        cand = 0.5 * (e[a] + e[b])
        new = e.copy()
        np.minimum.at(new, m, cand)
        if np.max(e - new) <= tol:
            e = new
            break
        e = new
    out = np.full(g.shape, np.inf)
    out[I, J] = e
    return GridField(g, out, "v")


# ---------------------------------------------------------------------------
# log-concavity
# ---------------------------------------------------------------------------

def curvature_scale(v: GridField, mask: np.ndarray) -> float:
    """Largest |second difference| of v along axes and diagonals at nodes whose stencil stays in ``mask``."""
    vals = v.values
    h = v.grid.h
    nx, ny = mask.shape
    Mp = np.pad(mask, 1)
    best = 0.0
    for p, q in ((1, 0), (0, 1), (1, 1), (1, -1)):
        c = mask & Mp[1 + p:1 + p + nx, 1 + q:1 + q + ny] & Mp[1 - p:1 - p + nx, 1 - q:1 - q + ny]
        I, J = np.nonzero(c)
        if I.size:
            d2 = (vals[I + p, J + q] - 2 * vals[I, J] + vals[I - p, J - q]) / (h * h * (p * p + q * q))
            best = max(best, float(np.max(np.abs(d2))))
    return best


def log_concavity_check(u: GridField, tol: Optional[float] = None, samples: int = 20_000, floor: float = 0.05,
                        seed: int = 0, tol_factor: float = 20.0) -> dict:
    """Midpoint and convex-envelope tests of v = -log u on {u > 2 floor}.

    The default tolerance is tol_factor * h^2 * (max |second difference of v|
    on that set).  The domain mask must be convex.
    """
    g = u.grid
    if not mask_is_lattice_convex(g.mask):
        raise NonConvexMaskError("log-concavity requires a convex domain")
    inner = u.values[g.mask]
    if np.any(inner <= 0):
        raise ValueError("u must be positive on interior nodes")
    v = neg_log_transform(u, floor)
    eps = 2 * floor
    sub = g.mask & (u.values > eps)
    if sub.sum() < 3:
        raise ValueError("sublevel set {u > 2 floor} has fewer than 3 nodes")
    scale = curvature_scale(v, sub)
    if tol is None:
        tol = tol_factor * g.h ** 2 * scale
    rng = np.random.default_rng(seed)
    I, J = np.nonzero(sub)
    a = rng.integers(0, I.size, samples)
    b = rng.integers(0, I.size, samples)
    # force same parity so the midpoint is a node
    Jb = J[b] + ((J[a] + J[b]) % 2) * np.where(J[b] + 1 < g.ny, 1, -1)
    Ib = I[b] + ((I[a] + I[b]) % 2) * np.where(I[b] + 1 < g.nx, 1, -1)
    okb = sub[Ib, Jb]
    Im, Jm = (I[a] + Ib) // 2, (J[a] + Jb) // 2
    ok = okb & g.mask[Im, Jm]
    mid = v.values[Im[ok], Jm[ok]]
    avg = 0.5 * (v.values[I[a][ok], J[a][ok]] + v.values[Ib[ok], Jb[ok]])
    viol = mid - avg
    k = int(np.argmax(viol)) if viol.size else -1
    worst_mid = float(viol[k]) if viol.size else 0.0
    env = convex_envelope(v, mask=sub, check_mask=False)
    gap = v.values[sub] - env.values[sub]
    kk = int(np.argmax(gap))
    P = g.points()
    return {
        "tol": float(tol),
        "curvature_scale": scale,
        "epsilon": eps,
        "pairs": int(ok.sum()),
        "midpoint_max_violation": worst_mid,
        "midpoint_worst_location": P[Im[ok][k], Jm[ok][k]].tolist() if viol.size else None,
        "midpoint_passed": bool(worst_mid <= tol),
        "envelope_max_gap": float(gap[kk]),
        "envelope_worst_location": P[sub][kk].tolist(),
        "envelope_passed": bool(gap[kk] <= tol),
        "passed": bool(worst_mid <= tol and gap[kk] <= tol),
    }
