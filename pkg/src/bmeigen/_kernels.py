"""Compiled inner loops: weighted infimal convolution on lattice grids.

Fields are stored with shape (nx, ny) and node (i, j) sits at
(ox + i*h, oy + j*h).  Non-finite values mark points outside a field's
domain.
"""
from __future__ import annotations

import os

import numba
import numpy as np
from numba import njit, prange

# the bundled TBB is often too old; prefer OpenMP and fall back to the
# built-in work queue
if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "omp"
    try:
        from numba.np.ufunc import omppool  # noqa: F401
    except ImportError:
        numba.config.THREADING_LAYER = "workqueue"

INF = np.inf


@njit(cache=True, inline="always")
def _bilinear(f, ox, oy, h, x, y):
    nx, ny = f.shape
    s = (x - ox) / h
    r = (y - oy) / h
    if s < -1e-9 or r < -1e-9 or s > nx - 1 + 1e-9 or r > ny - 1 + 1e-9:
        return INF
    i = min(max(int(np.floor(s)), 0), nx - 2)
    j = min(max(int(np.floor(r)), 0), ny - 2)
    a = min(max(s - i, 0.0), 1.0)
    b = min(max(r - j, 0.0), 1.0)
    val = 0.0
    wsum = 0.0
    # corners with (numerically) zero weight may be infinite without
    # poisoning the value, so exact node hits stay finite at mask edges
    for di in range(2):
        wx = a if di else 1.0 - a
        if wx <= 1e-12:
            continue
        for dj in range(2):
            wy = b if dj else 1.0 - b
            wgt = wx * wy
            if wgt <= 1e-12:
                continue
            fv = f[i + di, j + dj]
            if not np.isfinite(fv):
                return INF
            val += wgt * fv
            wsum += wgt
    return val / wsum


@njit(cache=True, inline="always")
def _keys_w(s):
    s = abs(s)
    if s < 1.0:
        return (1.5 * s - 2.5) * s * s + 1.0
    if s < 2.0:
        return ((-0.5 * s + 2.5) * s - 4.0) * s + 2.0
    return 0.0


@njit(cache=True)
def _cubic(f, ox, oy, h, x, y):
    """Keys cubic-convolution interpolation; falls back to bilinear near infinities."""
    nx, ny = f.shape
    s = (x - ox) / h
    r = (y - oy) / h
    i = int(np.floor(s))
    j = int(np.floor(r))
    if i < 1 or j < 1 or i + 2 > nx - 1 or j + 2 > ny - 1:
        return _bilinear(f, ox, oy, h, x, y)
    a = s - i
    b = r - j
    val = 0.0
    for di in range(-1, 3):
        wx = _keys_w(a - di)
        for dj in range(-1, 3):
            fv = f[i + di, j + dj]
            if not np.isfinite(fv):
                return _bilinear(f, ox, oy, h, x, y)
            val += wx * _keys_w(b - dj) * fv
    return val


@njit(cache=True)
def _objective(v0, o0x, o0y, h0, v1, o1x, o1y, h1, t, x, y, px, py, cubic0):
    x1 = (x - (1 - t) * px) / t
    y1 = (y - (1 - t) * py) / t
    if cubic0:
        a = _cubic(v0, o0x, o0y, h0, px, py)
        b = _cubic(v1, o1x, o1y, h1, x1, y1)
    else:
        a = _bilinear(v0, o0x, o0y, h0, px, py)
        b = _bilinear(v1, o1x, o1y, h1, x1, y1)
    if not (np.isfinite(a) and np.isfinite(b)):
        return INF
    return (1 - t) * a + t * b


@njit(cache=True, inline="always")
def _read(v, e, ox, oy, h, x, y, logspace):
    if logspace:
        # -log of the bilinear interpolant of exp(-v)
        ev = _bilinear(e, ox, oy, h, x, y)
        if not ev > 0.0:
            return INF
        return -np.log(ev)
    return _bilinear(v, ox, oy, h, x, y)


@njit(cache=True, parallel=True)
def infconv_kernel(v0, o0x, o0y, h0, v1, o1x, o1y, h1, t,
                   outx, outy, cand_x, cand_y, cand_v, v1min, refine, e0, e1, logspace, sub):
    """Minimise (1-t) v0(x0) + t v1((x - (1-t) x0)/t) over candidate nodes x0.

    ``cand_*`` list the finite nodes of v0 sorted by value, so the scan can
    stop as soon as (1-t) v0 + t min(v1) can no longer beat the incumbent.
    With ``logspace`` off-node values are read as -log of the bilinear
    interpolant of e = exp(-v).  ``sub > 1`` then scans the lattice of
    spacing h0/sub within one cell of the best node.
    Returns (w, x0x, x0y) per output point.
    """
    n = outx.shape[0]
    m = cand_v.shape[0]
    nx1, ny1 = v1.shape
    bx0 = o1x
    bx1 = o1x + (nx1 - 1) * h1
    by0 = o1y
    by1 = o1y + (ny1 - 1) * h1
    w = np.full(n, INF)
    wx0 = np.full(n, np.nan)
    wy0 = np.full(n, np.nan)
    for k in prange(n):
        x = outx[k]
        y = outy[k]
        best = INF
        bi = -1
        for c in range(m):
            if (1 - t) * cand_v[c] + t * v1min >= best:
                break
            px = cand_x[c]
            py = cand_y[c]
            x1 = (x - (1 - t) * px) / t
            y1 = (y - (1 - t) * py) / t
            if x1 < bx0 or x1 > bx1 or y1 < by0 or y1 > by1:
                continue
            b = _read(v1, e1, o1x, o1y, h1, x1, y1, logspace)
            if not np.isfinite(b):
                continue
            val = (1 - t) * cand_v[c] + t * b
            if val < best:
                best = val
                bi = c
        if bi < 0:
            continue
        px = cand_x[bi]
        py = cand_y[bi]
        if sub > 1:
            cx = px
            cy = py
            for a in range(-sub, sub + 1):
                for b in range(-sub, sub + 1):
                    if a == 0 and b == 0:
                        continue
                    qx = cx + a * h0 / sub
                    qy = cy + b * h0 / sub
                    q0 = _read(v0, e0, o0x, o0y, h0, qx, qy, logspace)
                    if not np.isfinite(q0):
                        continue
                    q1 = _read(v1, e1, o1x, o1y, h1, (x - (1 - t) * qx) / t, (y - (1 - t) * qy) / t, logspace)
                    if not np.isfinite(q1):
                        continue
                    val = (1 - t) * q0 + t * q1
                    if val < best:
                        best = val
                        px = qx
                        py = qy
        if refine:
            # quadratic model of the objective on the 3x3 patch around the
            # best lattice point, minimised inside the patch, then evaluated
            # with cubic interpolation of both fields
            vals = np.empty((3, 3))
            ok = True
            for a in range(3):
                for b in range(3):
                    q = _objective(v0, o0x, o0y, h0, v1, o1x, o1y, h1, t, x, y,
                                   px + (a - 1) * h0, py + (b - 1) * h0, True)
                    if not np.isfinite(q):
                        ok = False
                    vals[a, b] = q
            if ok:
                gx = (vals[2, 1] - vals[0, 1]) / 2
                gy = (vals[1, 2] - vals[1, 0]) / 2
                hxx = vals[2, 1] - 2 * vals[1, 1] + vals[0, 1]
                hyy = vals[1, 2] - 2 * vals[1, 1] + vals[1, 0]
                hxy = (vals[2, 2] - vals[2, 0] - vals[0, 2] + vals[0, 0]) / 4
                det = hxx * hyy - hxy * hxy
                if hxx > 0 and det > 0:
                    sx = -(hyy * gx - hxy * gy) / det
                    sy = -(-hxy * gx + hxx * gy) / det
                    sx = min(max(sx, -1.0), 1.0)
                    sy = min(max(sy, -1.0), 1.0)
                    qx = px + sx * h0
                    qy = py + sy * h0
                    val = _objective(v0, o0x, o0y, h0, v1, o1x, o1y, h1, t, x, y, qx, qy, True)
                    if np.isfinite(val):
                        best = val
                        px = qx
                        py = qy
                else:
                    best = min(best, vals[1, 1])
        w[k] = best
        wx0[k] = px
        wy0[k] = py
    return w, wx0, wy0


@njit(cache=True)
def bilinear_many(f, ox, oy, h, xs, ys):
    out = np.empty(xs.shape[0])
    for k in range(xs.shape[0]):
        out[k] = _bilinear(f, ox, oy, h, xs[k], ys[k])
    return out


def infimal_convolution_arrays(v0, origin0, h0, v1, origin1, h1, t, outx, outy, refine=False,
                               logspace=False, sub=1):
    """Thin numpy wrapper around :func:`infconv_kernel`."""
    v0 = np.ascontiguousarray(v0, dtype=float)
    v1 = np.ascontiguousarray(v1, dtype=float)
    ii, jj = np.nonzero(np.isfinite(v0))
    vals = v0[ii, jj]
    order = np.argsort(vals, kind="stable")
    cand_x = origin0[0] + ii[order] * h0
    cand_y = origin0[1] + jj[order] * h0
    cand_v = vals[order]
    fin1 = v1[np.isfinite(v1)]
    v1min = float(fin1.min()) if fin1.size else np.inf
    outx = np.ascontiguousarray(outx, dtype=float)
    outy = np.ascontiguousarray(outy, dtype=float)
    if cand_v.size == 0 or not np.isfinite(v1min):
        n = outx.size
        return np.full(n, np.inf), np.full(n, np.nan), np.full(n, np.nan)
    return infconv_kernel(v0, float(origin0[0]), float(origin0[1]), float(h0),
                          v1, float(origin1[0]), float(origin1[1]), float(h1), float(t),
                          outx, outy, cand_x, cand_y, cand_v, v1min, bool(refine),
                          np.exp(-v0), np.exp(-v1), bool(logspace), int(sub))
