"""Discrete calculus on lattice grids: fields, wide-stencil direction sets and
monotone discretizations of the operators in :mod:`bmeigen.operators`.

The scheme is written in terms of one-sided differences

    T_{o,s} u(x) = 2 (u(x) - u(x + s a_s h o)) / (h^2 |o|^2 a_s (a_+ + a_-)),

for lattice offsets ``o`` and signs ``s``, where ``a_s = 1`` for neighbours
inside the interior mask.  When a signed distance field is supplied, a
neighbour outside the mask is replaced by the boundary crossing along the
ray (value 0) at fractional distance ``a_s`` (Shortley-Weller), so the
directional second difference is ``D_o = -(T_{o,+} + T_{o,-})``.

Every discrete operator is a nonnegative combination of the ``T`` terms,
which makes the schemes monotone and lets the eigensolver assemble the
same operator as a sparse M-matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .geometry import DomainError, Grid2D
from .operators import OperatorSpec, eval_F, eval_G, sym_eigenvalues

MODES = ("sub", "super", "mean")


class StencilOverreachError(ValueError):
    """A stencil reads outside the grid or an infinite value of a v-like field."""


@dataclass(eq=False)
class GridField:
    grid: Grid2D
    values: np.ndarray
    role: str = "u"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"field shape {self.values.shape} does not match grid {self.grid.shape}")
        if self.role not in ("u", "v"):
            raise ValueError("role must be 'u' or 'v'")

    @classmethod
    def from_function(cls, grid: Grid2D, f, role: str = "u", outside: Optional[float] = None):
        X, Y = grid.coords()
        vals = np.asarray(f(X, Y), dtype=float) * np.ones(grid.shape)
        if outside is not None:
            vals = np.where(grid.mask, vals, outside)
        return cls(grid, vals, role)

    def interior_values(self) -> np.ndarray:
        return self.values[self.grid.mask]

    def copy(self) -> "GridField":
        return GridField(self.grid, self.values.copy(), self.role)


# ---------------------------------------------------------------------------
# direction sets
# ---------------------------------------------------------------------------

def _best_lattice(angle: float, m: int) -> tuple[int, int]:
    best, err = None, np.inf
    for p in range(-m, m + 1):
        for q in range(0, m + 1):
            if (p, q) == (0, 0) or (q == 0 and p < 0):
                continue
            a = np.arctan2(q, p)
            e = abs(a - angle)
            if e < err - 1e-12 or (abs(e - err) <= 1e-12 and p * p + q * q < best[0] ** 2 + best[1] ** 2):
                best, err = (p, q), e
    return best


@dataclass(frozen=True)
class DirectionSet:
    """K directions at angles j*pi/K realised as lattice offsets of max-norm <= m.

    K must be a multiple of 4 so that each direction has its exact 90 degree
    partner in the set; ``pairs`` lists the orthogonal frames.
    """
    K: int = 8
    m: int = 2

    def __post_init__(self):
        if self.K < 4 or self.K % 4:
            raise ValueError("K must be a multiple of 4 and at least 4")
        if self.m < 1:
            raise ValueError("stencil reach m must be >= 1")
        err = np.abs(self.lattice_angles() - self.angles())
        if np.any(err > np.pi / (2 * self.K) + 1e-12):
            raise ValueError(f"reach m={self.m} cannot resolve K={self.K} directions within pi/(2K)")
        if len(set(self.offsets)) != self.K:
            raise ValueError("lattice directions are not distinct")

    @property
    def base(self) -> tuple:
        return tuple(_best_lattice(j * np.pi / self.K, self.m) for j in range(self.K // 2))

    @property
    def partners(self) -> tuple:
        return tuple((-q, p) for p, q in self.base)

    @property
    def offsets(self) -> tuple:
        return self.base + self.partners

    @property
    def pairs(self) -> list:
        return list(zip(self.base, self.partners))

    def angles(self) -> np.ndarray:
        return np.arange(self.K) * np.pi / self.K

    def lattice_angles(self) -> np.ndarray:
        return np.array([np.arctan2(q, p) for p, q in self.offsets])

    @property
    def reach(self) -> int:
        return max(max(abs(p), abs(q)) for p, q in self.offsets)


HESS_OFFSETS = ((1, 0), (0, 1), (1, 1), (-1, 1))


# ---------------------------------------------------------------------------
# stencil geometry
# ---------------------------------------------------------------------------

class Stencil:
    """Neighbour tables of all interior nodes for the offsets of a direction set.

    With ``sdf`` given, neighbours outside the mask become boundary points
    (value 0) at the ray/boundary crossing; otherwise the stored field value
    of the neighbour node is read, as for the plain finite differences.
    """

    def __init__(self, grid: Grid2D, dirs: DirectionSet = DirectionSet(), sdf: Optional[np.ndarray] = None):
        self.grid = grid
        self.dirs = dirs
        self.sdf = None if sdf is None else np.asarray(sdf, dtype=float)
        mask = grid.mask
        I, J = np.nonzero(mask)
        self.I, self.J = I, J
        self.n = I.size
        unk = np.full(grid.shape, -1, dtype=np.int64)
        unk[I, J] = np.arange(self.n)
        self.unknown = unk
        offs = list(HESS_OFFSETS)
        for o in dirs.offsets:
            if o not in offs and (-o[0], -o[1]) not in offs:
                offs.append(o)
        self.offsets = offs
        self.index = {o: k for k, o in enumerate(offs)}
        nx, ny = grid.shape
        h = grid.h
        K = len(offs)
        self.nb_flat = np.zeros((K, 2, self.n), dtype=np.int64)
        self.nb_unk = np.full((K, 2, self.n), -1, dtype=np.int64)
        self.in_grid = np.zeros((K, 2, self.n), dtype=bool)
        self.frac = np.ones((K, 2, self.n))
        for k, (p, q) in enumerate(offs):
            for si, s in enumerate((1, -1)):
                ni, nj = I + s * p, J + s * q
                ok = (ni >= 0) & (nj >= 0) & (ni < nx) & (nj < ny)
                ci, cj = np.clip(ni, 0, nx - 1), np.clip(nj, 0, ny - 1)
                self.in_grid[k, si] = ok
                self.nb_flat[k, si] = ci * ny + cj
                self.nb_unk[k, si] = np.where(ok, unk[ci, cj], -1)
                if self.sdf is not None:
                    L = np.hypot(p, q)
                    s0 = self.sdf[I, J]
                    s1 = np.where(ok, self.sdf[ci, cj], np.inf)
                    bnd = self.nb_unk[k, si] < 0
                    with np.errstate(divide="ignore", invalid="ignore"):
                        a = np.where(np.isfinite(s1), s0 / (s0 - s1), 1.0)
                    a = np.clip(a, 0.5 / L, 1.0 + 0.5 / L)
                    self.frac[k, si] = np.where(bnd, a, 1.0)
        self.full = np.all(self.nb_unk >= 0, axis=(0, 1))
        # coefficient of (u - u_nb) in T_{o,s}
        L2 = np.array([p * p + q * q for p, q in offs], dtype=float)[:, None, None]
        tot = self.frac.sum(axis=1, keepdims=True)
        self.coef = 2.0 / (h * h * L2 * self.frac * tot)
        self._T = {}

    # -- reading values ------------------------------------------------------
    def neighbor_values(self, values: np.ndarray) -> np.ndarray:
        """(K, 2, n) neighbour values, with boundary points set to 0 when an SDF is attached."""
        nb = values.ravel()[self.nb_flat]
        if self.sdf is not None:
            nb = np.where(self.nb_unk >= 0, nb, 0.0)
        return nb

    def one_sided(self, values: np.ndarray, nb: Optional[np.ndarray] = None) -> np.ndarray:
        """All T_{o,s} u at interior nodes, shape (K, 2, n)."""
        if nb is None:
            nb = self.neighbor_values(values)
        c = values[self.I, self.J]
        with np.errstate(invalid="ignore"):
            return self.coef * (c[None, None, :] - nb)

    def second_differences(self, values: np.ndarray) -> np.ndarray:
        """D_o u for every stencil offset, shape (K, n)."""
        return -self.one_sided(values).sum(axis=1)

    def gradient(self, values: np.ndarray) -> np.ndarray:
        """Second-order gradient at interior nodes (non-uniform near the boundary), shape (n, 2)."""
        nb = self.neighbor_values(values)
        c = values[self.I, self.J]
        h = self.grid.h
        out = np.empty((self.n, 2))
        for d, o in enumerate(((1, 0), (0, 1))):
            k = self.index[o]
            a, b = self.frac[k, 0], self.frac[k, 1]
            with np.errstate(invalid="ignore"):
                up, um = nb[k, 0] - c, nb[k, 1] - c
                out[:, d] = (b * b * up - a * a * um) / (h * a * b * (a + b))
        return out

    def hessian(self, values: np.ndarray) -> np.ndarray:
        """Hessian from the axis and diagonal second differences, shape (n, 2, 2)."""
        D = self.second_differences(values)
        dxx, dyy = D[self.index[(1, 0)]], D[self.index[(0, 1)]]
        dpp, dmp = D[self.index[(1, 1)]], D[self.index[(-1, 1)]]
        H = np.empty((self.n, 2, 2))
        H[:, 0, 0] = dxx
        H[:, 1, 1] = dyy
        with np.errstate(invalid="ignore"):
            H[:, 0, 1] = H[:, 1, 0] = (dpp - dmp) / 2
        return H

    # -- sparse operators ---------------------------------------------------
    def T_matrix(self, k: int, si: int) -> sp.csr_matrix:
        """Sparse matrix of T_{o,s} acting on interior unknowns (boundary values 0)."""
        key = (k, si)
        if key not in self._T:
            c = self.coef[k, si]
            nb = self.nb_unk[k, si]
            rows = np.arange(self.n)
            inside = nb >= 0
            data = np.concatenate([c, -c[inside]])
            r = np.concatenate([rows, rows[inside]])
            cc = np.concatenate([rows, nb[inside]])
            self._T[key] = sp.csr_matrix((data, (r, cc)), shape=(self.n, self.n))
        return self._T[key]

    def assemble(self, weights: np.ndarray) -> sp.csr_matrix:
        """Sum over (o, s) of diag(weights[o, s]) T_{o,s}."""
        M = sp.csr_matrix((self.n, self.n))
        for k in range(len(self.offsets)):
            for si in range(2):
                w = weights[k, si]
                if np.any(w != 0):
                    M = M + sp.diags(w) @ self.T_matrix(k, si)
        return M.tocsr()

    def field(self, interior: np.ndarray, role: str = "u") -> GridField:
        vals = np.zeros(self.grid.shape) if role == "u" else np.full(self.grid.shape, np.inf)
        vals[self.I, self.J] = interior
        return GridField(self.grid, vals, role)


# ---------------------------------------------------------------------------
# operator schemes
# ---------------------------------------------------------------------------

def _nearest_direction(dirs: DirectionSet, g: np.ndarray) -> np.ndarray:
    """Index (into dirs.offsets) of the direction closest to each gradient, modulo pi."""
    ang = np.mod(np.arctan2(g[:, 1], g[:, 0]), np.pi)
    la = np.mod(dirs.lattice_angles(), np.pi)
    d = np.abs(ang[:, None] - la[None, :])
    d = np.minimum(d, np.pi - d)
    return np.argmin(d, axis=1)


def _pucci_psi(s, lam, Lam):
    return np.where(s > 0, lam * s, Lam * s)


def scheme_weights(op: OperatorSpec, st: Stencil, values: np.ndarray, mode: str = "mean",
                   degenerate_tol: Optional[float] = None, grad_floor: Optional[float] = None):
    """Nonnegative weights W with discrete_F(u) = sum W[o,s] T_{o,s} u at interior nodes.

    Returns ``(W, info)``; ``info`` flags degenerate-gradient and floored nodes.
    For the Pucci and normalized operators the weights encode the active
    direction choice (a policy); for the p-Laplacian they are the frozen
    edge conductivities.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    h = st.grid.h
    if degenerate_tol is None:
        degenerate_tol = h
    K = len(st.offsets)
    W = np.zeros((K, 2, st.n))
    ix, iy = st.index[(1, 0)], st.index[(0, 1)]
    info = {"degenerate": np.zeros(st.n, dtype=bool), "floored": np.zeros(st.n, dtype=bool)}

    if op.kind == "p_laplacian" and op.p == 2.0:
        W[[ix, iy]] = 1.0
        return W, info

    if op.kind == "p_laplacian":
        nb = st.neighbor_values(values)
        c = values[st.I, st.J]
        if grad_floor is None:
            fin = values[np.isfinite(values)]
            grad_floor = 1e-8 * (fin.max() - fin.min()) / h if fin.size else 1e-8
            grad_floor = max(grad_floor, 1e-300)
        # transverse centred derivatives on the whole grid (stored values)
        v = np.where(np.isfinite(values), values, 0.0)
        gx_all = np.zeros_like(v)
        gy_all = np.zeros_like(v)
        gx_all[1:-1, :] = (v[2:, :] - v[:-2, :]) / (2 * h)
        gy_all[:, 1:-1] = (v[:, 2:] - v[:, :-2]) / (2 * h)
        g_c = st.gradient(values)
        for axis, k in ((0, ix), (1, iy)):
            trans_all = gy_all if axis == 0 else gx_all
            trans_c = g_c[:, 1 - axis]
            for si in range(2):
                a = st.frac[k, si]
                normal = (nb[k, si] - c) / (a * h)
                inside = st.nb_unk[k, si] >= 0
                tn = trans_all.ravel()[st.nb_flat[k, si]]
                trans = np.where(inside, 0.5 * (trans_c + tn), trans_c)
                g = np.hypot(normal, trans)
                floored = g < grad_floor
                info["floored"] |= floored
                W[k, si] = np.maximum(g, grad_floor) ** (op.p - 2)
        return W, info

    D = st.second_differences(values)
    dir_idx = np.array([st.index.get(o, st.index.get((-o[0], -o[1]))) for o in st.dirs.offsets])
    Kd = len(dir_idx)

    if op.kind == "pucci_min":
        # F = max over orthogonal pairs of -[psi(D_j) + psi(D_j')]
        pair_idx = [(st.index.get(b, st.index.get((-b[0], -b[1]))), st.index.get(q, st.index.get((-q[0], -q[1]))))
                    for b, q in st.dirs.pairs]
        vals = np.stack([-(_pucci_psi(D[a], op.lam, op.Lam) + _pucci_psi(D[b], op.lam, op.Lam))
                         for a, b in pair_idx])
        best = np.argmax(vals, axis=0)
        for j, (a, b) in enumerate(pair_idx):
            sel = best == j
            for k in (a, b):
                wk = np.where(D[k] > 0, op.lam, op.Lam)
                W[k, :, sel] = wk[sel][:, None]
        return W, info

    # normalized p-Laplacian
    p = op.p
    g = st.gradient(values)
    gn = np.hypot(g[:, 0], g[:, 1])
    degenerate = gn < degenerate_tol
    info["degenerate"] = degenerate
    near = _nearest_direction(st.dirs, g)
    # candidate values for every direction choice theta (index into dirs.offsets)
    perp = {o: (-o[1], o[0]) for o in st.dirs.offsets}
    off_pos = {o: i for i, o in enumerate(st.dirs.offsets)}

    def k_of(o):
        return st.index.get(o, st.index.get((-o[0], -o[1])))

    if p >= 2:
        cand = np.stack([-(D[ix] + D[iy]) / p - (p - 2) / p * D[k_of(o)] for o in st.dirs.offsets])
    else:
        cand = np.stack([-(p - 1) / p * D[k_of(o)] - D[k_of(perp[o])] / p for o in st.dirs.offsets])
    if mode == "sub":
        choice = np.where(degenerate, np.argmin(cand, axis=0), near)
    elif mode == "super":
        choice = np.where(degenerate, np.argmax(cand, axis=0), near)
    else:
        choice = near
    mean_nodes = degenerate if mode == "mean" else np.zeros(st.n, dtype=bool)
    for j, o in enumerate(st.dirs.offsets):
        sel = (choice == j) & ~mean_nodes
        if not sel.any():
            continue
        if p >= 2:
            W[ix, :, sel] += 1.0 / p
            W[iy, :, sel] += 1.0 / p
            W[k_of(o), :, sel] += (p - 2) / p
        else:
            W[k_of(o), :, sel] += (p - 1) / p
            W[k_of(perp[o]), :, sel] += 1.0 / p
    W[ix, :, mean_nodes] += 0.5
    W[iy, :, mean_nodes] += 0.5
    return W, info


def apply_F(op: OperatorSpec, st: Stencil, values: np.ndarray, mode: str = "mean",
            degenerate_tol: Optional[float] = None, grad_floor: Optional[float] = None):
    """Discrete F at every interior node; returns (values (n,), info)."""
    W, info = scheme_weights(op, st, values, mode, degenerate_tol, grad_floor)
    T = st.one_sided(values)
    with np.errstate(invalid="ignore"):
        out = np.where(W != 0, W * T, 0.0).sum(axis=(0, 1))
    return out, info


def apply_G(op: OperatorSpec, st: Stencil, values: np.ndarray, mode: str = "super",
            degenerate_tol: Optional[float] = None):
    """Discrete G(xi, X) = -F(xi, xi (x) xi - X) at interior nodes.

    Uses the centred gradient and the 9-point Hessian, so it is exact on
    quadratics.  At nodes with |xi| < degenerate_tol the normalized operator
    takes the direction most favourable to G >= rhs in "super" mode (least
    favourable in "sub" mode); for the p-Laplacian with p != 2 such nodes are
    returned as NaN and flagged.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if degenerate_tol is None:
        degenerate_tol = st.grid.h
    xi = st.gradient(values)
    X = st.hessian(values)
    gn = np.hypot(xi[:, 0], xi[:, 1])
    degenerate = gn < degenerate_tol
    finite = np.all(np.isfinite(xi), axis=1) & np.all(np.isfinite(X), axis=(1, 2))
    out = np.full(st.n, np.nan)
    info = {"degenerate": degenerate, "skipped": ~finite}
    with np.errstate(invalid="ignore"):
        Y = xi[:, :, None] * xi[:, None, :] - X
    ok = finite & ~degenerate
    if op.kind == "pucci_min" or (op.kind == "p_laplacian" and op.p == 2.0):
        ok = finite
    if ok.any():
        out[ok] = eval_G(op, xi[ok], X[ok])
    if op.kind == "normalized_p_laplacian":
        sel = finite & degenerate
        if sel.any():
            e1, e2 = sym_eigenvalues(Y[sel])
            tr = e1 + e2
            c = (op.p - 2) / op.p
            hi, lo = (e1, e2) if c >= 0 else (e2, e1)
            pick = {"super": hi, "sub": lo, "mean": tr / 2}[mode]
            out[sel] = tr / op.p + c * pick
    elif op.kind == "p_laplacian" and op.p != 2.0:
        info["skipped"] = info["skipped"] | (finite & degenerate)
    return out, info


# ---------------------------------------------------------------------------
# pointwise interface
# ---------------------------------------------------------------------------

def _check_node(f: GridField, node):
    i, j = map(int, node)
    if not (0 <= i < f.grid.nx and 0 <= j < f.grid.ny) or not f.grid.mask[i, j]:
        raise DomainError(f"node {node} is not an interior node")
    return i, j


def _read(f: GridField, i, j):
    if not (0 <= i < f.grid.nx and 0 <= j < f.grid.ny):
        raise StencilOverreachError(f"stencil reaches outside the grid at ({i}, {j})")
    v = f.values[i, j]
    if not np.isfinite(v):
        raise StencilOverreachError(f"stencil reads a non-finite value at ({i}, {j})")
    return v


def discrete_gradient(f: GridField, node) -> np.ndarray:
    """Centred differences at an interior node."""
    i, j = _check_node(f, node)
    h = f.grid.h
    return np.array([(_read(f, i + 1, j) - _read(f, i - 1, j)) / (2 * h),
                     (_read(f, i, j + 1) - _read(f, i, j - 1)) / (2 * h)])


def directional_second_difference(f: GridField, node, offset, h: Optional[float] = None) -> float:
    """(f(x + h d) - 2 f(x) + f(x - h d)) / (h^2 |d|^2) for a lattice offset d."""
    i, j = map(int, node)
    p, q = map(int, offset)
    h = f.grid.h if h is None else h
    c = _read(f, i, j)
    return float((_read(f, i + p, j + q) - 2 * c + _read(f, i - p, j - q)) / (h * h * (p * p + q * q)))


def _local_stencil(f: GridField, node, dirs: DirectionSet):
    """Stencil restricted to one node, checking that its reach stays finite and in the grid."""
    i, j = _check_node(f, node)
    offs = set(HESS_OFFSETS) | set(dirs.offsets)
    for p, q in offs:
        _read(f, i + p, j + q)
        _read(f, i - p, j - q)
    _read(f, i, j)
    mask = np.zeros(f.grid.shape, dtype=bool)
    mask[i, j] = True
    return Stencil(f.grid.with_mask(mask), dirs)


def discrete_F(op: OperatorSpec, f: GridField, node, dirs: DirectionSet = DirectionSet(),
               degenerate_tol: Optional[float] = None, mode: str = "mean") -> float:
    """Monotone scheme value of F at one node (reads stored neighbour values)."""
    st = _local_stencil(f, node, dirs)
    fin = f.values[np.isfinite(f.values)]
    floor = 1e-8 * (fin.max() - fin.min()) / f.grid.h if fin.size else 1e-8
    out, _ = apply_F(op, st, f.values, mode, degenerate_tol, grad_floor=max(floor, 1e-300))
    return float(out[0])


def discrete_G(op: OperatorSpec, f: GridField, node, dirs: DirectionSet = DirectionSet(),
               degenerate_tol: Optional[float] = None, mode: str = "super") -> float:
    st = _local_stencil(f, node, dirs)
    out, _ = apply_G(op, st, f.values, mode, degenerate_tol)
    return float(out[0])


# ---------------------------------------------------------------------------
# consistency study
# ---------------------------------------------------------------------------

def consistency_errors(op: OperatorSpec, f, grad, hess, points, hs, dirs: DirectionSet = DirectionSet(),
                       mode: str = "mean") -> np.ndarray:
    """max |discrete F - F(grad f, D^2 f)| over ``points`` for each spacing in ``hs``.

    ``f(X, Y)`` is evaluated on a lattice patch around the points, ``grad``
    and ``hess`` map an (n, 2) array of points to (n, 2) and (n, 2, 2)
    arrays.  Every point must be a lattice node for every spacing.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    exact = eval_F(op, grad(pts), hess(pts))
    errs = []
    for h in hs:
        # the sample points and their stencil neighbours are interior nodes
        pad = 2 * dirs.reach + 1
        lo = np.floor(pts.min(axis=0) / h + 1e-9) - pad
        hi = np.ceil(pts.max(axis=0) / h - 1e-9) + pad
        nx, ny = (hi - lo).astype(int) + 1
        origin = (lo[0] * h, lo[1] * h)
        idx = np.rint((pts - origin) / h).astype(int)
        if np.max(np.abs(np.asarray(origin) + idx * h - pts)) > 1e-9 * max(1.0, np.abs(pts).max()):
            raise ValueError(f"points are not lattice nodes for h={h}")
        mask = np.zeros((nx, ny), dtype=bool)
        r = dirs.reach
        mask[r:nx - r, r:ny - r] = True
        grid = Grid2D(origin, float(h), int(nx), int(ny), mask)
        X, Y = grid.coords()
        st = Stencil(grid, dirs)
        vals, _ = apply_F(op, st, np.asarray(f(X, Y), dtype=float), mode, degenerate_tol=0.0)
        at = np.full(grid.shape, np.nan)
        at[st.I, st.J] = vals
        errs.append(float(np.max(np.abs(at[idx[:, 0], idx[:, 1]] - exact))))
    return np.array(errs)


def convergence_rate(hs, errs) -> float:
    """Least-squares slope of log(err) against log(h)."""
    return float(np.polyfit(np.log(np.asarray(hs, float)), np.log(np.asarray(errs, float)), 1)[0])
