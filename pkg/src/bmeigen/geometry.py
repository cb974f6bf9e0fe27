"""Planar domains: signed distances, Minkowski combinations and rasterization.

Signed distances are negative inside the domain.  Convex primitives (discs,
convex polygons and their Minkowski combinations, which are polygons rounded
by a disc) have closed-form distance functions; combinations involving
non-convex pieces are resolved on a lattice by a weighted infimal
convolution of the children's signed distance fields.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy import ndimage

NODE_BUDGET = 4_000_000


class DomainError(ValueError):
    """Invalid or unusable domain description."""


class InvalidWeightsError(DomainError):
    pass


class OutOfRangeError(DomainError):
    pass


class ResourceError(RuntimeError):
    pass


def _pt(p) -> tuple[float, float]:
    a = np.asarray(p, dtype=float).reshape(-1)
    if a.size != 2 or not np.all(np.isfinite(a)):
        raise DomainError(f"expected a finite 2D point, got {p!r}")
    return float(a[0]), float(a[1])


@dataclass(frozen=True)
class Disc:
    center: tuple = (0.0, 0.0)
    radius: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", _pt(self.center))
        object.__setattr__(self, "radius", float(self.radius))
        if not self.radius > 0:
            raise DomainError(f"disc radius must be positive, got {self.radius}")


def _convex_cross(V: np.ndarray) -> np.ndarray:
    e = np.roll(V, -1, axis=0) - V
    f = np.roll(e, -1, axis=0)
    return e[:, 0] * f[:, 1] - e[:, 1] * f[:, 0]


@dataclass(frozen=True)
class ConvexPolygon:
    vertices: tuple

    def __post_init__(self):
        V = tuple(_pt(v) for v in self.vertices)
        object.__setattr__(self, "vertices", V)
        if len(V) < 3:
            raise DomainError("a polygon needs at least 3 vertices")
        cr = _convex_cross(np.array(V))
        if not np.all(cr > 0):
            raise DomainError("polygon vertices must be strictly convex and counterclockwise")


@dataclass(frozen=True)
class RoundedPolygon:
    """Convex polygon (or single point) dilated by a disc of the given radius.

    This is the closed form of every Minkowski combination of discs and
    convex polygons.
    """
    vertices: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(_pt(v) for v in self.vertices))
        object.__setattr__(self, "radius", float(self.radius))
        if self.radius < 0:
            raise DomainError("rounding radius must be nonnegative")
        if len(self.vertices) in (0, 2):
            raise DomainError("rounded polygon core must be a point or a polygon")
        if len(self.vertices) >= 3 and not np.all(_convex_cross(np.array(self.vertices)) > 0):
            raise DomainError("rounded polygon core must be strictly convex and counterclockwise")
        if len(self.vertices) == 1 and self.radius == 0:
            raise DomainError("empty domain")


@dataclass(frozen=True)
class MinkowskiCombo:
    weights: tuple
    children: tuple

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "children", tuple(self.children))
        _check_weights(self.weights, len(self.children))


@dataclass(frozen=True)
class Scaled:
    """Dilation x -> k x about the origin."""
    factor: float
    child: "DomainSpec"

    def __post_init__(self):
        object.__setattr__(self, "factor", float(self.factor))
        if not self.factor > 0:
            raise DomainError(f"scale factor must be positive, got {self.factor}")


@dataclass(frozen=True)
class Offset:
    """Inward offset {x : sdf_child(x) < -r}."""
    r: float
    child: "DomainSpec"

    def __post_init__(self):
        object.__setattr__(self, "r", float(self.r))
        if self.r < 0:
            raise DomainError("offset must be nonnegative")


@dataclass(frozen=True, eq=False)
class SdfGrid:
    """Domain given by a sampled signed distance field (shape (nx, ny))."""
    values: np.ndarray
    origin: tuple
    h: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or min(v.shape) < 2:
            raise DomainError("SDF grid must be a 2D array with at least 2x2 nodes")
        if not np.all(np.isfinite(v)):
            raise DomainError("SDF grid values must be finite")
        if not (v < 0).any():
            raise DomainError("SDF grid has no interior")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "origin", _pt(self.origin))
        object.__setattr__(self, "h", float(self.h))


DomainSpec = Union[Disc, ConvexPolygon, RoundedPolygon, MinkowskiCombo, Scaled, Offset, SdfGrid]


def Square(side: float = 1.0, lower_left=(0.0, 0.0)) -> ConvexPolygon:
    x, y = _pt(lower_left)
    s = float(side)
    return ConvexPolygon(((x, y), (x + s, y), (x + s, y + s), (x, y + s)))


def _check_weights(weights, n):
    w = np.asarray(weights, dtype=float)
    if w.size != n or n == 0:
        raise InvalidWeightsError(f"need one weight per domain ({n}), got {w.size}")
    if np.any(~(w > 0)) or np.any(w > 1):
        raise InvalidWeightsError(f"weights must lie in (0, 1], got {list(w)}")
    if abs(w.sum() - 1.0) > 1e-12:
        raise InvalidWeightsError(f"weights must sum to 1, got {w.sum()!r}")


# ---------------------------------------------------------------------------
# convex closed forms
# ---------------------------------------------------------------------------

def _as_convex(d) -> Optional[tuple[np.ndarray, float]]:
    """(core vertices, rounding radius) for convex constructive domains, else None."""
    if isinstance(d, Disc):
        return np.array([d.center]), d.radius
    if isinstance(d, ConvexPolygon):
        return np.array(d.vertices), 0.0
    if isinstance(d, RoundedPolygon):
        return np.array(d.vertices), d.radius
    if isinstance(d, Scaled):
        c = _as_convex(d.child)
        return None if c is None else (d.factor * c[0], d.factor * c[1])
    if isinstance(d, MinkowskiCombo):
        parts = [_as_convex(c) for c in d.children]
        if any(p is None for p in parts):
            return None
        return _combine_convex(parts, d.weights)
    return None


def _start_index(V):
    return int(np.lexsort((V[:, 0], V[:, 1]))[0])


def _drop_collinear(V, tol=1e-12):
    if len(V) < 3:
        return V
    changed = True
    while changed and len(V) >= 3:
        cr = _convex_cross(V)
        scale = np.max(np.abs(V)) + 1.0
        # cross[k] is the turn at vertex k+1
        bad = np.nonzero(np.abs(cr) <= tol * scale * scale)[0]
        changed = bad.size > 0
        if changed:
            V = np.delete(V, (bad[0] + 1) % len(V), axis=0)
    return V


def _polygon_sum(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Minkowski sum of convex CCW polygons (or points) by edge merging."""
    if len(P) == 1:
        return Q + P[0]
    if len(Q) == 1:
        return P + Q[0]
    P = np.roll(P, -_start_index(P), axis=0)
    Q = np.roll(Q, -_start_index(Q), axis=0)
    eP = np.roll(P, -1, axis=0) - P
    eQ = np.roll(Q, -1, axis=0) - Q
    out = [P[0] + Q[0]]
    i = j = 0
    while i < len(eP) or j < len(eQ):
        if i == len(eP):
            e = eQ[j]; j += 1
        elif j == len(eQ):
            e = eP[i]; i += 1
        else:
            cr = eP[i][0] * eQ[j][1] - eP[i][1] * eQ[j][0]
            if cr > 0:
                e = eP[i]; i += 1
            elif cr < 0:
                e = eQ[j]; j += 1
            else:
                e = eP[i] + eQ[j]; i += 1; j += 1
        out.append(out[-1] + e)
    return _drop_collinear(np.array(out[:-1]))


def _combine_convex(parts, weights) -> tuple[np.ndarray, float]:
    core = np.zeros((1, 2))
    r = 0.0
    for (V, rad), t in zip(parts, weights):
        core = _polygon_sum(core, t * V)
        r += t * rad
    return core, r


def _from_convex(V: np.ndarray, r: float):
    if len(V) == 1:
        return Disc(tuple(V[0]), r)
    if r == 0:
        return ConvexPolygon(tuple(map(tuple, V)))
    return RoundedPolygon(tuple(map(tuple, V)), r)


def minkowski_combine(domains: Sequence, weights: Sequence[float]):
    """Convex Minkowski combination sum_i t_i * domains[i].

    Discs, convex polygons and their combinations are summed exactly; any
    other input yields a :class:`MinkowskiCombo` node that is resolved on a
    grid when rasterized.
    """
    domains = tuple(domains)
    weights = tuple(float(w) for w in weights)
    _check_weights(weights, len(domains))
    if len(domains) == 1:
        return domains[0]
    parts = [_as_convex(d) for d in domains]
    if all(p is not None for p in parts):
        return _from_convex(*_combine_convex(parts, weights))
    return MinkowskiCombo(weights, domains)


def is_convex(d) -> bool:
    if _as_convex(d) is not None:
        return True
    if isinstance(d, Offset):
        return is_convex(d.child)
    return False


# ---------------------------------------------------------------------------
# signed distance
# ---------------------------------------------------------------------------

def _core_distance(V: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Signed distance to a convex polygon, or distance to a point core."""
    if len(V) == 1:
        return np.linalg.norm(x - V[0], axis=-1)
    A = V
    B = np.roll(V, -1, axis=0)
    e = B - A
    L = np.linalg.norm(e, axis=-1)
    n = np.stack([e[:, 1], -e[:, 0]], axis=-1) / L[:, None]  # outward normals
    rel = x[..., None, :] - A
    line = np.einsum("...kd,kd->...k", rel, n)
    inside_val = line.max(axis=-1)
    s = np.clip(np.einsum("...kd,kd->...k", rel, e) / (L * L), 0.0, 1.0)
    seg = np.linalg.norm(rel - s[..., None] * e, axis=-1).min(axis=-1)
    return np.where(inside_val <= 0, inside_val, seg)


def _sdf(d, x: np.ndarray) -> np.ndarray:
    if isinstance(d, Disc):
        return np.linalg.norm(x - np.array(d.center), axis=-1) - d.radius
    if isinstance(d, (ConvexPolygon, RoundedPolygon)):
        c = _as_convex(d)
        return _core_distance(c[0], x) - c[1]
    if isinstance(d, Scaled):
        return d.factor * _sdf(d.child, x / d.factor)
    if isinstance(d, Offset):
        return _sdf(d.child, x) + d.r
    if isinstance(d, SdfGrid):
        return _sdf_grid_eval(d, x, strict=True)
    if isinstance(d, MinkowskiCombo):
        c = _as_convex(d)
        if c is not None:
            return _core_distance(c[0], x) - c[1]
        return _sdf(resolve_combo(d), x)
    raise DomainError(f"unsupported domain variant {type(d).__name__}")


def _sdf_grid_eval(d: SdfGrid, x: np.ndarray, strict: bool) -> np.ndarray:
    nx, ny = d.values.shape
    s = (x[..., 0] - d.origin[0]) / d.h
    r = (x[..., 1] - d.origin[1]) / d.h
    eps = 1e-9
    outside = (s < -eps) | (r < -eps) | (s > nx - 1 + eps) | (r > ny - 1 + eps)
    if strict and np.any(outside):
        raise OutOfRangeError("query point outside the SDF grid extent")
    sc = np.clip(s, 0, nx - 1)
    rc = np.clip(r, 0, ny - 1)
    val = ndimage.map_coordinates(d.values, [sc.ravel(), rc.ravel()], order=1, mode="nearest").reshape(sc.shape)
    if not strict:
        # outside the sampled extent, continue 1-Lipschitz from the clamped point
        val = val + d.h * np.hypot(s - sc, r - rc)
    return val


def signed_distance(domain, x):
    """Signed distance (negative inside).  ``x`` may be a point or an (..., 2) array."""
    x = np.asarray(x, dtype=float)
    out = _sdf(domain, x)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# bounding boxes and grids
# ---------------------------------------------------------------------------

def bounding_box(d) -> tuple[float, float, float, float]:
    if isinstance(d, Disc):
        (cx, cy), r = d.center, d.radius
        return cx - r, cy - r, cx + r, cy + r
    if isinstance(d, (ConvexPolygon, RoundedPolygon)):
        V = np.array(d.vertices)
        r = getattr(d, "radius", 0.0)
        return V[:, 0].min() - r, V[:, 1].min() - r, V[:, 0].max() + r, V[:, 1].max() + r
    if isinstance(d, Scaled):
        b = bounding_box(d.child)
        return tuple(d.factor * v for v in b)
    if isinstance(d, Offset):
        return bounding_box(d.child)
    if isinstance(d, MinkowskiCombo):
        boxes = np.array([bounding_box(c) for c in d.children])
        return tuple(np.asarray(d.weights) @ boxes)
    if isinstance(d, SdfGrid):
        ii, jj = np.nonzero(d.values < 0)
        ox, oy = d.origin
        return (ox + (ii.min() - 1) * d.h, oy + (jj.min() - 1) * d.h,
                ox + (ii.max() + 1) * d.h, oy + (jj.max() + 1) * d.h)
    raise DomainError(f"unsupported domain variant {type(d).__name__}")


@dataclass(frozen=True, eq=False)
class Grid2D:
    """Uniform lattice; node (i, j) sits at origin + h*(i, j).  Arrays have shape (nx, ny)."""
    origin: tuple
    h: float
    nx: int
    ny: int
    mask: np.ndarray = field(repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.nx, self.ny

    @property
    def index_origin(self) -> tuple[int, int]:
        return int(round(self.origin[0] / self.h)), int(round(self.origin[1] / self.h))

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        xs = self.origin[0] + self.h * np.arange(self.nx)
        ys = self.origin[1] + self.h * np.arange(self.ny)
        return np.meshgrid(xs, ys, indexing="ij")

    def points(self) -> np.ndarray:
        X, Y = self.coords()
        return np.stack([X, Y], axis=-1)

    def node_xy(self, i: int, j: int) -> np.ndarray:
        return np.array([self.origin[0] + i * self.h, self.origin[1] + j * self.h])

    @property
    def n_interior(self) -> int:
        return int(self.mask.sum())

    def area(self) -> float:
        return self.n_interior * self.h ** 2

    def with_mask(self, mask: np.ndarray) -> "Grid2D":
        return Grid2D(self.origin, self.h, self.nx, self.ny, np.asarray(mask, dtype=bool))


def lattice_grid(box, h: float, padding: float, node_budget: int = NODE_BUDGET) -> Grid2D:
    """Grid aligned with the global lattice hZ^2 that covers ``box`` plus padding."""
    if not h > 0:
        raise DomainError(f"grid spacing must be positive, got {h}")
    xmin, ymin, xmax, ymax = box
    i0 = int(np.floor((xmin - padding) / h))
    j0 = int(np.floor((ymin - padding) / h))
    i1 = int(np.ceil((xmax + padding) / h))
    j1 = int(np.ceil((ymax + padding) / h))
    nx, ny = i1 - i0 + 1, j1 - j0 + 1
    if nx * ny > node_budget:
        raise ResourceError(f"grid of {nx}x{ny} nodes exceeds the node budget {node_budget}")
    return Grid2D((i0 * h, j0 * h), float(h), nx, ny, np.zeros((nx, ny), dtype=bool))


def sdf_on_grid(domain, grid: Grid2D) -> np.ndarray:
    """Signed distance sampled at every node of ``grid``."""
    pts = grid.points()
    if isinstance(domain, SdfGrid):
        return _sdf_grid_eval(domain, pts, strict=False)
    if isinstance(domain, Offset):
        return sdf_on_grid(domain.child, grid) + domain.r
    if isinstance(domain, Scaled) and _as_convex(domain) is None:
        k = domain.factor
        inner = lattice_grid(bounding_box(domain.child), grid.h / k, 3 * grid.h / k)
        child = SdfGrid(sdf_on_grid(domain.child, inner), inner.origin, inner.h)
        return k * _sdf_grid_eval(child, pts / k, strict=False)
    if isinstance(domain, MinkowskiCombo) and _as_convex(domain) is None:
        return _combo_sdf(domain, grid)
    out = np.empty(grid.shape)
    # chunk rows to bound the temporary (nodes x edges) arrays
    step = max(1, 200_000 // max(grid.ny, 1))
    for s in range(0, grid.nx, step):
        out[s:s + step] = _sdf(domain, pts[s:s + step])
    return out


def _combo_sdf(d: MinkowskiCombo, grid: Grid2D) -> np.ndarray:
    """Weighted infimal convolution of the children's SDFs, folded pairwise.

    Its zero sublevel set is exactly the Minkowski combination; the values
    are 1-Lipschitz and agree with the true distance for convex summands.
    """
    from ._kernels import infimal_convolution_arrays

    h = grid.h
    acc_w = d.weights[0]
    acc_dom = d.children[0]
    g0 = lattice_grid(bounding_box(acc_dom), h, 3 * h)
    acc = (sdf_on_grid(acc_dom, g0), g0.origin)
    acc_box = np.array(bounding_box(acc_dom))
    for w_i, child in zip(d.weights[1:], d.children[1:]):
        tot = acc_w + w_i
        t = w_i / tot
        g1 = lattice_grid(bounding_box(child), h, 3 * h)
        s1 = sdf_on_grid(child, g1)
        acc_box = (1 - t) * acc_box + t * np.array(bounding_box(child))
        last = child is d.children[-1]
        gout = grid if last else lattice_grid(tuple(acc_box), h, 3 * h)
        P = gout.points().reshape(-1, 2)
        vals, _, _ = infimal_convolution_arrays(acc[0], acc[1], h, s1, g1.origin, h, t, P[:, 0], P[:, 1])
        vals = vals.reshape(gout.shape)
        # nodes unreachable from the sampled children lie well outside
        vals[~np.isfinite(vals)] = np.nanmax(np.where(np.isfinite(vals), vals, np.nan)) + h
        acc = (vals, gout.origin)
        acc_w = tot
    return acc[0]


@functools.lru_cache(maxsize=32)
def resolve_combo(d: MinkowskiCombo, h: Optional[float] = None) -> SdfGrid:
    """Sample a non-convex Minkowski combination as an :class:`SdfGrid`."""
    box = bounding_box(d)
    if h is None:
        h = max(box[2] - box[0], box[3] - box[1]) / 128
    g = lattice_grid(box, h, 4 * h)
    return SdfGrid(_combo_sdf(d, g), g.origin, h)


def rasterize(domain, h: float, padding: Optional[float] = None, node_budget: int = NODE_BUDGET,
              require_connected: bool = True):
    """Sample the domain on a lattice grid.

    Returns ``(grid, sdf)`` where ``grid.mask`` marks interior nodes
    (sdf < -h/2) and ``sdf`` is an (nx, ny) array.
    """
    if padding is None:
        padding = 3 * h
    if not h > 0:
        raise DomainError(f"grid spacing must be positive, got {h}")
    if padding < h:
        raise DomainError("padding must be at least one grid spacing")
    grid = lattice_grid(bounding_box(domain), h, padding, node_budget)
    sdf = sdf_on_grid(domain, grid)
    mask = sdf < -h / 2
    if require_connected:
        _, ncomp = ndimage.label(mask)
        if ncomp != 1:
            raise DomainError(f"interior mask has {ncomp} connected components (need exactly 1)")
    return grid.with_mask(mask), sdf


def exterior_sphere_kappa(domain) -> Optional[float]:
    """Reciprocal of a uniform exterior-sphere radius; 0 for convex domains.

    Returns None ("unknown") when no bound is available, e.g. for sampled
    SDF grids and for combinations with non-convex summands.
    """
    if is_convex(domain):
        return 0.0
    if isinstance(domain, Scaled):
        k = exterior_sphere_kappa(domain.child)
        return None if k is None else k / domain.factor
    if isinstance(domain, Offset):
        k = exterior_sphere_kappa(domain.child)
        return None if k is None else k / (1.0 + domain.r * k)
    return None


def inward_offset(domain, r: float):
    """The offset domain {sdf < -r}; r = 0 returns the domain itself."""
    return domain if r == 0 else Offset(r, domain)


def stadium_complement(outer_radius: float = 1.0, half_length: float = 0.3, thickness: float = 0.2,
                       h: float = 1 / 256) -> SdfGrid:
    """Disc with a stadium-shaped hole: a non-convex domain with a uniform exterior sphere.

    The hole's boundary has curvature 1/thickness, so the exterior-sphere
    radius equals ``thickness``.
    """
    outer = Disc((0.0, 0.0), outer_radius)
    g = lattice_grid(bounding_box(outer), h, 8 * h)
    P = g.points()
    a = np.array([-half_length, 0.0])
    b = np.array([half_length, 0.0])
    e = b - a
    s = np.clip(((P - a) @ e) / (e @ e), 0, 1)
    d_seg = np.linalg.norm(P - a - s[..., None] * e, axis=-1) - thickness
    vals = np.maximum(_sdf(outer, P), -d_seg)
    return SdfGrid(vals, g.origin, h)
