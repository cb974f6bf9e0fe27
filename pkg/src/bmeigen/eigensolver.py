"""Principal eigenpairs F(Du, D^2u) = lambda |u|^alpha u, u = 0 on the boundary.

The discrete problem is solved by a nonlinear inverse power method: each
outer step freezes the monotone scheme at the current iterate (edge
conductivities for the p-Laplacian, the active direction choice for the
normalized and Pucci operators), solves the resulting M-matrix system
against u_k^(alpha+1), and renormalises.  Radial shooting oracles, residual
statistics and boundary/Hölder diagnostics live here too.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .geometry import DomainError, Grid2D, inward_offset, rasterize
from .grid import DirectionSet, GridField, Stencil, apply_F, scheme_weights
from .operators import OperatorSpec

log = logging.getLogger(__name__)


class NonConvergenceError(RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class OracleError(RuntimeError):
    pass


@dataclass
class SolverParams:
    outer_tol: float = 1e-8
    inner_tol: float = 1e-10
    max_outer: int = 400
    max_inner: int = 200_000
    safety: float = 0.9
    dirs: DirectionSet = field(default_factory=DirectionSet)
    degenerate_tol: Optional[float] = None
    u_tol: float = 1e-6
    inner: str = "direct"
    damping: Optional[float] = None
    freeze_after: Optional[int] = 60

    def __post_init__(self):
        if not (self.outer_tol > 0 and self.inner_tol > 0 and self.u_tol > 0):
            raise ValueError("tolerances must be positive")
        if not 0 < self.safety <= 1:
            raise ValueError("safety factor must lie in (0, 1]")
        if self.inner not in ("direct", "relax"):
            raise ValueError("inner must be 'direct' or 'relax'")
        if self.damping is not None and not 0 <= self.damping < 1:
            raise ValueError("damping must lie in [0, 1)")
        if self.freeze_after is not None and self.freeze_after < 1:
            raise ValueError("freeze_after must be a positive iteration count or None")

    def damping_for(self, op: OperatorSpec) -> float:
        """Explicit damping, or the default: frozen conductivities |Du|^(p-2) make the
        undamped iteration oscillate for p > 2 with a contraction factor near
        -(p-2), which the mix (p-2)/(p-1) of the previous iterate cancels."""
        if self.damping is not None:
            return self.damping
        if op.kind == "p_laplacian" and op.p > 2:
            return (op.p - 2) / (op.p - 1)
        return 0.0


def _discrete_policy(op: OperatorSpec) -> bool:
    """Operators whose linearisation picks directions from a finite set and can cycle between choices."""
    return op.kind == "pucci_min" or (op.kind == "normalized_p_laplacian" and op.p != 2.0)


@dataclass(eq=False)
class EigenResult:
    lam: float
    eigenfunction: GridField
    residual: dict
    outer_iterations: int
    inner_steps: int
    converged: bool
    h: float
    op: OperatorSpec
    sdf: np.ndarray = field(repr=False)
    history: list = field(default_factory=list, repr=False)
    policy_frozen_at: Optional[int] = None

    @property
    def grid(self) -> Grid2D:
        return self.eigenfunction.grid

    def summary(self) -> dict:
        return {
            "lambda": self.lam,
            "h": self.h,
            "operator": self.op.to_dict(),
            "outer_iterations": self.outer_iterations,
            "inner_steps": self.inner_steps,
            "converged": self.converged,
            "policy_frozen_at": self.policy_frozen_at,
            "interior_nodes": int(self.grid.n_interior),
            "residual": self.residual,
        }


def _full(st: Stencil, u: np.ndarray) -> np.ndarray:
    vals = np.zeros(st.grid.shape)
    vals[st.I, st.J] = u
    return vals


def _inner_relax(op, st, rhs, y, params, dtol):
    """Explicit pseudo-time relaxation y <- y - dt (F(y) - rhs)."""
    steps = 0
    for steps in range(1, params.max_inner + 1):
        vals = _full(st, y)
        W, _ = scheme_weights(op, st, vals, "mean", dtol)
        diag = (W * st.coef).sum(axis=(0, 1))
        Fy, _ = apply_F(op, st, vals, "mean", dtol)
        r = Fy - rhs
        y = y - params.safety * r / diag.max()
        if np.max(np.abs(r)) <= params.inner_tol * max(1.0, np.max(np.abs(rhs))):
            break
    return y, steps


def _solve_on(op: OperatorSpec, st: Stencil, params: SolverParams, u0: Optional[np.ndarray] = None,
              sdf: Optional[np.ndarray] = None):
    alpha = op.alpha
    dtol = params.degenerate_tol if params.degenerate_tol is not None else st.grid.h
    if u0 is None:
        u0 = -sdf[st.I, st.J]
    u = np.maximum(u0, 0) / np.max(u0)
    lam_prev = np.nan
    lam = np.nan
    damping = params.damping_for(op)
    history = []
    lu = None
    inner_total = 0
    converged = False
    frozen_at = None
    it = 0
    for it in range(1, params.max_outer + 1):
        # a direction policy that still flips after freeze_after sweeps is
        # held fixed; the remaining iteration is a linear inverse iteration
        if (frozen_at is None and params.inner == "direct" and params.freeze_after is not None
                and it > params.freeze_after and _discrete_policy(op)):
            frozen_at = it
            log.info("%s: direction policy frozen at outer iteration %d", op.label, it)
        rhs = u ** (alpha + 1)
        if params.inner == "relax":
            y0 = u / (lam if np.isfinite(lam) else 1.0) ** (1 / (alpha + 1))
            y, steps = _inner_relax(op, st, rhs, y0, params, dtol)
            inner_total += steps
        else:
            if lu is None or not (frozen_at is not None or (op.kind == "p_laplacian" and op.p == 2.0)):
                W, _ = scheme_weights(op, st, _full(st, u), "mean", dtol)
                M = st.assemble(W).tocsc()
                lu = spla.splu(M)
            y = lu.solve(rhs)
            inner_total += 1
        ymax = np.max(y)
        if not ymax > 0:
            raise NonConvergenceError("inverse step lost positivity")
        # the linearisation is frozen at the normalised u_k, so y = u/lambda at
        # a fixed point; relaxation solves F(y) = u_k^(alpha+1) itself, whose
        # solution is lambda^(-1/(alpha+1)) u by homogeneity
        lam = 1.0 / ymax if params.inner == "direct" else ymax ** (-(alpha + 1))
        u_new = np.maximum(y / ymax, 0.0)
        if damping:
            u_new = (1 - damping) * u_new + damping * u
            u_new /= u_new.max()
        du = np.max(np.abs(u_new - u))
        u = u_new
        history.append(lam)
        if np.isfinite(lam_prev) and abs(lam - lam_prev) / lam < params.outer_tol and du < params.u_tol:
            converged = True
            break
        lam_prev = lam
    return lam, u, it, inner_total, converged, history, frozen_at


def principal_eigenpair(op: OperatorSpec, domain, h: float, params: Optional[SolverParams] = None,
                        u0: Optional[GridField] = None, raise_on_failure: bool = True) -> EigenResult:
    """Principal eigenvalue and sup-normalised positive eigenfunction on a rasterized domain."""
    params = params or SolverParams()
    grid, sdf = rasterize(domain, h)
    if grid.n_interior < 25:
        raise DomainError(f"only {grid.n_interior} interior nodes; need at least 25")
    st = Stencil(grid, params.dirs, sdf)
    init = None if u0 is None else u0.values[st.I, st.J]
    lam, u, it, inner, conv, hist, frozen_at = _solve_on(op, st, params, init, sdf)
    field_u = st.field(u, "u")
    dtol = params.degenerate_tol if params.degenerate_tol is not None else h
    res = _residual(op, st, field_u.values, lam, dtol)
    result = EigenResult(float(lam), field_u, res, it, inner, conv, float(h), op, sdf, hist, frozen_at)
    if not conv and raise_on_failure:
        raise NonConvergenceError(f"{op.label}: no convergence after {it} outer iterations", result)
    return result


def _stats(r: np.ndarray) -> dict:
    if r.size == 0:
        return {"max": 0.0, "mean": 0.0, "q99": 0.0, "count": 0}
    return {"max": float(np.max(r)), "mean": float(np.mean(r)),
            "q99": float(np.quantile(r, 0.99)), "count": int(r.size)}


def _residual(op, st: Stencil, values, lam, dtol) -> dict:
    Fu, _ = apply_F(op, st, values, "mean", dtol)
    u = values[st.I, st.J]
    r = np.abs(Fu - lam * np.abs(u) ** op.alpha * u)
    return {"interior": _stats(r[st.full]), "near_boundary": _stats(r[~st.full])}


def residual_stats(op: OperatorSpec, u: GridField, lam: float, dirs: DirectionSet = DirectionSet(),
                   degenerate_tol: Optional[float] = None, sdf: Optional[np.ndarray] = None) -> dict:
    """|discrete F(u) - lam u^(alpha+1)| over full-stencil and near-boundary nodes."""
    st = Stencil(u.grid, dirs, sdf)
    dtol = u.grid.h if degenerate_tol is None else degenerate_tol
    return _residual(op, st, u.values, lam, dtol)


# ---------------------------------------------------------------------------
# radial oracle
# ---------------------------------------------------------------------------

def _radial_rhs(op: OperatorSpec, lam: float):
    if op.kind == "p_laplacian":
        p = op.p

        def f(r, y):
            u, phi = y
            du = np.sign(phi) * abs(phi) ** (1 / (p - 1))
            return [du, -lam * abs(u) ** (p - 2) * u - phi / r]
        return f
    if op.kind == "normalized_p_laplacian":
        p = op.p

        def f(r, y):
            u, du = y
            return [du, -(p / (p - 1)) * (lam * u + du / (p * r))]
        return f
    lam_, Lam = op.lam, op.Lam

    def f(r, y):
        u, du = y
        s = du / r
        s = -lam * u - (lam_ * s if s > 0 else Lam * s)
        return [du, s / lam_ if s > 0 else s / Lam]
    return f


def _radial_start(op: OperatorSpec, lam: float, r0: float):
    if op.kind == "p_laplacian":
        q = 1 / (op.p - 1)
        phi = -lam * r0 / 2
        u = 1 - (lam / 2) ** q * r0 ** (1 + q) / (1 + q)
        return [u, phi]
    c = -lam if op.kind == "normalized_p_laplacian" else -lam / (2 * op.Lam)
    return [1 + c * r0 * r0 / 2, c * r0]


def radial_profile(op: OperatorSpec, lam: float, R: float, ode_tol: float = 1e-11, r0: Optional[float] = None):
    """Integrate the radial ODE from near 0 to R (stopping at the first zero of u)."""
    if r0 is None:
        r0 = 1e-6 * R
    event = lambda r, y: y[0]
    event.terminal = True
    event.direction = -1
    return solve_ivp(_radial_rhs(op, lam), (r0, R), _radial_start(op, lam, r0), method="DOP853",
                     rtol=ode_tol, atol=ode_tol * 1e-2, events=event, dense_output=True)


def _first_zero(op, lam, R, ode_tol):
    sol = radial_profile(op, lam, R, ode_tol)
    return sol.t_events[0][0] if sol.t_events[0].size else np.inf


def radial_eigenvalue_oracle(op: OperatorSpec, radius: float = 1.0, ode_tol: float = 1e-10,
                             lam_upper: float = 1e6) -> float:
    """Principal eigenvalue on the disc of given radius by shooting and bisection on lambda."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    lo, hi = 0.0, 1.0
    while _first_zero(op, hi, radius, ode_tol) >= radius:
        lo, hi = hi, 2 * hi
        if hi > lam_upper:
            raise OracleError(f"no sign change of u(R) for lambda up to {lam_upper}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _first_zero(op, mid, radius, ode_tol) < radius:
            hi = mid
        else:
            lo = mid
        if hi - lo <= ode_tol * hi:
            break
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# boundary behaviour
# ---------------------------------------------------------------------------

@dataclass
class BarrierFit:
    gamma: float
    M: float
    delta: float
    passed: bool
    ratio: float
    worst_location: tuple
    inconclusive: bool = False
    band_counts: tuple = ()

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "M": self.M, "delta": self.delta, "passed": self.passed,
                "ratio": self.ratio, "worst_location": list(self.worst_location),
                "inconclusive": self.inconclusive, "band_counts": list(self.band_counts)}


def barrier_check(u: GridField, sdf: np.ndarray, gamma: float, min_band_nodes: int = 5,
                  max_ratio: float = 1.5) -> BarrierFit:
    """Fit u <= M (d/delta)^gamma in the boundary layer d <= delta = min(0.1 inradius, 10h).

    Stability under halving delta compares the fitted M over the band
    (delta/4, delta/2] with that over (delta/2, delta]: a bounded M keeps the
    ratio at or below ``max_ratio``, while u that does not vanish at the
    boundary makes it grow like 2^gamma.
    """
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    g = u.grid
    mask = g.mask
    d = -sdf[mask]
    uv = u.values[mask]
    delta = min(0.1 * d.max(), 10 * g.h)
    pts = g.points()[mask]
    q = uv / np.maximum(d / delta, 1e-300) ** gamma
    layer = d <= delta
    outer = (d > delta / 2) & layer
    inner = (d > delta / 4) & (d <= delta / 2)
    counts = (int(outer.sum()), int(inner.sum()))
    if min(counts) < min_band_nodes:
        return BarrierFit(gamma, float("nan"), delta, False, float("nan"), (np.nan, np.nan), True, counts)
    M = float(q[layer].max())
    k = np.flatnonzero(layer)[np.argmax(q[layer])]
    M_out, M_in = q[outer].max(), q[inner].max()
    ratio = float(M_in / M_out) if M_out > 0 else (0.0 if M_in == 0 else np.inf)
    passed = bool(np.isfinite(M) and ratio <= max_ratio)
    return BarrierFit(gamma, M, float(delta), passed, ratio, tuple(map(float, pts[k])), False, counts)


@dataclass
class HolderFit:
    gamma: float
    H: float
    pairs: int
    h: float

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "H": self.H, "pairs": self.pairs, "h": self.h}


def holder_fit(u: GridField, gamma: float, pairs: int = 20_000, seed: int = 0) -> HolderFit:
    """H = max |u(x) - u(y)| / |x - y|^gamma over random pairs and all axis-neighbour pairs.

    Nodes adjacent to the interior (where u = 0) are included so that the
    boundary behaviour enters the estimate.
    """
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    g = u.grid
    v = np.where(np.isfinite(u.values), u.values, 0.0)
    h = g.h
    H = 0.0
    involved = g.mask.copy()
    involved[1:, :] |= g.mask[:-1, :]
    involved[:-1, :] |= g.mask[1:, :]
    involved[:, 1:] |= g.mask[:, :-1]
    involved[:, :-1] |= g.mask[:, 1:]
    for ax in (0, 1):
        dv = np.abs(np.diff(v, axis=ax))
        if ax == 0:
            sel = involved[1:, :] & involved[:-1, :]
        else:
            sel = involved[:, 1:] & involved[:, :-1]
        if sel.any():
            H = max(H, float(dv[sel].max()) / h ** gamma)
    rng = np.random.default_rng(seed)
    I, J = np.nonzero(involved)
    if I.size > 1 and pairs > 0:
        a = rng.integers(0, I.size, pairs)
        b = rng.integers(0, I.size, pairs)
        keep = a != b
        a, b = a[keep], b[keep]
        dist = h * np.hypot(I[a] - I[b], J[a] - J[b])
        dv = np.abs(v[I[a], J[a]] - v[I[b], J[b]])
        if dist.size:
            H = max(H, float(np.max(dv / dist ** gamma)))
    return HolderFit(gamma, H, int(pairs), h)


def holder_stable(coarse: HolderFit, fine: HolderFit, factor: float = 2.0) -> bool:
    """Refinement stability: the fitted constants agree within ``factor``."""
    if coarse.H == 0 and fine.H == 0:
        return True
    lo, hi = sorted([coarse.H, fine.H])
    return bool(lo > 0 and hi / lo <= factor)


def eigen_by_domain_approximation(op: OperatorSpec, domain, h, offsets: Sequence[float] = (0.2, 0.1, 0.05, 0.0),
                                  params: Optional[SolverParams] = None):
    """Eigenpairs on inward offsets {sdf < -r_k} with r_k decreasing to 0.

    ``h`` may be a single spacing or one per offset.  Returns the results
    and a report on monotonicity and on agreement of the last entry with
    the direct solve on the domain.
    """
    params = params or SolverParams()
    offsets = [float(r) for r in offsets]
    if any(b >= a for a, b in zip(offsets, offsets[1:])) or offsets[-1] != 0.0 or min(offsets) < 0:
        raise ValueError("offsets must decrease strictly to 0")
    hs = list(h) if np.ndim(h) else [float(h)] * len(offsets)
    if len(hs) != len(offsets):
        raise ValueError("need one grid spacing per offset")
    results = [principal_eigenpair(op, inward_offset(domain, r), hk, params) for r, hk in zip(offsets, hs)]
    lams = [r.lam for r in results]
    violations = []
    for k in range(1, len(lams)):
        tol = 3 * params.outer_tol * lams[k]
        if lams[k] > lams[k - 1] + tol:
            violations.append(k)
    direct = results[-1] if hs[-1] == hs[0] or len(set(hs)) == 1 else principal_eigenpair(op, domain, hs[-1], params)
    rel = abs(lams[-1] - direct.lam) / direct.lam
    report = {
        "offsets": offsets,
        "lambdas": lams,
        "monotone": not violations,
        "violations": violations,
        "direct_lambda": direct.lam,
        "final_rel_error": rel,
        "passed": (not violations) and rel <= 0.02,
    }
    return results, report
