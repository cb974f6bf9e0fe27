"""Homogeneous degenerate elliptic operators F(xi, X) and their log-transformed G.

Three families are supported:

* ``p_laplacian``            F = -|xi|^(p-2) tr X - (p-2)|xi|^(p-4) <X xi, xi>
* ``normalized_p_laplacian`` F = -(1/p) tr X - ((p-2)/p) |xi|^-2 <X xi, xi>
* ``pucci_min``              F = -M^-_{lam,Lam}(X)

All evaluators are vectorised: ``xi`` has shape (..., 2) and ``X`` has shape
(..., 2, 2) (or is a :class:`SymMat2`).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

KINDS = ("p_laplacian", "normalized_p_laplacian", "pucci_min")


class SingularGradientError(ValueError):
    """Raised when an operator with singular xi-dependence is evaluated at xi = 0."""


class EllipticityError(ValueError):
    """Raised when an empirical ellipticity bound is not positive."""


class SymMat2(NamedTuple):
    xx: float
    xy: float
    yy: float

    def as_array(self) -> np.ndarray:
        return np.array([[self.xx, self.xy], [self.xy, self.yy]], dtype=float)

    def eigenvalues(self) -> tuple[float, float]:
        e1, e2 = sym_eigenvalues(np.asarray(self.as_array()))
        return float(e1), float(e2)


@dataclass(frozen=True)
class OperatorSpec:
    kind: str
    p: float = 2.0
    lam: float = 1.0
    Lam: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}; expected one of {KINDS}")
        if self.kind in ("p_laplacian", "normalized_p_laplacian") and not self.p > 1:
            raise ValueError(f"p must be > 1, got {self.p}")
        if self.kind == "pucci_min" and not (0 < self.lam <= self.Lam):
            raise ValueError(f"need 0 < lam <= Lam, got lam={self.lam}, Lam={self.Lam}")

    @property
    def alpha(self) -> float:
        return self.p - 2.0 if self.kind == "p_laplacian" else 0.0

    @property
    def ellipticity(self) -> tuple[float, float]:
        if self.kind == "p_laplacian":
            return min(1.0, self.p - 1.0), max(1.0, self.p - 1.0)
        if self.kind == "normalized_p_laplacian":
            return min(1.0, self.p - 1.0) / self.p, max(1.0, self.p - 1.0) / self.p
        return self.lam, self.Lam

    @property
    def convexity_grade(self) -> str:
        # linear-in-X families are C^2 in X; Pucci is only convex
        return "H3" if self.kind == "pucci_min" else "H3prime"

    @property
    def odd_in_X(self) -> bool:
        """Whether F(xi, -X) = -F(xi, X); false for Pucci unless lam == Lam."""
        return self.kind != "pucci_min" or self.lam == self.Lam

    @property
    def singular_in_xi(self) -> bool:
        return self.kind != "pucci_min" and self.p != 2.0

    @property
    def label(self) -> str:
        if self.kind == "p_laplacian":
            return f"p-Laplacian(p={self.p:g})"
        if self.kind == "normalized_p_laplacian":
            return f"normalized p-Laplacian(p={self.p:g})"
        return f"Pucci min(lam={self.lam:g}, Lam={self.Lam:g})"

    def to_dict(self) -> dict:
        if self.kind == "pucci_min":
            return {"kind": self.kind, "lam": self.lam, "Lam": self.Lam}
        return {"kind": self.kind, "p": self.p}


def PLaplacian(p: float) -> OperatorSpec:
    return OperatorSpec("p_laplacian", p=float(p))


def NormalizedPLaplacian(p: float) -> OperatorSpec:
    return OperatorSpec("normalized_p_laplacian", p=float(p))


def PucciMinimal(lam: float, Lam: float) -> OperatorSpec:
    return OperatorSpec("pucci_min", lam=float(lam), Lam=float(Lam))


def _as_matrix(X) -> np.ndarray:
    if isinstance(X, SymMat2):
        return X.as_array()
    return np.asarray(X, dtype=float)


def sym_eigenvalues(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form eigenvalues e1 >= e2 of symmetric 2x2 matrices (..., 2, 2)."""
    a = X[..., 0, 0]
    b = 0.5 * (X[..., 0, 1] + X[..., 1, 0])
    c = X[..., 1, 1]
    mean = 0.5 * (a + c)
    rad = np.hypot(0.5 * (a - c), b)
    return mean + rad, mean - rad


def pucci_weight(s, lam: float, Lam: float):
    """lam*s for s > 0, Lam*s for s < 0 (the scalar Pucci weighting)."""
    s = np.asarray(s, dtype=float)
    return np.where(s > 0, lam * s, Lam * s)


def eval_F(op: OperatorSpec, xi, X):
    """Evaluate F(xi, X). Raises SingularGradientError at xi = 0 when F is singular there."""
    xi = np.asarray(xi, dtype=float)
    X = _as_matrix(X)
    if op.kind == "pucci_min":
        e1, e2 = sym_eigenvalues(X)
        out = -(pucci_weight(e1, op.lam, op.Lam) + pucci_weight(e2, op.lam, op.Lam))
        return out if out.ndim else float(out)

    norm2 = np.einsum("...i,...i->...", xi, xi)
    tr = X[..., 0, 0] + X[..., 1, 1]
    p = op.p
    if p == 2.0:
        out = -tr if op.kind == "p_laplacian" else -0.5 * tr
        return out if np.ndim(out) else float(out)
    if np.any(norm2 == 0):
        raise SingularGradientError(f"{op.label} is singular at xi = 0")
    xXx = np.einsum("...i,...ij,...j->...", xi, X, xi)
    if op.kind == "p_laplacian":
        out = -norm2 ** ((p - 2) / 2) * tr - (p - 2) * norm2 ** ((p - 4) / 2) * xXx
    else:
        out = -tr / p - (p - 2) / p * xXx / norm2
    return out if np.ndim(out) else float(out)


def eval_G(op: OperatorSpec, xi, X):
    """G(xi, X) = -F(xi, xi (x) xi - X), the operator satisfied by -log u."""
    xi = np.asarray(xi, dtype=float)
    X = _as_matrix(X)
    outer = xi[..., :, None] * xi[..., None, :]
    return -eval_F(op, xi, outer - X) if np.ndim(xi) == 1 else -np.asarray(eval_F(op, xi, outer - X))


# ---------------------------------------------------------------------------
# Hypothesis validators
# ---------------------------------------------------------------------------

@dataclass
class CheckReport:
    name: str
    samples: int
    tol: float
    max_violation: float
    violations: int
    details: dict

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "samples": self.samples,
            "tol": self.tol,
            "max_violation": self.max_violation,
            "violations": self.violations,
            "passed": self.passed,
            **self.details,
        }


OperatorLike = OperatorSpec | Callable


def _F_callable(op: OperatorLike) -> Callable:
    if isinstance(op, OperatorSpec):
        return lambda xi, X: np.asarray(eval_F(op, xi, X))
    return op


def _random_xi(rng, n, lo=0.1, hi=10.0):
    ang = rng.uniform(0, 2 * np.pi, n)
    r = np.exp(rng.uniform(np.log(lo), np.log(hi), n))
    return np.stack([r * np.cos(ang), r * np.sin(ang)], axis=-1)


def _random_sym(rng, n, lo=0.1, hi=10.0):
    A = rng.normal(size=(n, 2, 2))
    A = 0.5 * (A + np.swapaxes(A, -1, -2))
    norms = np.linalg.norm(A, axis=(-2, -1))
    target = np.exp(rng.uniform(np.log(lo), np.log(hi), n))
    return A * (target / norms)[:, None, None]


def check_homogeneity(op: OperatorSpec, samples: int = 10_000, tol: float = 1e-10, seed: int = 0) -> CheckReport:
    """Sample F(t xi, mu X) = |t|^alpha mu F(xi, X).

    mu is drawn from [-5, 5] for operators odd in X and from [0, 5] for the
    Pucci operator, which is only positively homogeneous in X.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    xi = _random_xi(rng, samples)
    X = _random_sym(rng, samples)
    t = rng.uniform(-5, 5, samples)
    t[np.abs(t) < 1e-3] = 1e-3
    mu_lo = -5.0 if op.odd_in_X else 0.0
    mu = rng.uniform(mu_lo, 5.0, samples)
    lhs = np.asarray(eval_F(op, t[:, None] * xi, mu[:, None, None] * X))
    rhs = np.abs(t) ** op.alpha * mu * np.asarray(eval_F(op, xi, X))
    scale = np.maximum(np.abs(lhs) + np.abs(rhs), 1e-300)
    rel = np.abs(lhs - rhs) / scale
    rel[(lhs == 0) & (rhs == 0)] = 0.0
    bad = rel > tol
    return CheckReport("homogeneity", samples, tol, float(rel.max()), int(bad.sum()),
                       {"alpha": op.alpha, "mu_range": [mu_lo, 5.0]})


def check_ellipticity(op: OperatorSpec, samples: int = 10_000, seed: int = 0) -> tuple[float, float]:
    """Empirical (c, C) from (F(xi,X) - F(xi,X+Y)) / (|xi|^alpha tr Y) over PSD Y."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    xi = _random_xi(rng, samples)
    X = _random_sym(rng, samples)
    B = rng.normal(size=(samples, 2, 2))
    Y = B @ np.swapaxes(B, -1, -2)
    # a third of the samples are rank one, where the extremes of (H2) live
    k = samples // 3
    v = rng.normal(size=(k, 2))
    Y[:k] = v[:, :, None] * v[:, None, :]
    trY = Y[:, 0, 0] + Y[:, 1, 1]
    keep = trY > 1e-12
    diff = np.asarray(eval_F(op, xi, X)) - np.asarray(eval_F(op, xi, X + Y))
    ratio = diff[keep] / (np.linalg.norm(xi[keep], axis=-1) ** op.alpha * trY[keep])
    c_est, C_est = float(ratio.min()), float(ratio.max())
    if c_est <= 0:
        raise EllipticityError(f"{op.label}: non-positive ellipticity bound {c_est:.3e}")
    return c_est, C_est


def check_convexity_in_X(op: OperatorLike, samples: int = 10_000, tol: float = 1e-10, seed: int = 0) -> CheckReport:
    """Sample F(xi, s X1 + (1-s) X2) <= s F(xi, X1) + (1-s) F(xi, X2) + tol.

    ``op`` may be an OperatorSpec or any vectorised callable F(xi, X); the
    tolerance is scaled by max(1, |F(X1)| + |F(X2)|).
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    F = _F_callable(op)
    rng = np.random.default_rng(seed)
    xi = _random_xi(rng, samples)
    X1 = _random_sym(rng, samples)
    X2 = _random_sym(rng, samples)
    s = rng.uniform(0, 1, samples)
    F1, F2 = F(xi, X1), F(xi, X2)
    mid = F(xi, s[:, None, None] * X1 + (1 - s)[:, None, None] * X2)
    excess = (mid - (s * F1 + (1 - s) * F2)) / np.maximum(1.0, np.abs(F1) + np.abs(F2))
    bad = excess > tol
    return CheckReport("convexity_in_X", samples, tol, float(max(excess.max(), 0.0)), int(bad.sum()), {})


def flipped_pucci(lam: float, Lam: float) -> Callable:
    """-M^+_{lam,Lam}: the maximal Pucci operator with the same sign convention (concave in X)."""
    def F(xi, X):
        e1, e2 = sym_eigenvalues(np.asarray(X, dtype=float))
        return -(np.where(e1 > 0, Lam * e1, lam * e1) + np.where(e2 > 0, Lam * e2, lam * e2))
    return F
