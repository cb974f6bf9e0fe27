import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bmeigen.geometry import Disc, Grid2D, rasterize
from bmeigen.grid import (DirectionSet, GridField, Stencil, StencilOverreachError, apply_F, apply_G,
                          consistency_errors, convergence_rate, directional_second_difference, discrete_F,
                          discrete_gradient, scheme_weights)
from bmeigen.operators import NormalizedPLaplacian, PLaplacian, PucciMinimal, eval_F, eval_G

OPS = [PLaplacian(1.5), PLaplacian(2), PLaplacian(3), NormalizedPLaplacian(2), NormalizedPLaplacian(3),
       PucciMinimal(1, 2)]


def _box(n=21, h=0.1):
    return Grid2D((-h * (n // 2), -h * (n // 2)), h, n, n, np.ones((n, n), bool))


def test_direction_set_validation():
    d = DirectionSet(8, 2)
    assert len(d.offsets) == 8 and d.reach == 2
    for (p, q), (r, s) in d.pairs:
        assert p * r + q * s == 0
    with pytest.raises(ValueError):
        DirectionSet(6, 2)
    with pytest.raises(ValueError):
        DirectionSet(16, 1)


def test_second_difference_exact_on_quadratic():
    g = _box()
    A = np.array([[1.3, -0.4], [-0.4, 0.7]])
    f = GridField.from_function(g, lambda X, Y: 0.5 * (A[0, 0] * X * X + 2 * A[0, 1] * X * Y + A[1, 1] * Y * Y))
    for o in ((1, 0), (1, 1), (2, 1), (-1, 2)):
        e = np.array(o, float)
        assert directional_second_difference(f, (10, 10), o) == pytest.approx(e @ A @ e / (e @ e), rel=1e-9)
    assert discrete_gradient(f, (10, 10)) == pytest.approx([0, 0], abs=1e-12)


def test_overreach_raises():
    g = _box(5)
    f = GridField(g, np.zeros(g.shape))
    with pytest.raises(StencilOverreachError):
        directional_second_difference(f, (0, 2), (1, 0))


@pytest.mark.parametrize("op", OPS, ids=str)
def test_monotone_assembly(op):
    """Frozen-coefficient matrix has nonnegative diagonal and nonpositive off-diagonal entries."""
    g, sdf = rasterize(Disc((0, 0), 1), 1 / 16)
    st_ = Stencil(g, DirectionSet(), sdf)
    X, Y = g.coords()
    u = np.where(g.mask, np.cos(np.pi * np.hypot(X, Y) / 2) + 0.1 * X, 0.0)
    W, _ = scheme_weights(op, st_, u, "mean")
    assert np.all(W >= 0)
    M = st_.assemble(W).tocoo()
    off = M.row != M.col
    assert np.all(M.data[off] <= 1e-12)
    assert np.all(M.diagonal() >= -1e-12)


@pytest.mark.parametrize("op", [PLaplacian(2), PucciMinimal(1, 2)], ids=str)
def test_quadratic_exactness(op):
    # D^2 f diagonal in the axis frame, which belongs to every direction set
    g = _box()
    f = GridField.from_function(g, lambda X, Y: 1.5 * X * X - 0.5 * Y * Y)
    got = discrete_F(op, f, (10, 10))
    assert got == pytest.approx(eval_F(op, [0, 0], np.diag([3.0, -1.0])), abs=1e-9)


def test_apply_G_exact_on_quadratics():
    g = _box()
    A = np.array([[0.8, 0.3], [0.3, -0.6]])
    b = np.array([0.4, -0.2])
    f = GridField.from_function(g, lambda X, Y: b[0] * X + b[1] * Y + 0.5 * (A[0, 0] * X * X + 2 * A[0, 1] * X * Y
                                                                             + A[1, 1] * Y * Y))
    st_ = Stencil(g)
    for op in OPS:
        G, _ = apply_G(op, st_, f.values)
        k = np.flatnonzero((st_.I == 10) & (st_.J == 10))[0]
        assert G[k] == pytest.approx(eval_G(op, b, A), rel=1e-9, abs=1e-9)


def _aligned():
    a, b = np.array([1.0, 2.0]), np.array([2.0, -1.0])

    def f(X, Y):
        return np.exp(0.5 * (X + 2 * Y)) - (2 * X - Y) ** 2

    def grad(P):
        e = np.exp(0.5 * (P[:, 0] + 2 * P[:, 1]))
        q = 2 * (2 * P[:, 0] - P[:, 1])
        return np.column_stack([0.5 * e - 2 * q, e + q])

    def hess(P):
        e = 0.25 * np.exp(0.5 * (P[:, 0] + 2 * P[:, 1]))
        return e[:, None, None] * np.outer(a, a)[None] - 2 * np.outer(b, b)[None]

    return f, grad, hess


@pytest.mark.parametrize("op", OPS, ids=str)
def test_consistency_rate_on_aligned_field(op):
    hs = (1 / 16, 1 / 32, 1 / 64)
    pts = np.array([(i / 16, 2 * i / 16) for i in range(1, 8)])
    errs = consistency_errors(op, *_aligned(), pts, hs)
    assert convergence_rate(hs, errs) >= 0.9
    assert errs[-1] < errs[0]


def test_convergence_rate_slope():
    hs = np.array([0.1, 0.05, 0.025])
    assert convergence_rate(hs, 3 * hs ** 2) == pytest.approx(2.0)


@settings(max_examples=20, deadline=None)
@given(c=st.floats(-2, 2), s=st.floats(0.1, 3))
def test_F_translation_and_scaling(c, s):
    # adding a constant does not change F; scaling u by s scales F by s^(alpha+1)
    g, sdf = rasterize(Disc((0, 0), 1), 1 / 8)
    st_ = Stencil(g)
    X, Y = g.coords()
    u = np.where(g.mask, 1 - X ** 2 - 0.5 * Y ** 2 + 0.3 * X, 0.0)
    for op in (PLaplacian(3), PucciMinimal(1, 2)):
        F1, _ = apply_F(op, st_, u, degenerate_tol=0.0)
        F2, _ = apply_F(op, st_, u + c, degenerate_tol=0.0)
        F3, _ = apply_F(op, st_, s * u, degenerate_tol=0.0)
        sel = st_.full
        assert np.allclose(F1[sel], F2[sel], rtol=1e-8, atol=1e-8)
        assert np.allclose(F3[sel], s ** (op.alpha + 1) * F1[sel], rtol=1e-8, atol=1e-8)
