import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bmeigen.geometry import (ConvexPolygon, Disc, DomainError, InvalidWeightsError, MinkowskiCombo, Offset,
                              ResourceError, Scaled, Square, exterior_sphere_kappa, is_convex, minkowski_combine,
                              rasterize, signed_distance, stadium_complement)


def test_disc_sdf():
    P = np.array([[0.0, 0.0], [2.0, 0.0], [0.6, 0.8]])
    assert signed_distance(Disc((0, 0), 1), P) == pytest.approx([-1.0, 1.0, 0.0], abs=1e-14)


def test_square_sdf_interior_and_corner():
    sq = Square(1)
    assert signed_distance(sq, np.array([[0.5, 0.5]]))[0] == pytest.approx(-0.5)
    assert signed_distance(sq, np.array([[2.0, 2.0]]))[0] == pytest.approx(np.sqrt(2))


def test_disc_combination_is_disc():
    d = minkowski_combine([Disc((0, 0), 1), Disc((2, 0), 3)], [0.25, 0.75])
    P = np.array([[1.5, 0.0], [1.5, 2.5], [5.0, 1.0]])
    ref = np.linalg.norm(P - [1.5, 0.0], axis=1) - 2.5
    assert signed_distance(d, P) == pytest.approx(ref, abs=1e-12)


def test_square_self_combination_and_scaling():
    sq = Square(1)
    d = minkowski_combine([sq, Scaled(2.0, sq)], [0.5, 0.5])
    P = np.random.default_rng(0).uniform(-0.5, 2.5, (200, 2))
    ref = signed_distance(Square(1.5), P)
    assert signed_distance(d, P) == pytest.approx(ref, abs=1e-12)


def _support(d, u, n=720):
    """max <x, u> over boundary points located by bisection along rays from the origin."""
    ang = np.linspace(0, 2 * np.pi, n, endpoint=False)
    rays = np.column_stack([np.cos(ang), np.sin(ang)]) * 10
    lo, hi = np.zeros(n), np.ones(n)
    for _ in range(50):
        m = 0.5 * (lo + hi)
        inside = signed_distance(d, m[:, None] * rays) < 0
        lo, hi = np.where(inside, m, lo), np.where(inside, hi, m)
    return float(np.max((lo[:, None] * rays) @ u))


def test_support_function_is_linear():
    P, Q, t = Square(1, (-0.5, -0.5)), Disc((0.1, 0.0), 0.7), 0.3
    d = minkowski_combine([P, Q], [1 - t, t])
    for a in (0.0, 0.7, 2.0):
        u = np.array([np.cos(a), np.sin(a)])
        assert _support(d, u, 720) == pytest.approx((1 - t) * _support(P, u, 720) + t * _support(Q, u, 720),
                                                    abs=2e-3)


@settings(max_examples=25, deadline=None)
@given(t=st.floats(0.05, 0.95), r0=st.floats(0.2, 2), r1=st.floats(0.2, 2))
def test_disc_combination_radius_property(t, r0, r1):
    d = minkowski_combine([Disc((0, 0), r0), Disc((0, 0), r1)], [1 - t, t])
    assert signed_distance(d, np.zeros((1, 2)))[0] == pytest.approx(-((1 - t) * r0 + t * r1), rel=1e-12)


@pytest.mark.parametrize("w", [[0.5, 0.6], [-0.1, 1.1], [1.0]])
def test_invalid_weights(w):
    with pytest.raises((InvalidWeightsError, DomainError)):
        minkowski_combine([Disc((0, 0), 1), Square(1)], w)


def test_nonconvex_input_gives_lazy_combo():
    sc = stadium_complement(h=1 / 64)
    d = minkowski_combine([sc, Disc((0, 0), 1)], [0.5, 0.5])
    assert isinstance(d, MinkowskiCombo)
    assert not is_convex(sc)


def test_rasterize_mask_and_area():
    g, sdf = rasterize(Disc((0, 0), 1), 1 / 64)
    assert g.mask.sum() * g.h ** 2 == pytest.approx(np.pi, rel=0.02)
    assert np.all(sdf[g.mask] < -g.h / 2)
    # lattice alignment: nodes sit on h Z^2
    assert np.allclose(np.array(g.origin) / g.h, np.rint(np.array(g.origin) / g.h))


def test_rasterize_budget():
    with pytest.raises(ResourceError):
        rasterize(Disc((0, 0), 1), 1 / 64, node_budget=100)


def test_invalid_domains():
    with pytest.raises(DomainError):
        Disc((0, 0), -1)
    with pytest.raises(DomainError):
        ConvexPolygon(((0, 0), (1, 1), (1, 0), (0, 1)))
    with pytest.raises(DomainError):
        Offset(-0.1, Disc((0, 0), 1))


def test_exterior_sphere():
    assert exterior_sphere_kappa(Square(1)) == 0.0
    assert exterior_sphere_kappa(stadium_complement(h=1 / 64)) is None
