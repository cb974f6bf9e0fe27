import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bmeigen.convexity import (NonConvexMaskError, brute_force_infconv, convex_envelope, convex_envelope_midpoint,
                               infimal_convolution, infimal_convolution_many, log_concavity_check,
                               mask_is_lattice_convex, neg_log_transform, node_pair_infconv)
from bmeigen.geometry import Grid2D
from bmeigen.grid import GridField
from bmeigen.suites import two_hump_field


def box_field(f, n=21, half=1.5, radius=None, role="v"):
    h = 2 * half / (n - 1)
    X, Y = np.meshgrid(np.linspace(-half, half, n), np.linspace(-half, half, n), indexing="ij")
    mask = np.ones((n, n), bool) if radius is None else X ** 2 + Y ** 2 < radius ** 2
    g = Grid2D((-half, -half), h, n, n, mask)
    fill = np.inf if role == "v" else 0.0
    return GridField(g, np.where(mask, f(X, Y), fill), role)


Q0 = lambda x, y: (x - 0.2) ** 2 + 0.5 * y ** 2
Q1 = lambda x, y: 0.3 * (x + 0.1) ** 2 + np.cosh(y) - 1


@pytest.fixture
def pair():
    v0 = box_field(Q0, radius=1.5)
    v1 = box_field(Q1, radius=1.4)
    out = box_field(lambda x, y: 0 * x, radius=1.0).grid
    return v0, v1, out


@pytest.mark.parametrize("t", [0.2, 0.5, 0.8])
def test_matches_brute_force(pair, t):
    v0, v1, out = pair
    r = infimal_convolution(v0, v1, t, out)
    assert np.max(np.abs(r.w.values[out.mask] - brute_force_infconv(v0, v1, t, out))) <= 1e-12


@pytest.mark.parametrize("t", [0.2, 0.7])
def test_role_swap_matches_swapped_brute_force(pair, t):
    v0, v1, out = pair
    r = infimal_convolution(v0, v1, t, out, nodes="v1")
    ref = brute_force_infconv(v1, v0, 1 - t, out)
    assert np.max(np.abs(r.w.values[out.mask] - ref)) <= 1e-12
    # witnesses keep their roles: (1-t) x0 + t x1 = x
    P = out.points()[out.mask]
    assert np.allclose((1 - t) * r.x0 + t * r.x1, P, atol=1e-12)


def test_auto_picks_smaller_weight(pair):
    v0, v1, out = pair
    a = infimal_convolution(v0, v1, 0.3, out, nodes="auto")
    b = infimal_convolution(v0, v1, 0.3, out, nodes="v1")
    c = infimal_convolution(v0, v1, 0.7, out, nodes="auto")
    d = infimal_convolution(v0, v1, 0.7, out, nodes="v0")
    assert np.array_equal(a.w.values, b.w.values) and np.array_equal(c.w.values, d.w.values)


def _log_brute(v0, v1, t, out):
    """Exhaustive search with v1 read as -log of the bilinear interpolant of exp(-v1)."""
    from scipy.interpolate import RegularGridInterpolator

    g1 = v1.grid
    axes = (g1.origin[0] + g1.h * np.arange(g1.nx), g1.origin[1] + g1.h * np.arange(g1.ny))
    E = RegularGridInterpolator(axes, np.exp(-v1.values), bounds_error=False, fill_value=0.0)
    fin = np.isfinite(v0.values)
    X0, V0 = v0.grid.points()[fin], v0.values[fin]
    res = []
    for x in out.points()[out.mask]:
        e = E((x - (1 - t) * X0) / t)
        with np.errstate(divide="ignore"):
            res.append(np.min((1 - t) * V0 + t * np.where(e > 0, -np.log(e), np.inf)))
    return np.array(res)


def test_log_interpolation_matches_independent_search(pair):
    v0, v1, out = pair
    r = infimal_convolution(v0, v1, 0.5, out, interp="log")
    assert np.max(np.abs(r.w.values[out.mask] - _log_brute(v0, v1, 0.5, out))) <= 1e-12


def test_subdivision_never_worse(pair):
    v0, v1, out = pair
    coarse = infimal_convolution(v0, v1, 0.5, out, interp="log")
    fine = infimal_convolution(v0, v1, 0.5, out, interp="log", subdivide=4)
    assert np.all(fine.w.values[out.mask] <= coarse.w.values[out.mask] + 1e-14)


def test_quadratic_closed_form_refined():
    a0, a1, t = 1.0, 2.0, 0.5
    v0 = box_field(lambda x, y: a0 * (x * x + y * y) / 2, n=41, radius=1.5)
    v1 = box_field(lambda x, y: a1 * (x * x + y * y) / 2, n=41, radius=1.5)
    out = box_field(lambda x, y: 0 * x, n=41, radius=1.0).grid
    r = infimal_convolution(v0, v1, t, out, refine=True)
    P = out.points()[out.mask]
    assert np.max(np.abs(r.w.values[out.mask] - (2 / 3) * (P ** 2).sum(axis=1))) <= 1e-10


def test_lattice_search_bounded_by_node_pairs(pair):
    v0, v1, out = pair
    r = infimal_convolution(v0, v1, 0.5, out)
    npair = node_pair_infconv(v0, v1, 0.5, out)
    ok = np.isfinite(npair)
    assert np.all(r.w.values[out.mask][ok] <= npair[ok] + 1e-14)


@settings(max_examples=20, deadline=None)
@given(t=st.floats(0.1, 0.9), a=st.floats(0.2, 3), b=st.floats(-0.5, 0.5))
def test_convex_self_combination_fixed_point(t, a, b):
    v = box_field(lambda x, y: a * x * x + 0.5 * y * y + b * x, radius=1.4)
    w = infimal_convolution(v, v, t, v.grid).w.values[v.grid.mask]
    assert np.max(np.abs(w - v.values[v.grid.mask])) <= 1e-12


def test_many_equals_iterated_pair(pair):
    v0, v1, out = pair
    r2 = infimal_convolution_many([v0, v1], [0.6, 0.4], [out])
    r = infimal_convolution(v0, v1, 0.4, out)
    assert np.allclose(r2.values[out.mask], r.w.values[out.mask])


def test_invalid_modes(pair):
    v0, v1, out = pair
    for kw in ({"interp": "cubic"}, {"nodes": "both"}, {"subdivide": 0}):
        with pytest.raises(ValueError):
            infimal_convolution(v0, v1, 0.5, out, **kw)
    with pytest.raises(ValueError):
        infimal_convolution(v0, v1, 1.0, out)


def test_neg_log_transform():
    u = box_field(lambda x, y: np.exp(-(x * x + y * y)), role="u", radius=1.2)
    v = neg_log_transform(u)
    m = u.grid.mask
    P = u.grid.points()[m]
    assert np.allclose(v.values[m], (P ** 2).sum(axis=1))
    assert np.all(np.isinf(v.values[~m]))


def test_convex_envelope():
    v = box_field(lambda x, y: np.minimum((x - 0.7) ** 2, (x + 0.7) ** 2) + y * y, n=15)
    env = convex_envelope(v)
    m = v.grid.mask
    assert np.all(env.values[m] <= v.values[m] + 1e-14)
    assert np.max(v.values[m] - env.values[m]) > 0.3  # the ridge between the wells is filled
    mid = convex_envelope_midpoint(v)
    assert np.allclose(mid.values[m], env.values[m], atol=1e-8)
    c = box_field(lambda x, y: x * x + y * y, n=15)
    assert np.allclose(convex_envelope(c).values, c.values)


def test_mask_convexity():
    m = np.zeros((9, 9), bool)
    m[2:7, 2:7] = True
    assert mask_is_lattice_convex(m)
    m[4, 4] = False
    assert not mask_is_lattice_convex(m)


def test_log_concavity_detects_two_humps():
    rep = log_concavity_check(two_hump_field(1 / 16))
    assert not rep["midpoint_passed"] and not rep["passed"]


def test_log_concavity_accepts_gaussian():
    u = box_field(lambda x, y: np.exp(-(x * x + 2 * y * y)), role="u", n=31)
    assert log_concavity_check(u, samples=4000)["passed"]


def test_log_concavity_requires_convex_mask():
    u = box_field(lambda x, y: 1 + 0 * x, role="u")
    u.grid.mask[10, 10] = False
    u.values[10, 10] = 0.0
    with pytest.raises(NonConvexMaskError):
        log_concavity_check(u)
